"""Tests for the federated loop: selection, local training, FedAvg, rounds."""

import numpy as np
import pytest

from fedsim import federation, nn
from fedsim.data import ClientShard, Dataset, PoisonSpec, synthesize
from fedsim.defense import DefenseConfig
from fedsim.federation import FederationConfig
from fedsim.privacy import LdpConfig


def small_task(noise_std=1.0, seed=0):
    train = synthesize(4, 30, 8, 6.0, seed=[seed, 1000], noise_std=noise_std)
    test = synthesize(4, 10, 8, 6.0, seed=[seed, 1001], noise_std=noise_std)
    return train, test


def small_config(**overrides):
    base = dict(
        total_clients=8,
        clients_per_round=4,
        global_epochs=4,
        client_epochs=2,
        client_lr=0.5,
        batch_size=8,
        poison_spec=PoisonSpec(1, 2),
        repeats=2,
    )
    base.update(overrides)
    return FederationConfig(**base)


# --- select_clients ---------------------------------------------------------

def test_select_clients_distinct_sorted():
    rng = np.random.default_rng(0)
    for _ in range(50):
        chosen = federation.select_clients(rng, 20, 7)
        assert len(set(chosen)) == 7
        assert list(chosen) == sorted(chosen)
        assert all(0 <= c < 20 for c in chosen)


def test_select_clients_rejects_oversized_draw():
    with pytest.raises(ValueError):
        federation.select_clients(np.random.default_rng(0), 3, 4)


def test_selection_is_roughly_uniform():
    rng = np.random.default_rng(1)
    counts = np.zeros(10)
    for _ in range(2000):
        for c in federation.select_clients(rng, 10, 3):
            counts[c] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 0.1) < 0.015)


# --- fed_avg ----------------------------------------------------------------

def random_update(cid, rng, dims=(3, 4, 2)):
    return federation.ClientUpdate(cid, nn.init_params(dims, rng), 0.0)


def test_fed_avg_matches_naive_mean():
    rng = np.random.default_rng(0)
    updates = [random_update(i, rng) for i in range(7)]
    avg = federation.fed_avg(updates)
    for k in range(len(avg.weights)):
        naive = sum(u.weights.weights[k] for u in updates) / 7
        np.testing.assert_allclose(avg.weights[k], naive, atol=1e-12, rtol=0)
        naive_b = sum(u.weights.biases[k] for u in updates) / 7
        np.testing.assert_allclose(avg.biases[k], naive_b, atol=1e-12, rtol=0)


def test_fed_avg_order_invariant_bitwise():
    rng = np.random.default_rng(5)
    updates = [random_update(i, rng) for i in range(5)]
    a = federation.fed_avg(updates)
    b = federation.fed_avg(list(reversed(updates)))
    for wa, wb in zip(a.weights, b.weights):
        assert wa.tobytes() == wb.tobytes()


def test_fed_avg_single_update_is_identity():
    rng = np.random.default_rng(2)
    update = random_update(0, rng)
    avg = federation.fed_avg([update])
    for wa, wb in zip(avg.weights, update.weights.weights):
        np.testing.assert_array_equal(wa, wb)


def test_fed_avg_rejects_empty_and_mismatched():
    with pytest.raises(ValueError):
        federation.fed_avg([])
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        federation.fed_avg([random_update(0, rng), random_update(1, rng, dims=(3, 5, 2))])


# --- local_train --------------------------------------------------------------

def make_shard(rng, n=12, dim=4, classes=3, cid=0):
    ds = Dataset(rng.random((n, dim)), rng.integers(0, classes, size=n), classes)
    return ClientShard(cid, ds)


def test_local_train_zero_epochs_returns_global_weights():
    rng = np.random.default_rng(0)
    shard = make_shard(rng)
    model = nn.init_params((4, 3), rng)
    update = federation.local_train(model, shard, 0, 0.5, 4, LdpConfig(), np.random.default_rng(1))
    for wa, wb in zip(update.weights.weights, model.weights):
        np.testing.assert_array_equal(wa, wb)


def test_local_train_reports_loss_of_incoming_model():
    # The reported loss describes the global model before local fitting;
    # noise at the default scale (1e-4) is far below the check tolerance.
    rng = np.random.default_rng(3)
    shard = make_shard(rng)
    model = nn.init_params((4, 3), rng)
    incoming, _ = nn.softmax_cross_entropy(nn.forward(model, shard.data.features), shard.data.labels)
    update = federation.local_train(model, shard, 3, 0.5, 4, LdpConfig(), np.random.default_rng(7))
    assert update.noisy_loss == pytest.approx(incoming, abs=1e-2)
    trained, _ = nn.softmax_cross_entropy(
        nn.forward(update.weights, shard.data.features), shard.data.labels
    )
    assert trained < incoming  # training actually reduced the local loss


def test_local_train_rejects_empty_shard():
    model = nn.init_params((4, 3), np.random.default_rng(0))
    empty = ClientShard(0, Dataset(np.zeros((0, 4)), np.zeros(0, dtype=int), 3))
    with pytest.raises(ValueError):
        federation.local_train(model, empty, 1, 0.5, 4, LdpConfig(), np.random.default_rng(0))


# --- experiment loop ---------------------------------------------------------

def test_run_experiment_deterministic():
    train, test = small_task()
    cfg = small_config(malicious_fraction=0.25, defense=DefenseConfig(kind="kmeans"))
    a = federation.run_experiment(cfg, train, test)
    b = federation.run_experiment(cfg, train, test)
    assert a.runs == b.runs
    assert a.epoch_means == b.epoch_means
    assert a.mean_det_accuracy == b.mean_det_accuracy


def test_honest_baseline_improves_and_eliminates_nobody():
    train, test = small_task()
    cfg = small_config(global_epochs=6)
    report = federation.run_experiment(cfg, train, test)
    for run in report.runs:
        assert all(rec.eliminated == () for rec in run)
    assert report.final_means["accuracy"] > report.epoch_means[0]["accuracy"]
    assert report.final_means["accuracy"] > 0.8


def test_repeats_are_independent_but_seeded():
    train, test = small_task()
    one = federation.run_experiment(small_config(repeats=1), train, test)
    two = federation.run_experiment(small_config(repeats=2), train, test)
    assert two.runs[0] == one.runs[0]  # repeat 0 unaffected by adding repeat 1
    assert two.runs[1] != two.runs[0]


def test_poisoning_without_defense_hurts_source_recall():
    train, test = small_task()
    honest = federation.run_experiment(small_config(global_epochs=6, repeats=3), train, test)
    poisoned = federation.run_experiment(
        small_config(global_epochs=6, repeats=3, malicious_fraction=0.5), train, test
    )
    assert (
        poisoned.final_means["source_recall"] < honest.final_means["source_recall"]
    )


def test_eliminated_clients_do_not_influence_aggregate():
    """A round with defense must equal a FedAvg over only the retained updates."""
    train, test = small_task()
    cfg = small_config(malicious_fraction=0.25, defense=DefenseConfig(kind="fixed_fraction", fixed_fraction=0.25))
    state = federation.init_state(cfg, train, test, repeat=0)
    model_before = state.model
    record = federation.global_round(state, epoch=0)
    assert len(record.eliminated) == 1  # round(0.25 * 4)
    updates = [
        federation.local_train(
            model_before,
            state.shards[cid],
            cfg.client_epochs,
            cfg.client_lr,
            cfg.batch_size,
            cfg.ldp,
            np.random.default_rng([cfg.seed, 0, 4, 0, cid]),
        )
        for cid in record.selected
        if cid not in record.eliminated
    ]
    expected = federation.fed_avg(updates)
    for wa, wb in zip(state.model.weights, expected.weights):
        assert wa.tobytes() == wb.tobytes()


def test_round_record_detection_fields_consistent():
    train, test = small_task()
    cfg = small_config(malicious_fraction=0.5, defense=DefenseConfig(kind="zscore"))
    report = federation.run_experiment(cfg, train, test)
    for run in report.runs:
        for rec in run:
            assert 0.0 <= rec.det_accuracy <= 1.0
            assert rec.eliminated_count == len(rec.eliminated)
            assert set(rec.eliminated) <= set(rec.selected)


def test_init_state_poisons_exactly_the_marked_shards():
    train, test = small_task()
    cfg = small_config(malicious_fraction=0.25)
    state = federation.init_state(cfg, train, test)
    flagged = [s for s in state.shards if s.is_malicious]
    assert len(flagged) == 2  # round(0.25 * 8)
    for shard in flagged:
        assert not np.any(shard.data.labels == cfg.poison_spec.source_class)
    honest_labels = np.concatenate(
        [s.data.labels for s in state.shards if not s.is_malicious]
    )
    assert np.any(honest_labels == cfg.poison_spec.source_class)


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(clients_per_round=9)
    with pytest.raises(ValueError):
        small_config(client_lr=0.0)
    with pytest.raises(ValueError):
        small_config(malicious_fraction=0.6)
    with pytest.raises(ValueError):
        small_config(client_epochs=-1)
