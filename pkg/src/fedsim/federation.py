"""The federated training loop: select, train locally, report, defend, average.

Each global epoch the server samples a subset of clients, ships them the
current model, and gets back exactly one (weights, noisy loss) tuple per
client. The configured eliminator filters the reports, FedAvg averages the
surviving weights, and the new model is scored on a held-out honest test
set. Everything is driven by explicit seeded generators, so a config fully
determines every round record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import ClientShard, Dataset, PoisonSpec, mark_malicious, partition, poison_labels
from .defense import DefenseConfig, LossReport, detection_score, run_eliminator
from .metrics import evaluate_model
from .privacy import LdpConfig, perturb_loss

# Sub-stream tags hung off (seed, repeat) so no two purposes share a stream.
_STREAM_PARTITION = 0
_STREAM_MALICIOUS = 1
_STREAM_INIT = 2
_STREAM_SELECT = 3
_STREAM_CLIENT = 4


@dataclass(frozen=True)
class FederationConfig:
    total_clients: int = 50
    clients_per_round: int = 10
    global_epochs: int = 15
    client_epochs: int = 5
    client_lr: float = 0.6
    batch_size: int = 12
    malicious_fraction: float = 0.0
    poison_spec: PoisonSpec = PoisonSpec(5, 3)
    defense: DefenseConfig = DefenseConfig()
    ldp: LdpConfig = LdpConfig()
    hidden_dims: tuple[int, ...] = (32,)
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if self.clients_per_round > self.total_clients:
            raise ValueError("clients_per_round exceeds total_clients")
        for name in ("total_clients", "clients_per_round", "global_epochs", "batch_size", "repeats"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.client_epochs < 0:
            raise ValueError("client_epochs must be non-negative")
        if self.client_lr <= 0:
            raise ValueError("client_lr must be positive")
        if not 0.0 <= self.malicious_fraction <= 0.5:
            raise ValueError("malicious_fraction outside [0, 0.5]")


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    weights: nn.ModelParams
    noisy_loss: float


@dataclass(frozen=True)
class RoundRecord:
    epoch: int
    selected: tuple[int, ...]
    eliminated: tuple[int, ...]
    accuracy: float
    test_loss: float
    source_recall: float
    det_accuracy: float
    det_precision: float
    det_recall: float
    det_f1: float

    @property
    def eliminated_count(self) -> int:
        return len(self.eliminated)


@dataclass
class ExperimentReport:
    config: FederationConfig
    runs: list  # runs[repeat][epoch] -> RoundRecord
    epoch_means: list  # one dict per epoch, metrics averaged across repeats
    mean_det_accuracy: float
    mean_det_f1: float

    @property
    def final_means(self) -> dict:
        return self.epoch_means[-1]


def select_clients(rng: np.random.Generator, total_clients: int, k: int) -> tuple[int, ...]:
    """Uniform sample of k distinct client ids, returned sorted."""
    if k > total_clients:
        raise ValueError(f"cannot select {k} of {total_clients} clients")
    chosen = rng.choice(total_clients, size=k, replace=False)
    return tuple(int(c) for c in np.sort(chosen))


def local_train(
    global_model: nn.ModelParams,
    shard: ClientShard,
    client_epochs: int,
    lr: float,
    batch_size: int,
    ldp: LdpConfig,
    rng: np.random.Generator,
) -> ClientUpdate:
    """One client's contribution: mini-batch SGD, then a noised loss report.

    The raw loss is the shard's mean loss under the incoming global model,
    monitored at the start of local training; only the noised value leaves
    the client. The training-start loss reflects how well the shared model
    matches the client's labels, which is what separates honest from
    poisoned shards; by the end of local training the client has fit its
    own labels, flipped or not, and the signal is gone.
    """
    n = len(shard.data)
    if n == 0:
        raise ValueError(f"client {shard.client_id} has an empty shard")
    model = global_model
    features, labels = shard.data.features, shard.data.labels
    raw_loss, _ = nn.softmax_cross_entropy(nn.forward(model, features), labels)
    for _ in range(client_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            grads, _ = nn.backward(model, features[idx], labels[idx])
            model = nn.sgd_step(model, grads, lr)
    return ClientUpdate(
        client_id=shard.client_id,
        weights=model,
        noisy_loss=perturb_loss(raw_loss, ldp, rng),
    )


def fed_avg(updates) -> nn.ModelParams:
    """Unweighted element-wise mean of the updates' parameters.

    Accumulation runs in ascending client_id order so the result is
    bit-reproducible regardless of how the updates were produced.
    """
    if not updates:
        raise ValueError("fed_avg needs at least one update")
    ordered = sorted(updates, key=lambda u: u.client_id)
    dims = ordered[0].weights.dims
    for u in ordered[1:]:
        if u.weights.dims != dims:
            raise ValueError("updates disagree on model dims")
    sum_w = [np.zeros_like(w) for w in ordered[0].weights.weights]
    sum_b = [np.zeros_like(b) for b in ordered[0].weights.biases]
    for u in ordered:
        for acc, w in zip(sum_w, u.weights.weights):
            acc += w
        for acc, b in zip(sum_b, u.weights.biases):
            acc += b
    inv = 1.0 / len(ordered)
    return nn.ModelParams(tuple(w * inv for w in sum_w), tuple(b * inv for b in sum_b))


@dataclass
class FederationState:
    config: FederationConfig
    shards: list
    test_set: Dataset
    model: nn.ModelParams
    seed_prefix: tuple = ()  # rng namespace, e.g. (master_seed, repeat)
    history: list = field(default_factory=list)


def _rng(state: FederationState, *tail) -> np.random.Generator:
    return np.random.default_rng([*state.seed_prefix, *tail])


def global_round(state: FederationState, epoch: int) -> RoundRecord:
    """Run one global epoch in place and append its record to the history."""
    cfg = state.config
    selected = select_clients(
        _rng(state, _STREAM_SELECT, epoch), cfg.total_clients, cfg.clients_per_round
    )
    updates = [
        local_train(
            state.model,
            state.shards[cid],
            cfg.client_epochs,
            cfg.client_lr,
            cfg.batch_size,
            cfg.ldp,
            _rng(state, _STREAM_CLIENT, epoch, cid),
        )
        for cid in selected
    ]
    reports = [LossReport(u.client_id, u.noisy_loss) for u in updates]
    outcome = run_eliminator(reports, cfg.defense)
    state.model = fed_avg([u for u in updates if u.client_id in outcome.retained])
    result = evaluate_model(state.model, state.test_set)
    truth = {cid for cid in selected if state.shards[cid].is_malicious}
    det = detection_score(outcome, truth)
    record = RoundRecord(
        epoch=epoch,
        selected=selected,
        eliminated=tuple(sorted(outcome.eliminated)),
        accuracy=result.accuracy,
        test_loss=result.mean_ce_loss,
        source_recall=result.per_class_recall[cfg.poison_spec.source_class],
        det_accuracy=det.accuracy,
        det_precision=det.precision,
        det_recall=det.recall,
        det_f1=det.f1,
    )
    state.history.append(record)
    return record


def init_state(
    config: FederationConfig, train_set: Dataset, test_set: Dataset, repeat: int = 0
) -> FederationState:
    """Partition and poison the data, initialize the model, for one repeat."""
    prefix = (config.seed, repeat)
    shards = partition(train_set, config.total_clients, [*prefix, _STREAM_PARTITION])
    shards = mark_malicious(shards, config.malicious_fraction, [*prefix, _STREAM_MALICIOUS])
    shards = [
        poison_labels(s, config.poison_spec) if s.is_malicious else s for s in shards
    ]
    dims = (train_set.features.shape[1], *config.hidden_dims, train_set.num_classes)
    model = nn.init_params(dims, np.random.default_rng([*prefix, _STREAM_INIT]))
    return FederationState(
        config=config, shards=shards, test_set=test_set, model=model, seed_prefix=prefix
    )


_MEAN_FIELDS = (
    "accuracy",
    "test_loss",
    "source_recall",
    "det_accuracy",
    "det_precision",
    "det_recall",
    "det_f1",
    "eliminated_count",
)


def run_experiment(
    config: FederationConfig, train_set: Dataset, test_set: Dataset
) -> ExperimentReport:
    """Run `repeats` independent seeded trainings and average them per epoch."""
    runs = []
    for repeat in range(config.repeats):
        state = init_state(config, train_set, test_set, repeat)
        for epoch in range(config.global_epochs):
            global_round(state, epoch)
        runs.append(state.history)
    epoch_means = [
        {
            name: float(np.mean([getattr(run[epoch], name) for run in runs]))
            for name in _MEAN_FIELDS
        }
        for epoch in range(config.global_epochs)
    ]
    all_records = [rec for run in runs for rec in run]
    return ExperimentReport(
        config=config,
        runs=runs,
        epoch_means=epoch_means,
        mean_det_accuracy=float(np.mean([r.det_accuracy for r in all_records])),
        mean_det_f1=float(np.mean([r.det_f1 for r in all_records])),
    )
