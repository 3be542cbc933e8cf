"""Server-side eliminators over the round's noisy loss reports.

Four strategies decide which clients are dropped from aggregation: a fixed
top-fraction cut, the largest gap in the sorted losses, an absolute Z-score
threshold, and 1-D two-cluster K-means. All of them are deterministic
functions of the reports, and every outcome partitions the round's client
set into eliminated and retained with retained never empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import round_half_up

DEFENSE_KINDS = ("none", "fixed_fraction", "largest_gap", "zscore", "kmeans")


@dataclass(frozen=True)
class LossReport:
    client_id: int
    noisy_loss: float

    def __post_init__(self):
        if not np.isfinite(self.noisy_loss):
            raise ValueError(f"noisy_loss must be finite, got {self.noisy_loss}")


@dataclass
class EliminationOutcome:
    eliminated: frozenset
    retained: frozenset
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DefenseConfig:
    kind: str = "none"
    fixed_fraction: float = 0.2
    zscore_threshold: float = 1.0
    zscore_one_sided: bool = False
    kmeans_guard: float = 1.0
    kmeans_max_iters: int = 100

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValueError(f"unknown defense kind {self.kind!r}, expected one of {DEFENSE_KINDS}")
        if not 0.0 <= self.fixed_fraction < 1.0:
            raise ValueError("fixed_fraction must be in [0, 1)")


def _check_reports(reports, minimum=1):
    if len(reports) < minimum:
        raise ValueError(f"need at least {minimum} loss report(s), got {len(reports)}")
    ids = [r.client_id for r in reports]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate client_id in loss reports")


def _outcome(reports, eliminated_ids, diagnostics):
    """Close the partition, enforcing that at least one client is retained."""
    all_ids = {r.client_id for r in reports}
    eliminated = set(eliminated_ids)
    if eliminated == all_ids and eliminated:
        keep = min(reports, key=lambda r: (r.noisy_loss, r.client_id)).client_id
        eliminated.discard(keep)
        diagnostics["retain_one_fallback"] = True
    return EliminationOutcome(
        eliminated=frozenset(eliminated),
        retained=frozenset(all_ids - eliminated),
        diagnostics=diagnostics,
    )


def eliminate_fixed_fraction(reports, fraction: float) -> EliminationOutcome:
    """Drop the top round(fraction * n) losses; equal losses drop lower ids first."""
    _check_reports(reports)
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    count = round_half_up(fraction * len(reports))
    order = sorted(reports, key=lambda r: (-r.noisy_loss, r.client_id))
    return _outcome(reports, (r.client_id for r in order[:count]), {"cut_count": count})


def eliminate_largest_gap(reports) -> EliminationOutcome:
    """Split the sorted losses at their widest consecutive gap and drop the top."""
    _check_reports(reports)
    if len(reports) < 2:
        return _outcome(reports, (), {"too_few_reports": True})
    order = sorted(reports, key=lambda r: (r.noisy_loss, r.client_id))
    losses = np.array([r.noisy_loss for r in order])
    gaps = np.diff(losses)
    widest = float(gaps.max())
    if widest <= 0.0:
        return _outcome(reports, (), {"gap": 0.0})
    # Last occurrence of the widest gap: ties eliminate as few clients as possible.
    cut = int(np.flatnonzero(gaps == widest)[-1])
    return _outcome(
        reports,
        (r.client_id for r in order[cut + 1 :]),
        {"gap": widest, "boundary_loss": float(losses[cut])},
    )


def eliminate_zscore(
    reports, threshold: float = 1.0, one_sided: bool = False
) -> EliminationOutcome:
    """Drop reports whose Z-score magnitude exceeds the threshold.

    Uses the population standard deviation. With one_sided=True only
    unusually high losses are dropped, never unusually low ones.
    """
    _check_reports(reports, minimum=2)
    losses = np.array([r.noisy_loss for r in reports])
    mu = float(losses.mean())
    sigma = float(losses.std())
    diagnostics = {"mean": mu, "std": sigma}
    if sigma < 1e-12:
        return _outcome(reports, (), diagnostics)
    z = (losses - mu) / sigma
    flag = z > threshold if one_sided else np.abs(z) > threshold
    return _outcome(
        reports, (r.client_id for r, f in zip(reports, flag) if f), diagnostics
    )


def eliminate_kmeans(reports, config: DefenseConfig) -> EliminationOutcome:
    """Two-cluster 1-D Lloyd iteration; drop the high-loss cluster if separated.

    Centroids start at (min, max). The high cluster is eliminated only when
    the centroid gap exceeds kmeans_guard times the pooled within-cluster
    spread; guard 0 recovers the unconditional split-and-drop behavior.
    """
    _check_reports(reports, minimum=2)
    losses = np.array([r.noisy_loss for r in reports])
    c_low, c_high = float(losses.min()), float(losses.max())
    diagnostics = {"centroids": (c_low, c_high)}
    if c_high - c_low < 1e-15:
        diagnostics["pooled_std"] = 0.0
        diagnostics["guard_passed"] = False
        return _outcome(reports, (), diagnostics)
    in_high = losses - c_low > c_high - losses  # ties join the low cluster
    for _ in range(config.kmeans_max_iters):
        if not in_high.any() or in_high.all():
            break
        c_low = float(losses[~in_high].mean())
        c_high = float(losses[in_high].mean())
        new_high = losses - c_low > c_high - losses
        if np.array_equal(new_high, in_high):
            break
        in_high = new_high
    centers = np.where(in_high, c_high, c_low)
    # Pooled (two-sample) within-cluster deviation, n - 2 degrees of freedom.
    pooled_std = float(
        np.sqrt(np.sum((losses - centers) ** 2) / max(len(losses) - 2, 1))
    )
    guard_passed = (c_high - c_low) > config.kmeans_guard * max(pooled_std, 1e-12)
    diagnostics.update(
        centroids=(c_low, c_high), pooled_std=pooled_std, guard_passed=guard_passed
    )
    if not guard_passed:
        return _outcome(reports, (), diagnostics)
    return _outcome(
        reports, (r.client_id for r, f in zip(reports, in_high) if f), diagnostics
    )


def run_eliminator(reports, config: DefenseConfig) -> EliminationOutcome:
    """Dispatch on the configured defense kind."""
    if config.kind == "none":
        _check_reports(reports)
        return _outcome(reports, (), {})
    if config.kind == "fixed_fraction":
        return eliminate_fixed_fraction(reports, config.fixed_fraction)
    if config.kind == "largest_gap":
        return eliminate_largest_gap(reports)
    if config.kind == "zscore":
        return eliminate_zscore(reports, config.zscore_threshold, config.zscore_one_sided)
    if config.kind == "kmeans":
        return eliminate_kmeans(reports, config)
    raise ValueError(f"unknown defense kind {config.kind!r}")


@dataclass(frozen=True)
class DetectionScore:
    accuracy: float
    precision: float
    recall: float
    f1: float


def detection_score(outcome: EliminationOutcome, truth) -> DetectionScore:
    """Confusion-matrix scores treating 'malicious' as the positive class.

    Predicted positives are the eliminated clients. Precision defaults to 1
    when nothing is eliminated and recall to 1 when nothing is malicious.
    """
    truth = set(truth)
    everyone = outcome.eliminated | outcome.retained
    if not truth <= everyone:
        raise ValueError("truth contains ids outside the round's client set")
    tp = len(outcome.eliminated & truth)
    fp = len(outcome.eliminated - truth)
    fn = len(truth - outcome.eliminated)
    tn = len(everyone) - tp - fp - fn
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return DetectionScore((tp + tn) / len(everyone), precision, recall, f1)
