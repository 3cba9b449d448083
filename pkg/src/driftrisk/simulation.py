"""Synthetic deployment streams and the batch-correctness rule.

Streams are sequences of batches.  Shift events are Bernoulli per batch;
a shifted batch is filled with event (OOD) samples drawn from one of the
oracle's folds, entirely in uniform mode or per-sample at a mixture
fraction otherwise.  Per-sample correctness is a Bernoulli draw at the
fold's accuracy, standing in for whatever task metric defines "correct"
for a single input.  A batch is correct when its realized mean accuracy
reaches a threshold, conventionally the 1st percentile of batch accuracy
observed on clean validation data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .monitor import Assessment

from .errors import ConfigurationError, ValidationError
from .event_tree import (
    CORRECT_DETECTION,
    CostModel,
    FAILED_DETECTION,
    NECESSARY_INTERVENTION,
    UNNECESSARY_INTERVENTION,
)

STANDARD_BATCH_SIZES = (1, 8, 16, 32, 64)


@dataclass(frozen=True)
class StreamConfig:
    """Deployment-stream generation parameters."""

    batch_size: int
    shift_rate: float
    horizon: int
    uniform: bool = True
    mixture_fraction: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size!r}")
        if not 0.0 <= self.shift_rate <= 1.0:
            raise ValidationError(f"shift_rate must be in [0, 1], got {self.shift_rate!r}")
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon!r}")
        if self.mixture_fraction is not None and not 0.0 <= self.mixture_fraction <= 1.0:
            raise ValidationError(
                f"mixture_fraction must be in [0, 1], got {self.mixture_fraction!r}"
            )


@dataclass(frozen=True)
class OodFold:
    """One kind of shifted data: its accuracy and sampling weight."""

    name: str
    accuracy: float
    weight: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValidationError(f"fold accuracy must be in [0, 1], got {self.accuracy!r}")
        if self.weight < 0.0:
            raise ValidationError(f"fold weight must be >= 0, got {self.weight!r}")


@dataclass(frozen=True)
class AccuracyOracle:
    """Ground-truth correctness probabilities for stream generation."""

    ind_accuracy: float
    folds: tuple[OodFold, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.ind_accuracy <= 1.0:
            raise ValidationError(
                f"ind_accuracy must be in [0, 1], got {self.ind_accuracy!r}"
            )
        if not self.folds:
            raise ValidationError("oracle needs at least one OOD fold")
        total = sum(fold.weight for fold in self.folds)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"fold weights must sum to 1, got {total!r}")

    @classmethod
    def single(cls, ind_accuracy: float, ood_accuracy: float) -> "AccuracyOracle":
        return cls(ind_accuracy, (OodFold("ood", ood_accuracy, 1.0),))

    @classmethod
    def uniform_folds(
        cls, ind_accuracy: float, fold_accuracies: Sequence[float]
    ) -> "AccuracyOracle":
        n = len(fold_accuracies)
        return cls(
            ind_accuracy,
            tuple(OodFold(f"fold{i}", acc, 1.0 / n) for i, acc in enumerate(fold_accuracies)),
        )

    @property
    def ood_accuracy(self) -> float:
        """Weighted mean accuracy across folds."""
        return sum(fold.accuracy * fold.weight for fold in self.folds)


@dataclass(frozen=True)
class Batch:
    """One generated batch with its realized correctness draws."""

    index: int
    event: bool                 # the Bernoulli shift draw for this batch
    ood_fraction: float         # realized fraction of event samples
    is_ood: bool                # majority-rule ground truth seen by detectors
    fold: str | None
    correct: np.ndarray
    accuracy: float


def generate_stream(config: StreamConfig, oracle: AccuracyOracle) -> list[Batch]:
    """Generate the full batch sequence for a deployment run.

    Deterministic under config.seed: draw order is fixed (events, folds,
    mixture fractions, sample flags, correctness).
    """
    rng = np.random.default_rng(config.seed)
    horizon, size = config.horizon, config.batch_size

    events = rng.random(horizon) < config.shift_rate
    weights = np.array([fold.weight for fold in oracle.folds])
    fold_idx = rng.choice(len(oracle.folds), size=horizon, p=weights)

    if config.uniform:
        fractions = events.astype(float)
        flags = np.broadcast_to(events[:, None], (horizon, size))
    else:
        if config.mixture_fraction is None:
            fractions = rng.random(horizon)
        else:
            fractions = np.full(horizon, config.mixture_fraction)
        fractions = np.where(events, fractions, 0.0)
        flags = rng.random((horizon, size)) < fractions[:, None]

    fold_accs = np.array([fold.accuracy for fold in oracle.folds])
    per_sample_acc = np.where(flags, fold_accs[fold_idx][:, None], oracle.ind_accuracy)
    correct = rng.random((horizon, size)) < per_sample_acc

    batches = []
    for i in range(horizon):
        fraction = float(flags[i].mean())
        batches.append(
            Batch(
                index=i,
                event=bool(events[i]),
                ood_fraction=fraction,
                is_ood=fraction >= 0.5,
                fold=oracle.folds[fold_idx[i]].name if events[i] else None,
                correct=correct[i],
                accuracy=float(correct[i].mean()),
            )
        )
    return batches


def ind_percentile_threshold(ind_batch_accuracies: Sequence[float], percentile: float) -> float:
    """Percentile of clean-validation batch accuracies, linearly interpolated.

    Linear interpolation between closest order statistics is the pinned
    convention so thresholds are reproducible across runs and tooling.
    """
    values = np.asarray(ind_batch_accuracies, dtype=float)
    if values.size == 0:
        raise ValidationError("cannot take a percentile of an empty sequence")
    if not 0.0 <= percentile <= 100.0:
        raise ValidationError(f"percentile must be in [0, 100], got {percentile!r}")
    return float(np.percentile(values, percentile))


def batch_correct(batch: Batch, threshold: float) -> bool:
    """A batch is correct when its realized accuracy reaches the threshold."""
    return batch.accuracy >= threshold


def batch_correct_probability(sample_accuracy: float, batch_size: int, threshold: float) -> float:
    """Exact probability that a pure batch passes the correctness rule.

    Binomial tail P(X >= ceil(threshold * B)) with X ~ Binom(B, accuracy).
    This is what a condition's "accuracy" means once evaluation is
    batch-wise, so tree parameters for batched monitors come from here.
    """
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size!r}")
    if not 0.0 <= sample_accuracy <= 1.0:
        raise ValidationError(f"sample_accuracy must be in [0, 1], got {sample_accuracy!r}")
    k_min = math.ceil(threshold * batch_size - 1e-9)
    if k_min <= 0:
        return 1.0
    if k_min > batch_size:
        return 0.0
    a = sample_accuracy
    return float(
        sum(
            math.comb(batch_size, k) * a**k * (1.0 - a) ** (batch_size - k)
            for k in range(k_min, batch_size + 1)
        )
    )


@dataclass(frozen=True)
class DeploymentRecord:
    """One monitored batch: ground truth, verdict, correctness, assessment."""

    index: int
    is_ood: bool
    verdict: bool
    batch_accuracy: float
    batch_correct: bool
    assessment: "Assessment"


@dataclass
class DeploymentTrace:
    """Per-batch records of a monitored deployment run."""

    records: list[DeploymentRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def warmup_end(self) -> int:
        """Index of the first record estimated from the trace, not the prior."""
        for i, record in enumerate(self.records):
            if not record.assessment.using_prior:
                return i
        return len(self.records)

    def realized_accuracy(self, start: int = 0) -> float:
        """Fraction of correct batches over a suffix window."""
        window = self.records[start:]
        if not window:
            raise ValidationError("empty suffix window")
        return sum(r.batch_correct for r in window) / len(window)

    def realized_event_rate(self, start: int = 0) -> float:
        window = self.records[start:]
        if not window:
            raise ValidationError("empty suffix window")
        return sum(r.is_ood for r in window) / len(window)

    def mean_expected_accuracy(self, start: int = 0) -> float:
        window = self.records[start:]
        if not window:
            raise ValidationError("empty suffix window")
        return sum(r.assessment.expected_accuracy for r in window) / len(window)

    def mean_expected_risk(self, start: int = 0) -> float:
        window = self.records[start:]
        if not window:
            raise ValidationError("empty suffix window")
        total = 0.0
        for record in window:
            if record.assessment.expected_risk is None:
                raise ConfigurationError("trace records carry no risk estimates")
            total += record.assessment.expected_risk
        return total / len(window)

    def realized_mean_cost(
        self, costs: CostModel, with_interventions: bool, start: int = 0
    ) -> float:
        """Average realized per-batch cost over a suffix window.

        With interventions, a positive verdict routes to the intervention
        outcome (necessary iff the batch really was OOD); otherwise the
        model's own correctness decides between correct and failed
        detection.
        """
        window = self.records[start:]
        if not window:
            raise ValidationError("empty suffix window")
        total = 0.0
        for record in window:
            if with_interventions and record.verdict:
                outcome = NECESSARY_INTERVENTION if record.is_ood else UNNECESSARY_INTERVENTION
            else:
                outcome = CORRECT_DETECTION if record.batch_correct else FAILED_DETECTION
            try:
                total += costs[outcome]
            except KeyError:
                raise ConfigurationError(f"no cost entry for outcome {outcome!r}") from None
        return total / len(window)


def run_deployment(stream, detector, monitor, correct_threshold: float = 0.5) -> DeploymentTrace:
    """Drive a monitor over a generated stream, one verdict per batch."""
    trace = DeploymentTrace()
    for batch in stream:
        verdict = detector.judge_batch(batch.ood_fraction)
        assessment = monitor.observe(verdict)
        trace.records.append(
            DeploymentRecord(
                index=batch.index,
                is_ood=batch.is_ood,
                verdict=verdict,
                batch_accuracy=batch.accuracy,
                batch_correct=batch_correct(batch, correct_threshold),
                assessment=assessment,
            )
        )
    return trace
