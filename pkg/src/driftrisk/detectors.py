"""Verdict sources: synthetic TPR/TNR detectors, profile grids, thresholds.

The synthetic detector draws one uniform per judgment and is correct with
probability TPR on events and TNR on non-events, which makes sensitivity
sweeps over detector quality possible without any real detector.  The
threshold detector turns recorded scalar scores into verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ValidationError
from .estimation import DetectorProfile

GREATER_IS_OOD = "greater_is_ood"
LESS_IS_OOD = "less_is_ood"


class SyntheticDetector:
    """Seeded Bernoulli-correct verdict source with a fixed TPR/TNR profile."""

    def __init__(self, profile: DetectorProfile, seed: int | np.random.Generator = 0) -> None:
        self.profile = profile
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def judge(self, is_ood: bool) -> bool:
        """One verdict for one ground truth; deterministic under the seed."""
        draw = self.rng.random()
        if is_ood:
            return bool(draw < self.profile.tpr)
        return bool(draw >= self.profile.tnr)

    def judge_many(self, is_ood: np.ndarray) -> np.ndarray:
        """Vectorized judge: one uniform per element, same rule as judge()."""
        flags = np.asarray(is_ood, dtype=bool)
        draws = self.rng.random(flags.shape)
        return np.where(flags, draws < self.profile.tpr, draws >= self.profile.tnr)

    def judge_batch(self, ground_truth: Union[bool, float, Sequence[bool]]) -> bool:
        """One verdict for one batch of inputs.

        Uniform batches carry a single OOD flag.  Mixed batches carry an
        OOD fraction or per-sample flags; the batch counts as OOD ground
        truth when the fraction reaches 0.5 (majority rule), and is then
        judged like any other input.
        """
        if isinstance(ground_truth, (bool, np.bool_)):
            return self.judge(bool(ground_truth))
        if isinstance(ground_truth, (int, float, np.floating)):
            fraction = float(ground_truth)
            if not 0.0 <= fraction <= 1.0:
                raise ValidationError(f"OOD fraction must be in [0, 1], got {fraction!r}")
        else:
            flags = np.asarray(ground_truth, dtype=bool)
            if flags.size == 0:
                raise ValidationError("cannot judge an empty batch")
            fraction = float(flags.mean())
        return self.judge(fraction >= 0.5)


@dataclass(frozen=True)
class ThresholdDetector:
    """Deterministic verdict from a scalar score and a fixed threshold.

    Comparison is strict; a score equal to the threshold is a negative
    verdict, a fixed convention for bit-exact reproducibility.
    """

    threshold: float
    direction: str = GREATER_IS_OOD

    def __post_init__(self) -> None:
        if self.direction not in (GREATER_IS_OOD, LESS_IS_OOD):
            raise ValidationError(
                f"direction must be {GREATER_IS_OOD!r} or {LESS_IS_OOD!r}, "
                f"got {self.direction!r}"
            )
        if not math.isfinite(self.threshold):
            raise ValidationError(f"threshold must be finite, got {self.threshold!r}")

    def judge(self, score: float) -> bool:
        if not math.isfinite(score):
            raise ValidationError(f"score must be finite, got {score!r}")
        if self.direction == GREATER_IS_OOD:
            return score > self.threshold
        return score < self.threshold


def detector_grid(step: float = 0.1, ba_floor: float = 0.5) -> list[DetectorProfile]:
    """All (tpr, tnr) lattice pairs whose balanced accuracy exceeds the floor.

    The lattice spans [0, 1] at the given step; membership uses integer
    lattice arithmetic so float rounding cannot leak boundary profiles in
    or out.
    """
    if not 0.0 < step <= 1.0:
        raise ValidationError(f"step must be in (0, 1], got {step!r}")
    n = round(1.0 / step)
    profiles = []
    for i in range(n + 1):
        for j in range(n + 1):
            if i + j > 2.0 * n * ba_floor + 1e-9:
                profiles.append(DetectorProfile(tpr=round(i / n, 12), tnr=round(j / n, 12)))
    return profiles
