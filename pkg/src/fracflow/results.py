"""Result containers shared by the Monte Carlo and quadrature engines."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fracflow.output import write_csv


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo value with its standard error.

    Attributes:
        value: Sample mean.
        std_error: Sample standard deviation / sqrt(n_paths).
        n_paths: Number of paths.
        truncated_fraction: Share of paths that reached the horizon.
    """

    value: float
    std_error: float = 0.0
    n_paths: int = 0
    truncated_fraction: float = 0.0

    @classmethod
    def from_samples(cls, samples: np.ndarray, truncated_fraction: float = 0.0) -> McEstimate:
        n = int(samples.size)
        if n == 0:
            return cls(math.nan, math.nan, 0, truncated_fraction)
        mean = float(np.mean(samples))
        std = float(np.std(samples, ddof=1)) if n > 1 else 0.0
        return cls(mean, std / math.sqrt(n), n, truncated_fraction)

    @classmethod
    def exact(cls, value: float, n_paths: int = 0) -> McEstimate:
        """A boundary value known without sampling error."""
        return cls(float(value), 0.0, n_paths, 0.0)

    def agrees_with(self, reference: float, n_se: float = 3.0, floor: float = 0.0) -> bool:
        """|value - reference| <= n_se·std_error + floor."""
        return abs(self.value - reference) <= n_se * self.std_error + floor


@dataclass
class SolutionCurve:
    """Solution values on a grid of evaluation points.

    ``points`` holds t for one-dimensional problems and (t1, t2) pairs for
    the mixed problem. Deterministic engines leave std_error at 0.
    """

    points: list[float] | list[tuple[float, float]]
    values: list[float]
    std_errors: list[float] = field(default_factory=list)
    n_paths: list[int] = field(default_factory=list)
    truncated_fractions: list[float] = field(default_factory=list)
    method: str = "quad"
    # Mixed Monte Carlo only: share of paths whose coordinates exited in the same step.
    tie_fractions: list[float] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.values)
        if not self.std_errors:
            self.std_errors = [0.0] * n
        if not self.n_paths:
            self.n_paths = [0] * n
        if not self.truncated_fractions:
            self.truncated_fractions = [0.0] * n

    @classmethod
    def from_estimates(
        cls, points: Sequence, estimates: Sequence[McEstimate], method: str = "mc"
    ) -> SolutionCurve:
        return cls(
            points=list(points),
            values=[e.value for e in estimates],
            std_errors=[e.std_error for e in estimates],
            n_paths=[e.n_paths for e in estimates],
            truncated_fractions=[e.truncated_fraction for e in estimates],
            method=method,
        )

    @property
    def two_dimensional(self) -> bool:
        return bool(self.points) and isinstance(self.points[0], tuple)

    def estimates(self) -> list[McEstimate]:
        return [
            McEstimate(v, se, n, tf)
            for v, se, n, tf in zip(
                self.values, self.std_errors, self.n_paths, self.truncated_fractions
            )
        ]

    def columns(self) -> list[str]:
        coords = ["t1", "t2"] if self.two_dimensional else ["t"]
        return [*coords, "value", "std_error", "n_paths", "truncated_fraction", "method"]

    def rows(self) -> list[list]:
        rows = []
        for p, v, se, n, tf in zip(
            self.points, self.values, self.std_errors, self.n_paths, self.truncated_fractions
        ):
            coords = [float(p[0]), float(p[1])] if self.two_dimensional else [float(p)]
            rows.append([*coords, float(v), float(se), int(n), float(tf), self.method])
        return rows

    def to_records(self) -> list[dict]:
        return [dict(zip(self.columns(), row)) for row in self.rows()]

    def write_csv(self, path: Path | str) -> Path:
        return write_csv(path, self.columns(), self.rows())
