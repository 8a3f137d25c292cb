"""Weighted point clouds standing in for probability measures on R^d."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = ["EmpiricalMeasure"]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finitely supported measure: points (n, d) with nonnegative weights summing to 1."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            raise ValidationError("empirical measure needs at least one support point")
        object.__setattr__(self, "points", pts)
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise ValidationError(f"weights shape {w.shape} does not match {pts.shape[0]} points")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        """The empirical measure (1/n) sum of Dirac masses at the given points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @classmethod
    def dirac(cls, point) -> "EmpiricalMeasure":
        return cls(np.atleast_2d(np.asarray(point, dtype=np.float64)), np.array([1.0]))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points ** 2, axis=1))

    def integrate(self, func) -> float:
        """Weighted integral of a scalar function evaluated on the support."""
        vals = np.asarray([func(x) for x in self.points], dtype=np.float64)
        return float(self.weights @ vals)

    def to_csv(self, include_weights: bool = True) -> str:
        buf = io.StringIO()
        cols = [f"x{c}" for c in range(self.dim)]
        if include_weights:
            cols.append("weight")
        buf.write(",".join(cols) + "\n")
        for i in range(self.n):
            row = [format(v, ".17g") for v in self.points[i]]
            if include_weights:
                row.append(format(self.weights[i], ".17g"))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EmpiricalMeasure":
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = lines[0].split(",")
        has_w = header[-1] == "weight"
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        if has_w:
            return cls(data[:, :-1], data[:, -1])
        return cls.uniform(data)
