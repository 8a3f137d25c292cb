"""Mean-field model definitions.

A model is a pairwise drift kernel b(X, Y), a constant diffusion factor
sigma, and an initial law.  The drift actually used by the dynamics is the
average of b(X, .) against a measure; kernels may carry an aggregated
evaluator exploiting linear structure (exact algebra, no subsampling), and
kernels whose drift does not depend on the measure at all are flagged
`law_free` so coupled runs stay bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .measures import EmpiricalMeasure
from .rng import INIT_STEP, NoiseGrid

__all__ = [
    "Potential",
    "DriftKernel",
    "DiffusionSpec",
    "InitialLaw",
    "Observable",
    "ModelSpec",
    "mean_field_drift",
    "mean_field_batch",
    "granular_media_model",
    "vlasov_fokker_planck_model",
    "linear_test_model",
    "zero_potential",
    "quadratic_potential",
    "power_potential",
    "ou_mean",
    "ou_variance",
]

_PAIRWISE_CHUNK = 4_000_000  # max kernel evaluations buffered at once


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Potential:
    """Value/gradient oracle pair for a potential on R^d.

    `linear_grad_coeff` is set when grad(z) = coeff * z exactly, which lets
    mean-field averages collapse to a single mean.  `grad_lipschitz` is the
    Lipschitz constant of the gradient, or None when only locally Lipschitz.
    """

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    grad_lipschitz: Optional[float]
    name: str = "potential"
    linear_grad_coeff: Optional[float] = None


def zero_potential() -> Potential:
    return Potential(
        value=lambda z: np.zeros(np.asarray(z).shape[:-1]),
        grad=np.zeros_like,
        grad_lipschitz=0.0,
        name="zero",
        linear_grad_coeff=0.0,
    )


def quadratic_potential(coeff: float = 1.0) -> Potential:
    """V(z) = coeff * |z|^2 / 2, gradient coeff * z."""
    c = float(coeff)
    return Potential(
        value=lambda z: 0.5 * c * np.sum(np.asarray(z) ** 2, axis=-1),
        grad=lambda z: c * np.asarray(z),
        grad_lipschitz=abs(c),
        name=f"quadratic({c})",
        linear_grad_coeff=c,
    )


def power_potential(exponent: float, coeff: float = 1.0) -> Potential:
    """V(z) = coeff * |z|^exponent; superlinear gradient for exponent > 2."""
    p, c = float(exponent), float(coeff)
    if p < 2:
        raise ValidationError("power_potential needs exponent >= 2 for a Lipschitz-at-0 gradient")

    def value(z):
        return c * np.linalg.norm(np.asarray(z), axis=-1) ** p

    def grad(z):
        z = np.asarray(z)
        r = np.linalg.norm(z, axis=-1, keepdims=True)
        return c * p * r ** (p - 2) * z

    return Potential(
        value=value,
        grad=grad,
        grad_lipschitz=abs(c) * p if p == 2 else None,
        name=f"|z|^{p}*{c}",
        linear_grad_coeff=c * p if p == 2 else None,
    )


def _check_gradient(pot: Potential, dim: int, n_points: int = 100, seed: int = 7):
    """Central finite differences against the supplied gradient oracle."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2.0, 2.0, size=(n_points, dim))
    g = np.asarray(pot.grad(pts))
    for c in range(dim):
        h = 1e-6 * (1.0 + np.abs(pts[:, c]))
        up = pts.copy()
        dn = pts.copy()
        up[:, c] += h
        dn[:, c] -= h
        fd = (np.asarray(pot.value(up)) - np.asarray(pot.value(dn))) / (2 * h)
        scale = 1.0 + np.abs(fd)
        if np.max(np.abs(fd - g[:, c]) / scale) > 1e-4:
            raise ValidationError(
                f"gradient oracle of {pot.name!r} disagrees with finite differences "
                f"(coordinate {c})"
            )


def _check_even(pot: Potential, dim: int, n_points: int = 100, seed: int = 11):
    rng = np.random.default_rng(seed)
    z = rng.uniform(-3.0, 3.0, size=(n_points, dim))
    if np.max(np.abs(np.asarray(pot.value(z)) - np.asarray(pot.value(-z)))) > 1e-9:
        raise ValidationError(f"interaction potential {pot.name!r} is not even")


# ---------------------------------------------------------------------------
# kernels, diffusion, initial laws


@dataclass(frozen=True)
class DriftKernel:
    """Pairwise drift b(X, Y) on R^d x R^d.

    `eval` must broadcast over leading axes.  `lipschitz_bound` is the joint
    Lipschitz constant L with |b(X,Y)-b(X',Y')| <= L(|X-X'| + |Y-Y'|), or
    None for locally-Lipschitz-only kernels.  `taming_exponent` > 0 requests
    drift taming inside the integrator (tamed drift b/(1 + dt^q |b|)).
    """

    dim: int
    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz_bound: Optional[float]
    taming_exponent: float = 0.0
    law_free: bool = False
    mean_field: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError("kernel dimension must be positive")
        if self.lipschitz_bound is not None and self.lipschitz_bound < 0:
            raise ValidationError("lipschitz_bound must be nonnegative")
        if self.taming_exponent < 0:
            raise ValidationError("taming_exponent must be nonnegative")


@dataclass(frozen=True)
class DiffusionSpec:
    """Constant diffusion factor sigma with a = sigma sigma^T / 2."""

    sigma: np.ndarray
    a: np.ndarray = field(init=False)

    def __post_init__(self):
        sig = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        if sig.shape[0] != sig.shape[1]:
            raise ValidationError("sigma must be square")
        object.__setattr__(self, "sigma", sig)
        a = sig @ sig.T / 2.0
        if np.min(np.linalg.eigvalsh(a)) < -1e-12:
            raise ValidationError("a = sigma sigma^T / 2 must be positive semidefinite")
        object.__setattr__(self, "a", a)
        d = sig.shape[0]
        diag = np.diag(np.diag(sig))
        object.__setattr__(self, "_diag", np.diag(sig).copy() if np.array_equal(sig, diag) else None)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def apply(self, dW: np.ndarray) -> np.ndarray:
        """sigma @ dW, batched over rows of dW."""
        if self._diag is not None:
            return dW * self._diag
        return dW @ self.sigma.T

    @classmethod
    def isotropic(cls, dim: int, factor: float = np.sqrt(2.0)) -> "DiffusionSpec":
        return cls(np.eye(dim) * factor)


class InitialLaw:
    """Initial distribution from a family with closed-form second moment."""

    def __init__(self, kind: str, dim: int, second_moment: float, sampler, params: dict):
        self.kind = kind
        self.dim = dim
        self.second_moment = float(second_moment)
        self._sampler = sampler
        self.params = params
        if not np.isfinite(self.second_moment):
            raise ValidationError("initial law must have a finite second moment")

    def sample(self, grid: NoiseGrid, particles) -> np.ndarray:
        """Draw i.i.d. initial states at the grid's reserved init-step keys."""
        if np.isscalar(particles):
            particles = np.arange(int(particles))
        return self._sampler(grid, np.asarray(particles))

    @classmethod
    def point(cls, x) -> "InitialLaw":
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))

        def sampler(grid, particles):
            return np.tile(x, (len(particles), 1))

        return cls("point", len(x), float(np.sum(x ** 2)), sampler, {"x": x})

    @classmethod
    def gaussian(cls, mean, cov) -> "InitialLaw":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        d = len(mean)
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 0:
            cov = np.eye(d) * cov
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (d, d):
            raise ValidationError("covariance shape does not match mean")
        chol = np.linalg.cholesky(cov + 0.0) if np.any(cov) else np.zeros((d, d))

        def sampler(grid, particles):
            z = grid.normals(particles, INIT_STEP, d)
            return mean + z @ chol.T

        m2 = float(mean @ mean + np.trace(cov))
        return cls("gaussian", d, m2, sampler, {"mean": mean, "cov": cov})

    @classmethod
    def uniform_box(cls, lo, hi) -> "InitialLaw":
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValidationError("uniform box needs lo < hi componentwise")
        d = len(lo)

        def sampler(grid, particles):
            u = grid.uniforms(particles, INIT_STEP, d)
            return lo + u * (hi - lo)

        m2 = float(np.sum((lo ** 2 + lo * hi + hi ** 2) / 3.0))
        return cls("uniform", d, m2, sampler, {"lo": lo, "hi": hi})

    @classmethod
    def mixture(cls, components: Sequence["InitialLaw"], weights) -> "InitialLaw":
        weights = np.asarray(weights, dtype=np.float64)
        if len(components) != len(weights) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError("mixture weights must match components and sum to 1")
        d = components[0].dim
        if any(c.dim != d for c in components):
            raise ValidationError("mixture components must share a dimension")
        cumw = np.cumsum(weights)

        def sampler(grid, particles):
            # selector lives past the component columns so it never reuses
            # the draws the components consume
            sel = grid.uniforms(particles, INIT_STEP, d + 1)[:, d]
            idx = np.searchsorted(cumw, sel, side="right").clip(0, len(components) - 1)
            draws = np.stack([c.sample(grid, particles) for c in components], axis=0)
            return draws[idx, np.arange(len(particles))]

        m2 = float(weights @ [c.second_moment for c in components])
        return cls("mixture", d, m2, sampler, {"weights": weights, "components": components})


@dataclass(frozen=True)
class Observable:
    """Scalar Lipschitz statistic of one particle state."""

    eval: Callable[[np.ndarray], np.ndarray]  # (..., d) -> (...)
    lipschitz_constant: float
    name: str = "observable"

    def __post_init__(self):
        if self.lipschitz_constant <= 0:
            raise ValidationError("lipschitz_constant must be positive")


@dataclass(frozen=True)
class ModelSpec:
    drift: DriftKernel
    diffusion: DiffusionSpec
    initial_law: InitialLaw
    name: str

    def __post_init__(self):
        if not (self.drift.dim == self.diffusion.dim == self.initial_law.dim):
            raise ValidationError(
                f"dimension mismatch: drift {self.drift.dim}, diffusion "
                f"{self.diffusion.dim}, initial law {self.initial_law.dim}"
            )

    @property
    def dim(self) -> int:
        return self.drift.dim


# ---------------------------------------------------------------------------
# mean-field averaging


def _pairwise_average(kernel: DriftKernel, X: np.ndarray, points: np.ndarray,
                      weights: np.ndarray) -> np.ndarray:
    """Exact weighted average of b(X_i, Y_j) over j, chunked over i."""
    n, d = X.shape
    m = points.shape[0]
    out = np.empty((n, d))
    rows = max(1, _PAIRWISE_CHUNK // max(m, 1))
    for start in range(0, n, rows):
        stop = min(start + rows, n)
        vals = kernel.eval(X[start:stop, None, :], points[None, :, :])
        out[start:stop] = np.einsum("ijd,j->id", vals, weights)
    return out


def mean_field_batch(kernel: DriftKernel, X: np.ndarray, points: np.ndarray,
                     weights: np.ndarray) -> np.ndarray:
    """Mean-field drift for a batch of states X against a weighted cloud."""
    if kernel.law_free:
        return kernel.eval(X, X)
    if kernel.mean_field is not None:
        return kernel.mean_field(X, points, weights)
    return _pairwise_average(kernel, X, points, weights)


def mean_field_drift(kernel: DriftKernel, X, measure: EmpiricalMeasure) -> np.ndarray:
    """b[X, p] = integral of b(X, Y) dp(Y), as an exact weighted average."""
    X = np.atleast_1d(np.asarray(X, dtype=np.float64))
    if X.shape != (kernel.dim,):
        raise ValueError(f"state has shape {X.shape}, kernel dimension is {kernel.dim}")
    if measure.dim != kernel.dim:
        raise ValueError(f"measure dimension {measure.dim} != kernel dimension {kernel.dim}")
    return _pairwise_average(kernel, X[None, :], measure.points, measure.weights)[0]


# ---------------------------------------------------------------------------
# built-in model families


def granular_media_model(V: Potential, W: Potential, d: int,
                         initial_law: Optional[InitialLaw] = None,
                         name: Optional[str] = None,
                         validate: bool = True) -> ModelSpec:
    """Space-homogeneous granular media dynamics.

    Drift kernel b(v, w) = grad V(v) + grad W(v - w) with sigma = sqrt(2) I;
    W must be even so the interaction is symmetric.  A superlinear W (e.g.
    |z|^3) marks the kernel for tamed integration.
    """
    if validate:
        _check_even(W, d)
        _check_gradient(V, d)
        _check_gradient(W, d)

    def kernel_eval(X, Y):
        return V.grad(X) + W.grad(np.asarray(X) - np.asarray(Y))

    mean_field = None
    if W.linear_grad_coeff is not None:
        cw = W.linear_grad_coeff

        def mean_field(X, points, weights):
            return V.grad(X) + cw * (X - weights @ points)

    lip = None
    if V.grad_lipschitz is not None and W.grad_lipschitz is not None:
        lip = V.grad_lipschitz + W.grad_lipschitz
    taming = 1.0 if W.grad_lipschitz is None or (V.grad_lipschitz is None) else 0.0

    kernel = DriftKernel(
        dim=d,
        eval=kernel_eval,
        lipschitz_bound=lip,
        taming_exponent=taming,
        law_free=W.grad_lipschitz == 0.0 and W.linear_grad_coeff == 0.0,
        mean_field=mean_field,
    )
    return ModelSpec(
        drift=kernel,
        diffusion=DiffusionSpec.isotropic(d),
        initial_law=initial_law or InitialLaw.gaussian(np.zeros(d), np.eye(d)),
        name=name or f"granular(V={V.name}, W={W.name}, d={d})",
    )


def vlasov_fokker_planck_model(U: Potential, A: Callable, B: Callable, d_prime: int,
                               initial_law: Optional[InitialLaw] = None,
                               a_lipschitz: Optional[float] = None,
                               b_lipschitz: Optional[float] = None,
                               name: Optional[str] = None,
                               validate: bool = True) -> ModelSpec:
    """Kinetic phase-space model on states (x, v) in R^{2 d'}.

    The drift kernel is b((x,v), (y,w)) = (-v, A(v) + B(x) + grad U(x - y));
    averaging the second argument over the full empirical measure realizes
    the convolution against the space marginal.  Noise enters the velocity
    block only: sigma = diag(0, sqrt(2) I).
    """
    if validate:
        _check_gradient(U, d_prime)
        _check_even(U, d_prime)
    d = 2 * d_prime

    def kernel_eval(X, Y):
        X = np.asarray(X)
        Y = np.asarray(Y)
        X, Y = np.broadcast_arrays(X, Y)
        x, v = X[..., :d_prime], X[..., d_prime:]
        y = Y[..., :d_prime]
        out = np.empty(X.shape)
        out[..., :d_prime] = -v
        out[..., d_prime:] = A(v) + B(x) + U.grad(x - y)
        return out

    mean_field = None
    if U.linear_grad_coeff is not None:
        cu = U.linear_grad_coeff

        def mean_field(X, points, weights):
            x, v = X[..., :d_prime], X[..., d_prime:]
            ybar = weights @ points[:, :d_prime]
            out = np.empty(X.shape)
            out[..., :d_prime] = -v
            out[..., d_prime:] = A(v) + B(x) + cu * (x - ybar)
            return out

    lip = None
    if a_lipschitz is not None and b_lipschitz is not None and U.grad_lipschitz is not None:
        lip = 1.0 + a_lipschitz + b_lipschitz + U.grad_lipschitz

    sigma = np.zeros((d, d))
    sigma[d_prime:, d_prime:] = np.sqrt(2.0) * np.eye(d_prime)
    return ModelSpec(
        drift=DriftKernel(dim=d, eval=kernel_eval, lipschitz_bound=lip, mean_field=mean_field),
        diffusion=DiffusionSpec(sigma),
        initial_law=initial_law or InitialLaw.gaussian(np.zeros(d), np.eye(d)),
        name=name or f"vfp(U={U.name}, d'={d_prime})",
    )


def linear_test_model(rate: float, d: int = 1, mean0: float = 0.0,
                      var0: float = 1.0) -> ModelSpec:
    """Law-independent Ornstein-Uhlenbeck model with a closed-form solution.

    Kernel b(X, Y) = rate * X and sigma = sqrt(2) I, so each coordinate is an
    OU process: mean mean0 * exp(-rate t), variance
    1/rate + (var0 - 1/rate) exp(-2 rate t).
    """
    if rate <= 0:
        raise ValidationError("rate must be positive")
    r = float(rate)

    def kernel_eval(X, Y):
        X = np.asarray(X, dtype=np.float64)
        return r * (X + np.zeros_like(np.asarray(Y, dtype=np.float64)))

    kernel = DriftKernel(
        dim=d,
        eval=kernel_eval,
        lipschitz_bound=r,
        law_free=True,
        mean_field=lambda X, points, weights: r * X,
    )
    return ModelSpec(
        drift=kernel,
        diffusion=DiffusionSpec.isotropic(d),
        initial_law=InitialLaw.gaussian(np.full(d, float(mean0)), np.eye(d) * float(var0)),
        name=f"linear(rate={r})",
    )


def ou_mean(t: float, mean0: float, rate: float) -> float:
    return mean0 * np.exp(-rate * t)


def ou_variance(t: float, var0: float, rate: float) -> float:
    return 1.0 / rate + (var0 - 1.0 / rate) * np.exp(-2.0 * rate * t)
