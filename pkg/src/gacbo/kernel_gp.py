"""Squared-exponential kernel, exact GP posterior and marginal-likelihood scoring.

Everything here works on a single graph component: a node regressed on its
parent values and action values.  The signal variance is fixed at one so
that ``k(s, s') <= 1`` holds everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER_START = 1e-10
JITTER_MAX = 1e-4


class FactorizationError(np.linalg.LinAlgError):
    """Raised when (K + noise) stays indefinite after jitter escalation."""


@dataclass(frozen=True)
class Kernel:
    lengthscales: tuple[float, ...]

    def __post_init__(self):
        if any(not (ls > 0) for ls in self.lengthscales):
            raise ValueError(f"lengthscales must be positive, got {self.lengthscales}")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def matrix(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return se_gram(x1, x2, np.asarray(self.lengthscales, dtype=float))


def se_gram(x1: np.ndarray, x2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """Gram matrix ``exp(-0.5 * sum_d ((x1_d - x2_d) / l_d)^2)``.

    ``lengthscales`` may be ``(d,)`` or a batch ``(G, d)``; the result is then
    ``(n1, n2)`` or ``(G, n1, n2)``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    diff2 = (x1[:, None, :] - x2[None, :, :]) ** 2
    inv = 1.0 / np.asarray(lengthscales, dtype=float) ** 2
    if inv.ndim == 1:
        return np.exp(-0.5 * diff2 @ inv)
    return np.exp(-0.5 * np.einsum("ijd,gd->gij", diff2, inv))


def kernel_eval(kernel: Kernel, s, s2) -> float:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    s2 = np.atleast_1d(np.asarray(s2, dtype=float))
    if s.shape != (kernel.dim,) or s2.shape != (kernel.dim,):
        raise ValueError(f"expected vectors of dimension {kernel.dim}, got {s.shape} and {s2.shape}")
    z = (s - s2) / np.asarray(kernel.lengthscales)
    return float(np.exp(-0.5 * z @ z))


@dataclass(frozen=True)
class ComponentData:
    inputs: np.ndarray
    outputs: np.ndarray
    noise_sd: float

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x.reshape(len(y), -1) if len(y) else x.reshape(0, 0)
        if x.ndim != 2:
            raise ValueError("inputs must be a 2-D array")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} input rows but {y.shape[0]} outputs")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    def __len__(self) -> int:
        return self.outputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def cholesky_with_jitter(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START
    eye = np.eye(a.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(a + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(f"matrix of size {a.shape[0]} not positive definite up to jitter {JITTER_MAX}")


class GpPosterior:
    """Zero-mean GP conditioned on one component's data.  Immutable."""

    def __init__(self, kernel: Kernel, data: ComponentData):
        if len(data) and data.dim != kernel.dim:
            raise ValueError(f"kernel dimension {kernel.dim} != data dimension {data.dim}")
        self.kernel = kernel
        self.data = data
        if len(data):
            k = kernel.matrix(data.inputs, data.inputs)
            self._gram = k.copy()
            k[np.diag_indices_from(k)] += data.noise_sd**2
            self._chol = cholesky_with_jitter(k)
            self._alpha = solve_triangular(
                self._chol.T, solve_triangular(self._chol, data.outputs, lower=True), lower=False
            )
        else:
            self._chol = None
            self._alpha = None

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.kernel.dim)
        if self._chol is None:
            return np.zeros(x.shape[0]), np.ones(x.shape[0])
        ks = self.kernel.matrix(x, self.data.inputs)
        mean = ks @ self._alpha
        v = solve_triangular(self._chol, ks.T, lower=True, check_finite=False)
        var = 1.0 - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)


    def smooth(self, targets: np.ndarray) -> np.ndarray:
        """Posterior mean at the training inputs had ``targets`` been observed there instead."""
        targets = np.asarray(targets, dtype=float)
        if self._chol is None:
            return np.zeros_like(targets)
        alpha = solve_triangular(self._chol.T, solve_triangular(self._chol, targets, lower=True), lower=False)
        return self._gram @ alpha


def posterior_at(gp: GpPosterior, s) -> tuple[float, float]:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if len(gp.data) and s.shape != (gp.kernel.dim,):
        raise ValueError(f"query dimension {s.shape} does not match training inputs ({gp.kernel.dim},)")
    mean, var = gp.predict(s.reshape(1, -1))
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(data: ComponentData, kernel: Kernel) -> float:
    if len(data) == 0:
        raise ValueError("log marginal likelihood needs at least one observation")
    k = kernel.matrix(data.inputs, data.inputs)
    k[np.diag_indices_from(k)] += data.noise_sd**2
    chol = cholesky_with_jitter(k)
    z = solve_triangular(chol, data.outputs, lower=True)
    t = len(data)
    return float(-0.5 * t * LOG_2PI - np.log(np.diag(chol)).sum() - 0.5 * z @ z)


@dataclass(frozen=True)
class HyperPrior:
    """Finite lengthscale grid with prior weights (quadrature for the hyperparameter integral)."""

    grid: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        grid = np.atleast_2d(np.asarray(self.grid, dtype=float))
        if grid.shape[0] == 0:
            raise ValueError("hyperprior grid is empty")
        w = np.full(grid.shape[0], 1.0 / grid.shape[0]) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (grid.shape[0],) or np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-12):
            raise ValueError("prior weights must be nonnegative, one per grid point, summing to 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.grid.shape[1]

    def kernels(self) -> list[Kernel]:
        return [Kernel(tuple(row)) for row in self.grid]

    @classmethod
    def log_grid(cls, dim: int, points: int = 5, low: float = 0.1, high: float = 10.0, max_size: int = 125):
        """Product grid of log-spaced lengthscales with uniform weights.

        When ``points**dim`` exceeds ``max_size`` the grid collapses to shared
        (isotropic) lengthscales so the size stays at ``points``.
        """
        axis = np.logspace(np.log10(low), np.log10(high), points)
        if dim == 0:
            return cls(np.zeros((1, 0)))
        if points**dim <= max_size:
            mesh = np.meshgrid(*([axis] * dim), indexing="ij")
            return cls(np.stack([m.reshape(-1) for m in mesh], axis=1))
        return cls(np.repeat(axis[:, None], dim, axis=1))


@dataclass(frozen=True)
class ComponentFit:
    score: float
    kernel: Kernel
    log_terms: np.ndarray


def fit_component(data: ComponentData, prior: HyperPrior) -> ComponentFit:
    """Score ``log sum_theta pi(theta) p(v | theta)`` and pick the MAP lengthscales.

    The marginal likelihoods for every grid point are computed with one
    batched Cholesky; grid points that fail fall back to jitter escalation.
    """
    if len(data) == 0:
        raise ValueError("component score needs at least one observation")
    if prior.dim != data.dim:
        raise ValueError(f"prior dimension {prior.dim} != data dimension {data.dim}")
    t = len(data)
    ks = se_gram(data.inputs, data.inputs, prior.grid)
    ks[:, np.arange(t), np.arange(t)] += data.noise_sd**2
    try:
        chols = np.linalg.cholesky(ks)
    except np.linalg.LinAlgError:
        chols = np.stack([cholesky_with_jitter(k) for k in ks])
    z = np.linalg.solve(chols, np.broadcast_to(data.outputs, (len(ks), t))[..., None])[..., 0]
    logdet = np.log(np.diagonal(chols, axis1=1, axis2=2)).sum(axis=1)
    lml = -0.5 * t * LOG_2PI - logdet - 0.5 * np.einsum("gi,gi->g", z, z)
    with np.errstate(divide="ignore"):
        terms = lml + np.log(prior.weights)
    score = float(logsumexp(terms))
    if not np.isfinite(score):
        # every grid point underflowed: fall back to the best single term
        score = float(np.max(terms))
    best = int(np.argmax(terms))
    return ComponentFit(score=score, kernel=Kernel(tuple(prior.grid[best])), log_terms=terms)


def component_score(data: ComponentData, prior: HyperPrior) -> float:
    return fit_component(data, prior).score
