"""Deterministic Chafee-Infante dynamics in a Dirichlet sine basis.

A field is stored as its coefficient vector ``a`` (shape ``(N,)``) against the
orthonormal basis ``e_k(z) = sqrt(2) sin(k pi z)``, ``k = 1..N``, of the
Dirichlet Laplacian on (0, 1).  Physical values live on the interior grid
``z_j = j / (M + 1)``, ``j = 1..M``; with ``M >= 4N`` the collocation
transform of the cubic nonlinearity is alias free, so the grid projection is
the exact Galerkin projection.

Time integration uses exponential Euler (first order exponential time
differencing): the heat semigroup is applied exactly and the reaction term is
advanced explicitly,

    a_{n+1} = exp(-L dt) a_n + (1 - exp(-L dt)) / L * F(a_n),

which keeps every Galerkin equilibrium an exact fixed point of the scheme.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

BLOWUP = 1.0e6


class IntegrationError(RuntimeError):
    """Raised when the time stepper leaves the stable regime."""


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the discretised Chafee-Infante problem.

    Parameters
    ----------
    lam : float
        Reaction strength; must satisfy ``pi**2 < lam`` and avoid ``(k pi)**2``.
    n_modes : int
        Number of sine modes ``N``.
    dt : float
        Time step of the exponential Euler scheme.
    t_max : float
        Default horizon for open-ended integrations (classification, relaxation).
    grid_points : int, optional
        Collocation points ``M``; defaults to ``4 * n_modes``.
    """

    lam: float = 20.0
    n_modes: int = 32
    dt: float = 1.0e-3
    t_max: float = 50.0
    grid_points: int = 0

    def __post_init__(self):
        if self.grid_points == 0:
            object.__setattr__(self, "grid_points", 4 * self.n_modes)
        problems = validate_model(self)
        if problems:
            raise ValueError("; ".join(problems))


def validate_model(params: ModelParams) -> list[str]:
    problems = []
    lam = params.lam
    if not lam > math.pi**2:
        problems.append(f"lambda = {lam} must exceed pi^2 = {math.pi**2:.6f}")
    else:
        k = max(1, round(math.sqrt(lam) / math.pi))
        for kk in (k - 1, k, k + 1):
            if kk >= 1 and abs(lam - (kk * math.pi) ** 2) <= 1e-9 * lam:
                problems.append(f"lambda = {lam} coincides with ({kk} pi)^2")
    if params.n_modes < 1:
        problems.append("n_modes must be positive")
    if params.grid_points < 4 * params.n_modes:
        problems.append(f"grid_points = {params.grid_points} must be >= 4 * n_modes")
    if not params.dt > 0:
        problems.append("dt must be positive")
    if not params.t_max > 0:
        problems.append("t_max must be positive")
    return problems


class Galerkin:
    """Sine-basis transforms and exponential Euler coefficients for one grid."""

    def __init__(self, n_modes: int, grid_points: int):
        self.n_modes = n_modes
        self.grid_points = grid_points
        self.k = np.arange(1, n_modes + 1, dtype=float)
        self.eig = (self.k * np.pi) ** 2
        self.grid = np.arange(1, grid_points + 1) / (grid_points + 1)
        # B: coefficients -> grid values; P: grid values -> coefficients (DST-I).
        self.B = np.ascontiguousarray(np.sqrt(2.0) * np.sin(np.pi * np.outer(self.grid, self.k)))
        self.P = np.ascontiguousarray(self.B.T / (grid_points + 1))
        self.sin1 = np.sin(np.pi * self.grid)

    def etd_coefficients(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        E = np.exp(-self.eig * h)
        return E, -np.expm1(-self.eig * h) / self.eig

    def evaluate(self, a: np.ndarray) -> np.ndarray:
        return self.B @ a

    def project(self, values: np.ndarray) -> np.ndarray:
        return self.P @ values


@functools.lru_cache(maxsize=16)
def galerkin(n_modes: int, grid_points: int) -> Galerkin:
    return Galerkin(n_modes, grid_points)


def _ops(params: ModelParams) -> Galerkin:
    return galerkin(params.n_modes, params.grid_points)


def basis_vector(k: int, n_modes: int) -> np.ndarray:
    """Coefficients of ``e_k``."""
    a = np.zeros(n_modes)
    a[k - 1] = 1.0
    return a


def l2_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.dot(a, a)))


def h_norm(a: np.ndarray) -> float:
    """Norm of H^1_0, ``||u|| = |u'|_{L^2}``."""
    k = np.arange(1, a.shape[-1] + 1)
    return float(np.sqrt(np.sum((k * np.pi * a) ** 2)))


def sup_norm(a: np.ndarray, params: ModelParams | None = None, grid_points: int = 0) -> float:
    """Grid estimate of ``|u|_inf``.

    The grid maximum underestimates the true supremum by at most
    ``|u''|_inf h**2 / 8`` with ``h = 1 / (M + 1)``.
    """
    if params is not None:
        ops = _ops(params)
    else:
        n = a.shape[-1]
        ops = galerkin(n, grid_points or 4 * n)
    return float(np.max(np.abs(ops.B @ a)))


def evaluate(a: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Values of the field at arbitrary points ``z``; exactly 0 at 0 and 1."""
    z = np.asarray(z, dtype=float)
    k = np.arange(1, a.shape[-1] + 1)
    vals = np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(z, k)) @ a
    return np.where((z == 0.0) | (z == 1.0), 0.0, vals)


def apply_semigroup(a: np.ndarray, t: float) -> np.ndarray:
    """Heat semigroup ``S(t)``: mode ``k`` decays by ``exp(-(k pi)^2 t)``."""
    if t < 0:
        raise ValueError(f"semigroup time must be non-negative, got {t}")
    if t == 0:
        return np.array(a, dtype=float, copy=True)
    k = np.arange(1, a.shape[-1] + 1)
    return a * np.exp(-((k * np.pi) ** 2) * t)


def nonlinearity(a: np.ndarray, params: ModelParams) -> np.ndarray:
    """Galerkin projection of ``f(u) = -lam (u^3 - u)``."""
    ops = _ops(params)
    u = ops.B @ a
    return ops.P @ (params.lam * (u - u**3))


def reaction(z, lam):
    """Pointwise reaction term ``f(z) = -lam (z^3 - z)``."""
    return -lam * (np.asarray(z) ** 3 - np.asarray(z))


def residual(a: np.ndarray, params: ModelParams) -> np.ndarray:
    """Coefficients of ``u'' + f(u)``."""
    return -_ops(params).eig * a + nonlinearity(a, params)


def flow(a: np.ndarray, t: float, params: ModelParams, dt: float | None = None) -> np.ndarray:
    """Deterministic solution ``u(t; x)`` by exponential Euler steps.

    The horizon is covered by ``floor(t / dt)`` full steps and one shorter
    final step, so the state is returned at exactly ``t``.
    """
    if t < 0:
        raise ValueError(f"flow time must be non-negative, got {t}")
    dt = params.dt if dt is None else dt
    ops = _ops(params)
    n = int(math.floor(t / dt + 1e-9))
    rem = t - n * dt
    out = np.array(a, dtype=float, copy=True)
    if n:
        E, P1 = ops.etd_coefficients(dt)
        if not kernels.etd_advance(out, n, E, P1, ops.eig, dt, ops.B, ops.P, params.lam, BLOWUP):
            raise IntegrationError(f"coefficients exceeded {BLOWUP:g} within t = {t}")
    if rem > 1e-12 * max(1.0, t):
        E, P1 = ops.etd_coefficients(rem)
        if not kernels.etd_advance(out, 1, E, P1, ops.eig, rem, ops.B, ops.P, params.lam, BLOWUP):
            raise IntegrationError(f"coefficients exceeded {BLOWUP:g} within t = {t}")
    return out


def trajectory(a: np.ndarray, t: float, params: ModelParams, every: int = 1) -> np.ndarray:
    """States at every ``every``-th step up to ``t`` (first row is ``a``)."""
    ops = _ops(params)
    E, P1 = ops.etd_coefficients(params.dt)
    n = int(math.floor(t / params.dt + 1e-9))
    rows = [np.array(a, dtype=float, copy=True)]
    cur = rows[0].copy()
    for _ in range(n // every):
        if not kernels.etd_advance(cur, every, E, P1, ops.eig, params.dt, ops.B, ops.P, params.lam, BLOWUP):
            raise IntegrationError("trajectory blew up")
        rows.append(cur.copy())
    return np.array(rows)


def energy(a: np.ndarray, params: ModelParams) -> float:
    """Ginzburg-Landau energy ``int 1/2 u'^2 + lam (u^4/4 - u^2/2) dz``.

    The gradient part is exact in the sine basis; the potential part uses the
    grid rule, which is exact for the quartic of an N-mode field when M >= 4N.
    """
    ops = _ops(params)
    u = ops.B @ a
    grad = 0.5 * float(np.sum(ops.eig * a * a))
    pot = params.lam * float(np.sum(0.25 * u**4 - 0.5 * u**2)) / (ops.grid_points + 1)
    return grad + pot


@dataclass
class EquilibriumSearch:
    equilibria: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def phi_plus(self) -> np.ndarray:
        return phi_plus_of(self.equilibria)


def newton_equilibrium(seed: np.ndarray, params: ModelParams, tol: float = 1e-12,
                       max_iter: int = 100) -> tuple[np.ndarray, bool, int]:
    """Newton iteration on ``-L a + F(a) = 0``."""
    ops = _ops(params)
    a = np.array(seed, dtype=float, copy=True)
    for it in range(1, max_iter + 1):
        u = ops.B @ a
        g = -ops.eig * a + ops.P @ (params.lam * (u - u**3))
        fprime = params.lam * (1.0 - 3.0 * u**2)
        J = -np.diag(ops.eig) + ops.P @ (fprime[:, None] * ops.B)
        step = np.linalg.solve(J, -g)
        a += step
        if not np.all(np.isfinite(a)):
            return a, False, it
        if np.max(np.abs(step)) < tol:
            return a, True, it
    return a, False, max_iter


def find_equilibria(params: ModelParams, amplitudes=(0.1, 0.5, 1.0),
                    residual_tol: float = 1e-8, merge_tol: float = 1e-6) -> EquilibriumSearch:
    """Equilibria reached by Newton from ``0`` and ``+-c e_1``.

    Duplicates closer than ``merge_tol`` in H-norm are merged.  Seeds that do
    not converge within 100 iterations, or converge with a residual above
    ``residual_tol``, are listed in ``failures``.
    """
    n = params.n_modes
    e1 = basis_vector(1, n)
    seeds = [np.zeros(n)]
    for c in amplitudes:
        seeds += [c * e1, -c * e1]
    out = EquilibriumSearch()
    for seed in seeds:
        a, ok, iters = newton_equilibrium(seed, params)
        res = h_norm(residual(a, params)) if ok else math.inf
        if not ok or res >= residual_tol:
            logger.warning("Newton from seed amplitude %.3g failed (iterations=%d, residual=%.3g)",
                           seed[0], iters, res)
            out.failures.append((seed, iters, res))
            continue
        if np.max(np.abs(seed)) == 0.0:
            a = np.zeros(n)
        if all(h_norm(a - b) >= merge_tol for b in out.equilibria):
            out.equilibria.append(a)
    out.equilibria.sort(key=mean_value)
    return out


def phi_plus_of(equilibria) -> np.ndarray:
    """The stable positive equilibrium: largest mean among those found."""
    means = [mean_value(a) for a in equilibria]
    best = int(np.argmax(means))
    if means[best] <= 0:
        raise ValueError("no equilibrium with positive mean")
    return np.array(equilibria[best])


def mean_value(a: np.ndarray) -> float:
    """Spatial mean ``int_0^1 u``; only odd modes contribute."""
    k = np.arange(1, a.size + 1)
    w = np.where(k % 2 == 1, 2.0 * np.sqrt(2.0) / (np.pi * k), 0.0)
    return float(w @ a)


def stable_equilibria(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    found = find_equilibria(params)
    plus = found.phi_plus
    return plus, -plus


def relaxation_time(a: np.ndarray, target: np.ndarray, radius: float, params: ModelParams,
                    t_max: float | None = None) -> float:
    """First step time at which ``|u(t; a) - target|_inf <= radius`` (``inf`` if never)."""
    ops = _ops(params)
    E, P1 = ops.etd_coefficients(params.dt)
    t_max = params.t_max if t_max is None else t_max
    cur = np.array(a, dtype=float, copy=True)
    tgt = ops.B @ target
    n = int(math.ceil(t_max / params.dt))
    for i in range(n + 1):
        if np.max(np.abs(ops.B @ cur - tgt)) <= radius:
            return i * params.dt
        if not kernels.etd_advance(cur, 1, E, P1, ops.eig, params.dt, ops.B, ops.P, params.lam, BLOWUP):
            raise IntegrationError("relaxation run blew up")
    return math.inf


def fit_affine(x, y) -> tuple[float, float]:
    """Least-squares ``y = intercept + slope * x``; returns ``(intercept, slope)``."""
    slope, intercept = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(intercept), float(slope)
