"""Regularly varying Levy noise on a finite symmetric set of rays.

The jump measure puts mass ``w_i * alpha * r**(-alpha - 1) dr`` on the ray
``r * v_i`` (``r > 0``) for unit H-norm profiles ``v_i``; every direction is
paired with its reflection ``-v_i`` of equal weight.  With this exact power
law the tail of the measure outside an H-ball of radius ``c`` is
``c**(-alpha) * sum(w)``, and the limit measure coincides with the jump
measure itself.

The process is split at radius ``eps**(-rho)``: jumps beyond it form a
compound Poisson process with rate ``beta_eps`` (the large jumps), the rest is
a compound Poisson process of small jumps on ``(r_min, eps**(-rho)]``.  Jumps
below ``r_min`` are dropped; the dropped variance per unit time and unit
weight is ``alpha / (2 - alpha) * r_min**(2 - alpha)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import pde_core


@dataclass(frozen=True)
class Direction:
    profile: np.ndarray
    weight: float
    label: str = ""


class NoiseSpec:
    """Stability index, ray directions and small-jump cutoff.

    Parameters
    ----------
    alpha : float
        Index of regular variation, in (0, 2).
    directions : sequence of Direction or (profile, weight[, label])
        Unit H-norm profiles with positive weights.  Missing reflections are
        added with the same weight, so ``[(v, 0.5)]`` describes ``+-v`` with
        total weight 1.
    r_min : float
        Radius below which small jumps are discarded.
    """

    symmetric = True

    def __init__(self, alpha: float, directions, r_min: float = 1.0e-3):
        if not 0.0 < alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
        if not r_min > 0.0:
            raise ValueError("r_min must be positive")
        self.alpha = float(alpha)
        self.r_min = float(r_min)
        axes: list[dict] = []
        for d in directions:
            if not isinstance(d, Direction):
                d = Direction(np.asarray(d[0], dtype=float), float(d[1]), *(d[2:3] or ("",)))
            norm = pde_core.h_norm(d.profile)
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"direction {d.label or len(axes)} has H-norm {norm}, expected 1")
            if not d.weight > 0:
                raise ValueError("direction weights must be positive")
            for ax in axes:
                if np.allclose(d.profile, ax["profile"], rtol=0, atol=1e-12):
                    raise ValueError(f"direction {d.label} listed twice")
                if np.allclose(d.profile, -ax["profile"], rtol=0, atol=1e-12):
                    if ax["paired"] or abs(d.weight - ax["weight"]) > 1e-12 * ax["weight"]:
                        raise ValueError(f"direction {d.label} breaks the symmetry nu(A) = nu(-A)")
                    ax["paired"] = True
                    break
            else:
                axes.append({"profile": np.array(d.profile, dtype=float), "weight": d.weight,
                             "label": d.label or f"v{len(axes)}", "paired": False})
        if not axes:
            raise ValueError("at least one direction is required")
        self.axes = np.array([ax["profile"] for ax in axes])
        self.axis_weights = np.array([ax["weight"] for ax in axes])
        self.directions = []
        for ax in axes:
            self.directions.append(Direction(ax["profile"], ax["weight"], ax["label"]))
            self.directions.append(Direction(-ax["profile"], ax["weight"], "-" + ax["label"]))
        self.weights = np.repeat(self.axis_weights, 2)
        self._cum = np.cumsum(self.weights)

    @property
    def n_modes(self) -> int:
        return self.axes.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def partner(self, i: int) -> int:
        """Index of the reflected direction ``-v_i``."""
        return i ^ 1

    def direction_axis(self, i: int) -> tuple[int, float]:
        return i // 2, (1.0 if i % 2 == 0 else -1.0)

    def tail_mass(self, c: float) -> float:
        """Mass of ``{y : ||y|| > c}``."""
        return c ** (-self.alpha) * self.total_weight

    def __repr__(self):
        labels = ", ".join(f"{d.label}:{d.weight:g}" for d in self.directions)
        return f"NoiseSpec(alpha={self.alpha}, directions=[{labels}], r_min={self.r_min})"


def unit_direction(coeffs) -> np.ndarray:
    a = np.asarray(coeffs, dtype=float)
    return a / pde_core.h_norm(a)


def h_inner(a, b) -> float:
    k = np.arange(1, np.shape(a)[-1] + 1)
    return float(np.sum((k * np.pi) ** 2 * np.asarray(a) * np.asarray(b)))


def default_spec(alpha: float, n_modes: int, phi_plus=None, weight: float = 0.5,
                 phi_weight: float | None = None, r_min: float = 1.0e-3) -> NoiseSpec:
    """``+-e_1`` (unit H-norm) with weight ``weight`` each, optionally ``+-phi+``."""
    dirs = [Direction(unit_direction(pde_core.basis_vector(1, n_modes)), weight, "e1")]
    if phi_plus is not None:
        dirs.append(Direction(unit_direction(phi_plus), phi_weight or weight, "phi"))
    return NoiseSpec(alpha, dirs, r_min)


@dataclass(frozen=True)
class ScalingParams:
    """Noise intensity and the exponents tying the jump split to the geometry.

    ``gamma_cap`` is the constant ``Gamma`` of the remainder estimate; it only
    enters the (advisory) upper bound on ``gamma``.
    """

    epsilon: float
    rho: float = 0.75
    gamma: float = 0.01
    theta_exp: float = 0.01
    gamma_cap: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def delta(self) -> float:
        """Margin ``eps**gamma`` of the reduced domain used for exits."""
        return self.epsilon ** self.gamma

    @property
    def delta2(self) -> float:
        return self.epsilon ** (2 * self.gamma)

    @property
    def large_jump_radius(self) -> float:
        return self.epsilon ** (-self.rho)

    def with_epsilon(self, epsilon: float) -> "ScalingParams":
        return ScalingParams(epsilon, self.rho, self.gamma, self.theta_exp, self.gamma_cap)


@dataclass
class ConstraintCheck:
    name: str
    ok: bool
    detail: str


def theta_bound(alpha: float) -> float:
    return (2 - alpha) / (2 * alpha)


def rho_bound(alpha: float, theta: float) -> float:
    return (2 - alpha) / (2 - (1 - theta) * alpha)


def gamma_bound(alpha: float, rho: float, theta: float, gamma_cap: float) -> float:
    return ((2 - alpha) * (1 - rho) - theta * alpha * rho) / (2 * (gamma_cap + 2))


def check_constants(alpha: float, scaling: ScalingParams) -> list[ConstraintCheck]:
    """Evaluate the admissibility inequalities for ``Theta``, ``rho`` and ``gamma``.

    ``Theta`` is checked against ``(2 - alpha) / (2 alpha)``; the looser bound
    ``(2 - alpha) / alpha`` is reported in the detail text.
    """
    th, rho, g = scaling.theta_exp, scaling.rho, scaling.gamma
    tb, rb = theta_bound(alpha), rho_bound(alpha, th)
    gb = gamma_bound(alpha, rho, th, scaling.gamma_cap)
    return [
        ConstraintCheck("theta", 0 < th < tb,
                        f"0 < Theta={th:g} < (2-alpha)/(2 alpha)={tb:.6g}"
                        f" (looser bound (2-alpha)/alpha={(2 - alpha) / alpha:.6g})"),
        ConstraintCheck("rho", 0.5 < rho < rb, f"1/2 < rho={rho:g} < {rb:.6g}"),
        ConstraintCheck("gamma", 0 < g < gb,
                        f"0 < gamma={g:g} < {gb:.6g} (Gamma={scaling.gamma_cap:g})"),
    ]


def warn_constants(alpha: float, scaling: ScalingParams) -> list[ConstraintCheck]:
    checks = check_constants(alpha, scaling)
    for c in checks:
        if not c.ok:
            warnings.warn(f"scaling constraint violated: {c.detail}", stacklevel=2)
    return checks


def large_jump_rate(spec: NoiseSpec, scaling: ScalingParams) -> float:
    """``beta_eps = eps**(alpha rho) * sum(w)``."""
    return scaling.epsilon ** (spec.alpha * scaling.rho) * spec.total_weight


def small_jump_rate(spec: NoiseSpec, scaling: ScalingParams) -> float:
    """Total rate of retained small jumps, radii in ``(r_min, eps**(-rho)]``."""
    R = scaling.large_jump_radius
    if R <= spec.r_min:
        return 0.0
    return spec.total_weight * (spec.r_min ** (-spec.alpha) - R ** (-spec.alpha))


def sample_interjump_time(beta: float, rng: np.random.Generator) -> float:
    """Exponential waiting time with mean ``1/beta`` by inverse CDF."""
    if not beta > 0:
        raise ValueError(f"jump rate must be positive, got {beta}")
    return -math.log1p(-rng.random()) / beta


def _pick_direction(spec: NoiseSpec, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(spec._cum, u * spec.total_weight, side="right"),
                      len(spec.weights) - 1)


def sample_large_jump_detail(spec: NoiseSpec, scaling: ScalingParams,
                             rng: np.random.Generator) -> tuple[int, float]:
    """Direction index and radius of one large jump (radius > ``eps**(-rho)``)."""
    u = rng.random(2)
    i = int(_pick_direction(spec, u[:1])[0])
    r = scaling.large_jump_radius * (1.0 - u[1]) ** (-1.0 / spec.alpha)
    return i, float(r)


def sample_large_jump(spec: NoiseSpec, scaling: ScalingParams, rng: np.random.Generator) -> np.ndarray:
    """Large jump ``W = r v_i``; the path applies ``eps * W``."""
    i, r = sample_large_jump_detail(spec, scaling, rng)
    return r * spec.directions[i].profile


def small_jump_coefficients(spec: NoiseSpec, scaling: ScalingParams, step_sizes,
                            rng: np.random.Generator) -> np.ndarray:
    """Per-step small-jump sums along each axis, shape ``(n_steps, n_axes)``.

    Row ``s`` is the sum of signed radii of the small jumps falling in step
    ``s``; the field increment is ``row @ spec.axes``.
    """
    step_sizes = np.asarray(step_sizes, dtype=float)
    out = np.zeros((step_sizes.size, spec.axes.shape[0]))
    rate = small_jump_rate(spec, scaling)
    if rate == 0.0 or step_sizes.size == 0:
        return out
    counts = rng.poisson(rate * step_sizes)
    total = int(counts.sum())
    if total == 0:
        return out
    u = rng.random((total, 2))
    idx = _pick_direction(spec, u[:, 0])
    a = spec.alpha
    lo, hi = spec.r_min ** (-a), scaling.large_jump_radius ** (-a)
    r = (lo - u[:, 1] * (lo - hi)) ** (-1.0 / a)
    signed = np.where(idx % 2 == 0, r, -r)
    flat = np.repeat(np.arange(step_sizes.size), counts) * out.shape[1] + idx // 2
    out += np.bincount(flat, weights=signed, minlength=out.size).reshape(out.shape)
    return out


def small_jump_radii(spec: NoiseSpec, scaling: ScalingParams, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    """``n`` radii from the truncated power law on ``(r_min, eps**(-rho)]``."""
    a = spec.alpha
    lo, hi = spec.r_min ** (-a), scaling.large_jump_radius ** (-a)
    return (lo - rng.random(n) * (lo - hi)) ** (-1.0 / a)


def sample_small_increment(spec: NoiseSpec, scaling: ScalingParams, dt: float,
                           rng: np.random.Generator) -> np.ndarray:
    """Increment of the small-jump process over ``dt``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return np.zeros(spec.n_modes)
    return small_jump_coefficients(spec, scaling, [dt], rng)[0] @ spec.axes


def small_jump_variance(spec: NoiseSpec, scaling: ScalingParams, axis: int = 0) -> float:
    """Closed-form variance per unit time of the coefficient along ``axis``."""
    a = spec.alpha
    R = scaling.large_jump_radius
    second = a / (2 - a) * (R ** (2 - a) - spec.r_min ** (2 - a))
    return 2.0 * spec.axis_weights[axis] * second


def stochastic_convolution_step(accum: np.ndarray, increment: np.ndarray, dt: float) -> np.ndarray:
    """``S(dt) accum + increment``; increments enter at the end of the step."""
    return pde_core.apply_semigroup(accum, dt) + increment


def convolution_exceedance(spec: NoiseSpec, scaling: ScalingParams, horizon: float, p: float,
                           dt: float, n_paths: int, rng: np.random.Generator) -> tuple[float, float]:
    """Fraction of paths with ``sup_{t <= T} ||eps xi*_t|| >= eps**p`` and its standard error."""
    n_steps = int(round(horizon / dt))
    k = np.arange(1, spec.n_modes + 1)
    decay = np.exp(-((k * np.pi) ** 2) * dt)
    hits = 0
    for _ in range(n_paths):
        coeffs = small_jump_coefficients(spec, scaling, np.full(n_steps, dt), rng)
        incs = scaling.epsilon * (coeffs @ spec.axes)
        acc = np.zeros(spec.n_modes)
        peak = 0.0
        for s in range(n_steps):
            acc = decay * acc + incs[s]
            peak = max(peak, pde_core.h_norm(acc))
        hits += peak >= scaling.epsilon ** p
    phat = hits / n_paths if n_paths else 0.0
    return phat, math.sqrt(max(phat * (1 - phat), 0.0) / max(n_paths, 1))
