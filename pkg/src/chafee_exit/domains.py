"""Domains of attraction, reduced domains and threshold radii.

A state belongs to ``D+`` when the deterministic flow takes it to ``phi+``.
Reduced domains are nested through a tuple of margins ``(d1, ..., dn)``:
``x`` lies in ``D(d1, ..., dn)`` if the sup-norm ball of radius ``dn`` around
every point of its forward orbit lies in ``D(d1, ..., d_{n-1})``, and
``D()`` is the full domain.  Ball containment is tested with ``K`` probes
``u(t_j) +- dn sin(k pi z)``, ``k = 1..K/2``, at orbit times spaced
``probe_factor * dt`` apart, until the orbit is within ``classify_tol`` of
the equilibrium.

Two monotonicity shortcuts keep this affordable.  The Chafee-Infante flow is
order preserving and ``c sin(pi z)`` is a subsolution for ``c**2 < 1 -
pi**2 / lam``, so any field above ``pos_margin * sin(pi z)`` converges to
``phi+``.  Likewise every ``D+(...)`` is closed under pointwise increase, so
once the lower barrier ``phi+ - r g`` (``g`` a boundary-layer ramp) is known
to belong to ``D+(deltas)``, every field above it on the grid does too; the
certified ``r`` is found by bisection.  Both shortcuts can be switched off.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import kernels, pde_core
from .noise import NoiseSpec, ScalingParams

logger = logging.getLogger(__name__)


class Basin(IntEnum):
    MINUS = -1
    UNRESOLVED = 0
    PLUS = 1


def normalize_deltas(deltas) -> tuple[float, ...]:
    """Margins as a tuple of positive floats; a scalar means ``(delta,)``, zeros drop out."""
    if deltas is None:
        return ()
    if np.ndim(deltas) == 0:
        deltas = (deltas,)
    out = []
    for d in deltas:
        d = float(d)
        if d < 0 or math.isnan(d):
            raise ValueError(f"margins must be non-negative, got {d}")
        if d > 0:
            out.append(d)
    return tuple(out)


def delta_key(deltas) -> str:
    d = normalize_deltas(deltas)
    return ":".join(repr(x) for x in d) if d else "0"


def parse_delta_key(text: str) -> tuple[float, ...]:
    text = text.strip()
    if text in ("", "0"):
        return ()
    return normalize_deltas([float(t) for t in text.split(":")])


class DomainGeometry:
    """Equilibria, classification and reduced-domain membership for one model.

    Parameters
    ----------
    params : ModelParams
    classify_tol : float
        Sup-norm radius around ``phi+-`` that counts as converged.
    t_classify_max : float, optional
        Classification horizon; defaults to ``params.t_max``.
    probe_count : int
        Number ``K`` of probes (even).
    probe_factor : int
        Orbit sampling interval in steps.
    shortcuts : bool
        Enable the positivity and barrier shortcuts.
    pos_margin : float
        Amplitude ``c`` of the positivity floor ``c sin(pi z)``.
    barrier_width : float
        Width of the boundary ramp of the certification barrier.
    cert_safety : float
        Factor (< 1) applied to the bisected barrier depth.
    """

    def __init__(self, params: pde_core.ModelParams, classify_tol: float = 1e-3,
                 t_classify_max: float | None = None, probe_count: int = 8,
                 probe_factor: int = 10, shortcuts: bool = True, pos_margin: float = 1e-3,
                 barrier_width: float = 0.05, cert_safety: float = 0.9, phi_plus=None):
        if probe_count < 2 or probe_count % 2:
            raise ValueError("probe_count must be a positive even number")
        if probe_factor < 1:
            raise ValueError("probe_factor must be >= 1")
        if pos_margin ** 2 >= 1 - math.pi**2 / params.lam:
            raise ValueError("pos_margin too large for the positivity floor to be a subsolution")
        self.params = params
        self.classify_tol = float(classify_tol)
        self.t_classify_max = float(params.t_max if t_classify_max is None else t_classify_max)
        self.probe_count = int(probe_count)
        self.probe_factor = int(probe_factor)
        self.shortcuts = bool(shortcuts)
        self.pos_margin = float(pos_margin)
        self.barrier_width = float(barrier_width)
        self.cert_safety = float(cert_safety)

        ops = pde_core._ops(params)
        self.ops = ops
        if phi_plus is None:
            phi_plus, _ = pde_core.stable_equilibria(params)
        self.phi_plus = np.asarray(phi_plus, dtype=float)
        self.phi_minus = -self.phi_plus
        self.phi_grid = ops.B @ self.phi_plus
        self.E, self.P1 = ops.etd_coefficients(params.dt)
        self.pos_floor = self.pos_margin * ops.sin1
        self.max_steps = int(math.ceil(self.t_classify_max / params.dt))

        n = params.n_modes
        self.probes = []
        for k in range(1, self.probe_count // 2 + 1):
            p = np.zeros(n)
            if k <= n:
                p[k - 1] = 1.0 / math.sqrt(2.0)
            self.probes.append(p)
            self.probes.append(-p)

        z = ops.grid
        eta = self.barrier_width
        self.ramp = np.minimum(1.0, np.minimum(z / eta, (1.0 - z) / eta))
        self.ramp_coeffs = ops.P @ self.ramp
        ratio = (ops.B @ self.ramp_coeffs) / self.ramp
        # Barrier states phi+ - r * ramp_coeffs lie below phi+ - (r * ratio_min) * ramp.
        self._ramp_ratio = float(np.min(ratio))
        self.table: dict[tuple[int, int, tuple[float, ...]], float] = {}
        self._cert: dict[tuple[float, ...], float | None] = {}

    # -- basic classification ------------------------------------------------
    def classify(self, x) -> Basin:
        a = np.array(x, dtype=float, copy=True)
        code, _ = kernels.etd_classify(a, self.max_steps, self.E, self.P1, self.ops.eig,
                                       self.params.dt, self.ops.B, self.ops.P, self.params.lam,
                                       self.phi_grid, self.classify_tol, self.pos_floor,
                                       self.shortcuts)
        if code == kernels.BLOWN_UP:
            raise pde_core.IntegrationError("classification flow blew up")
        return Basin(code)

    def equilibrium(self, sign: int) -> np.ndarray:
        return self.phi_plus if sign > 0 else self.phi_minus

    # -- reduced domains -----------------------------------------------------
    def member(self, x, deltas=(), use_cert: bool = True) -> Basin:
        """Sign of the reduced domain ``D(deltas)`` containing ``x``, or UNRESOLVED."""
        deltas = normalize_deltas(deltas)
        if not deltas:
            return self.classify(x)
        inner, d = deltas[:-1], deltas[-1]
        cert = self.cert_radius(deltas) if (use_cert and self.shortcuts) else None
        barrier = self.phi_grid - cert * self.ramp if cert is not None else None
        ops, p = self.ops, self.params
        u = np.array(x, dtype=float, copy=True)
        sign = 0
        for _ in range(self.max_steps // self.probe_factor + 1):
            ug = ops.B @ u
            if barrier is not None:
                if np.all(ug >= barrier):
                    return Basin.PLUS if sign >= 0 else Basin.UNRESOLVED
                if np.all(ug <= -barrier):
                    return Basin.MINUS if sign <= 0 else Basin.UNRESOLVED
            for q in self.probes:
                s = self.member(u + d * q, inner)
                if s == Basin.UNRESOLVED or (sign and s != sign):
                    return Basin.UNRESOLVED
                sign = int(s)
            if np.max(np.abs(ug - sign * self.phi_grid)) < self.classify_tol:
                return Basin(sign)
            if not kernels.etd_advance(u, self.probe_factor, self.E, self.P1, ops.eig, p.dt,
                                       ops.B, ops.P, p.lam, pde_core.BLOWUP):
                raise pde_core.IntegrationError("membership flow blew up")
        return Basin.UNRESOLVED

    def in_reduced_domain(self, x, delta=(), sign: int | None = None) -> bool:
        s = self.member(x, delta)
        if s == Basin.UNRESOLVED:
            return False
        return sign is None or int(s) == int(np.sign(sign))

    def cert_radius(self, deltas) -> float | None:
        """Depth ``r`` such that every grid field above ``phi+ - r * ramp`` is in ``D+(deltas)``.

        ``None`` if even ``phi+`` fails the probe test.
        """
        deltas = normalize_deltas(deltas)
        if deltas in self._cert:
            return self._cert[deltas]
        if self.member(self.phi_plus, deltas, use_cert=False) != Basin.PLUS or self._ramp_ratio <= 0:
            self._cert[deltas] = None
            return None
        lo, hi = 0.0, 2.0 * float(np.max(np.abs(self.phi_grid)))
        while hi - lo > 1e-3 * hi:
            mid = 0.5 * (lo + hi)
            x = self.phi_plus - mid * self.ramp_coeffs
            if self.member(x, deltas, use_cert=False) == Basin.PLUS:
                lo = mid
            else:
                hi = mid
        r = self.cert_safety * lo * self._ramp_ratio
        self._cert[deltas] = r if r > 0 else None
        logger.debug("certified barrier depth %s for deltas %s", self._cert[deltas], deltas)
        return self._cert[deltas]

    def barrier(self, deltas, sign: int) -> np.ndarray | None:
        """Grid barrier for ``sign`` (fields with ``sign * (u - b) >= 0`` are inside)."""
        r = self.cert_radius(deltas) if self.shortcuts else None
        if r is None:
            return None
        return sign * (self.phi_grid - r * self.ramp)

    # -- thresholds ----------------------------------------------------------
    def threshold_radius(self, base, v, deltas=(), sign: int | None = None,
                         rel_tol: float = 1e-4, r_start: float = 0.05,
                         r_max: float = 1e3) -> float:
        """Smallest ``r`` with ``base + r v`` outside ``D^sign(deltas)`` (bisection).

        Returns ``inf`` when the ray stays inside up to ``r_max`` and ``0`` when
        ``base`` itself is outside.  Unresolved or failed classifications count
        as outside.
        """
        base = np.asarray(base, dtype=float)
        v = np.asarray(v, dtype=float)
        deltas = normalize_deltas(deltas)
        if sign is None:
            sign = int(self.classify(base))
            if sign == 0:
                raise ValueError("base state does not classify to either equilibrium")

        def inside(r):
            try:
                return int(self.member(base + r * v, deltas)) == sign
            except pde_core.IntegrationError:
                return False

        if not inside(0.0):
            return 0.0
        lo, hi = 0.0, max(deltas[-1] if deltas else 0.0, r_start)
        while inside(hi):
            lo, hi = hi, 2.0 * hi
            if hi > r_max:
                return math.inf
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if inside(mid):
                lo = mid
            else:
                hi = mid
        return hi

    def table_radius(self, sign: int, index: int, deltas=()) -> float:
        key = (int(np.sign(sign)), int(index), normalize_deltas(deltas))
        if key not in self.table:
            raise KeyError(f"no threshold for sign {key[0]}, direction {key[1]}, margins {key[2]}")
        return self.table[key]

    def build_tables(self, spec: NoiseSpec, margin_sets, signs=(1, -1), use_symmetry: bool = True,
                     workers: int = 1) -> dict:
        """Fill ``table`` with ``r_i^sign(deltas)`` for every direction and margin set."""
        margin_sets = [normalize_deltas(m) for m in margin_sets]
        signs = sorted({int(np.sign(s)) for s in signs}, reverse=True)
        todo = []
        for deltas in margin_sets:
            for s in signs:
                if use_symmetry and s < 0 and 1 in signs:
                    continue
                for i in range(len(spec.directions)):
                    if (s, i, deltas) not in self.table:
                        todo.append((s, i, deltas))
        jobs = [(s, spec.directions[i].profile, d) for s, i, d in todo]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                radii = list(pool.map(_table_job, [self] * len(jobs), jobs))
        else:
            radii = [_table_job(self, j) for j in jobs]
        for key, r in zip(todo, radii):
            self.table[key] = r
        if use_symmetry and -1 in signs:
            for deltas in margin_sets:
                for i in range(len(spec.directions)):
                    plus = self.table.get((1, spec.partner(i), deltas))
                    if plus is not None:
                        self.table.setdefault((-1, i, deltas), plus)
        return self.table

    def __getstate__(self):
        state = self.__dict__.copy()
        state["table"] = {}
        return state

    # -- persistence ---------------------------------------------------------
    def fingerprint(self, spec: NoiseSpec) -> str:
        """Hash of everything a threshold depends on."""
        h = hashlib.sha256()
        p = self.params
        text = (f"lam={p.lam!r};N={p.n_modes};M={p.grid_points};dt={p.dt!r};"
                f"tol={self.classify_tol!r};tmax={self.t_classify_max!r};K={self.probe_count};"
                f"pf={self.probe_factor};sc={self.shortcuts};pm={self.pos_margin!r};"
                f"bw={self.barrier_width!r};cs={self.cert_safety!r};ndir={len(spec.directions)}")
        h.update(text.encode())
        for d in spec.directions:
            h.update(np.ascontiguousarray(d.profile, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def save_tables(self, path, spec: NoiseSpec) -> None:
        lines = [f"# threshold table hash={self.fingerprint(spec)}",
                 "lambda,sign,direction_index,delta,radius"]
        for (s, i, deltas), r in sorted(self.table.items(), key=lambda kv: (kv[0][2], -kv[0][0], kv[0][1])):
            lines.append(f"{self.params.lam!r},{s},{i},{delta_key(deltas)},{r!r}")
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)

    def load_tables(self, path, spec: NoiseSpec) -> int:
        """Merge a cache file; returns the number of rows, 0 if missing or stale."""
        if not os.path.exists(path):
            return 0
        with open(path) as fh:
            header = fh.readline().strip()
            want = f"# threshold table hash={self.fingerprint(spec)}"
            if header != want:
                logger.warning("ignoring threshold cache %s: fingerprint mismatch", path)
                return 0
            fh.readline()
            n = 0
            for line in fh:
                if not line.strip():
                    continue
                lam, s, i, dk, r = line.strip().split(",")
                self.table[(int(s), int(i), parse_delta_key(dk))] = float(r)
                n += 1
        return n


def _table_job(geom: DomainGeometry, job) -> float:
    sign, v, deltas = job
    return geom.threshold_radius(geom.equilibrium(sign), v, deltas, sign=sign)


def default_margins(scaling: ScalingParams) -> list[tuple[float, ...]]:
    """Margin sets used by the exit driver and diagnostics for one ``eps``."""
    d1, d2 = scaling.delta, scaling.delta2
    return [(), (d1,), (d1, d2), (d1, d2, d2)]


def characteristic_rate(spec: NoiseSpec, geom: DomainGeometry, scaling: ScalingParams,
                        sign: int = 1) -> float:
    """``lambda(eps) = eps**alpha * sum_i w_i r_i(0)**(-alpha)``; infinite radii add 0."""
    return scaling.epsilon ** spec.alpha * exit_mass(spec, geom, sign)


def exit_mass(spec: NoiseSpec, geom: DomainGeometry, sign: int = 1, deltas=()) -> float:
    """``mu`` mass of jumps from ``phi^sign`` leaving ``D^sign(deltas)``."""
    total = 0.0
    for i, w in enumerate(spec.weights):
        r = geom.table_radius(sign, i, deltas)
        if r == 0.0:
            return math.inf
        total += float(w) * r ** (-spec.alpha) if math.isfinite(r) else 0.0
    return float(total)


@dataclass
class HypothesisReport:
    h1: bool
    h1_detail: str
    shell_mass: dict
    shell_decreasing: bool

    def lines(self) -> list[str]:
        out = [f"H.1 {'holds' if self.h1 else 'fails'}: {self.h1_detail}"]
        for eps, m in self.shell_mass.items():
            out.append(f"H.2 shell mass at eps={eps!r}: {m:.6g}")
        out.append(f"H.2 shell mass decreasing toward small eps: {self.shell_decreasing}")
        return out


def check_hypotheses(spec: NoiseSpec, geom: DomainGeometry, scalings, sign: int = 1) -> HypothesisReport:
    """Finite-threshold check (H.1) and separatrix-shell masses (H.2 proxy)."""
    full = [geom.table_radius(sign, i) for i in range(len(spec.directions))]
    finite = [i for i, r in enumerate(full) if math.isfinite(r)]
    h1 = bool(finite)
    detail = (f"finite thresholds along directions {finite}" if h1
              else "every direction has an infinite threshold")
    shell = {}
    for sc in sorted(scalings, key=lambda s: -s.epsilon):
        reduced = (sc.delta, sc.delta2)
        m = 0.0
        for i, w in enumerate(spec.weights):
            r_red = geom.table_radius(sign, i, reduced)
            r_full = full[i]
            a = r_red ** (-spec.alpha) if math.isfinite(r_red) else 0.0
            b = r_full ** (-spec.alpha) if math.isfinite(r_full) else 0.0
            m += float(w) * (a - b)
        shell[sc.epsilon] = m
    vals = list(shell.values())
    decreasing = all(x >= y for x, y in zip(vals, vals[1:]))
    return HypothesisReport(h1, detail, shell, decreasing)


@dataclass
class RelaxationFit:
    t_rec: float
    kappa: float
    eps: list
    times: list


def relaxation_fit(spec: NoiseSpec, geom: DomainGeometry, scalings, sign: int = 1,
                   t_max: float | None = None) -> RelaxationFit:
    """Fit ``T(eps) = T_rec + kappa * gamma * |ln eps|`` to measured relaxation times.

    ``T(eps)`` is the slowest time, over table directions with a finite
    threshold, for ``phi + 0.999 r_i(eps**gamma) v_i`` to come within
    ``eps**(2 gamma) / 2`` of ``phi`` in sup norm.  Needs tables for
    ``(eps**gamma,)``.
    """
    phi = geom.equilibrium(sign)
    eps, times = [], []
    gamma = None
    for sc in scalings:
        gamma = sc.gamma
        worst = 0.0
        for i, d in enumerate(spec.directions):
            r = geom.table_radius(sign, i, (sc.delta,))
            if not math.isfinite(r) or r <= 0:
                continue
            t = pde_core.relaxation_time(phi + 0.999 * r * d.profile, phi, 0.5 * sc.delta2,
                                         geom.params, t_max=t_max)
            worst = max(worst, t)
        eps.append(sc.epsilon)
        times.append(worst)
    if len(eps) < 2:
        raise ValueError("relaxation fit needs at least two eps values")
    logs = np.abs(np.log(np.asarray(eps)))
    t_rec, slope = pde_core.fit_affine(logs, times)
    return RelaxationFit(t_rec, slope / gamma, eps, times)
