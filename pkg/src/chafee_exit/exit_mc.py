"""Monte Carlo first exits of the jump-driven Chafee-Infante equation.

Between large jumps the state evolves by exponential Euler steps with the
small-jump increments ``eps * (row @ axes)`` injected at the end of every step.
Every ``probe_factor`` steps the state is compared with the certified barrier
of ``D(eps**gamma)`` and, when the comparison is inconclusive, put through
the full probe test.  At the end of an epoch (exponential with rate
``beta_eps``) the large jump ``eps * W`` is added and membership is tested
again; an exit there is tagged ``large_jump``.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from . import kernels, pde_core, rng as rng_mod
from .domains import DomainGeometry, characteristic_rate
from .noise import (NoiseSpec, ScalingParams, large_jump_rate, sample_interjump_time,
                    sample_large_jump_detail, small_jump_coefficients)

logger = logging.getLogger(__name__)

CAUSES = ("large_jump", "drift_or_small_noise", "censored")
RECORD_FIELDS = ("seed_id", "epsilon", "tau", "normalized_tau", "n_large_jumps", "cause")


@dataclass(frozen=True)
class ExitRecord:
    seed_id: int
    epsilon: float
    tau: float
    normalized_tau: float
    n_large_jumps: int
    cause: str

    def row(self) -> list[str]:
        return [str(self.seed_id), repr(self.epsilon), repr(self.tau), repr(self.normalized_tau),
                str(self.n_large_jumps), self.cause]

    @classmethod
    def from_row(cls, row) -> "ExitRecord":
        return cls(int(row[0]), float(row[1]), float(row[2]), float(row[3]), int(row[4]), row[5].strip())


@dataclass
class EpochDiagnostics:
    """What happened in one inter-jump epoch.

    ``stayed`` is False when the path left the domain before the jump;
    ``jump_index``/``jump_radius`` are None for an epoch cut short by an exit
    or by censoring.  ``post_in`` / ``post_in_tilde`` record membership of
    the post-jump state in ``D(eps^g)`` and ``D(eps^g, eps^2g)``;
    ``start_in_tilde`` the same for the epoch's initial state.
    """

    length: float
    stayed: bool
    max_dev: float
    start_in_tilde: bool
    jump_index: int | None = None
    jump_radius: float | None = None
    post_in: bool | None = None
    post_in_tilde: bool | None = None
    state: np.ndarray | None = field(default=None, repr=False)


@dataclass
class PathOptions:
    """Switches for ``simulate_path``.

    ``t_max_path`` defaults to ``t_max_factor / lambda(eps)``.  ``forced_jumps`` is a
    sequence of ``(epoch_length or None, W)`` pairs replacing the first
    sampled epochs; ``W`` is unscaled.
    """

    t_max_path: float | None = None
    t_max_factor: float = 50.0
    small_noise: bool = True
    large_jumps: bool = True
    diagnostics: bool = False
    dump: bool = False
    forced_jumps: tuple = ()
    chunk_steps: int = 2000
    sign: int | None = None
    keep_states: bool = False


@dataclass
class PathResult:
    record: ExitRecord
    epochs: list
    trajectory: list


class _Stepper:
    """Small-noise evolution of one path; owns the geometry-derived arrays."""

    def __init__(self, geom: DomainGeometry, spec: NoiseSpec, scaling: ScalingParams,
                 small_noise: bool):
        self.geom = geom
        self.spec = spec
        self.scaling = scaling
        self.small_noise = small_noise
        p = geom.params
        self.p = p
        self.ops = geom.ops
        self.E, self.P1 = geom.E, geom.P1
        self.V = np.ascontiguousarray(spec.axes)

    def noise(self, n: int, h: float, rng) -> np.ndarray:
        if not self.small_noise:
            return np.zeros((n, 0))
        return small_jump_coefficients(self.spec, self.scaling, np.full(n, h), rng)

    def segment(self, a, start, stop, noise, barrier, sign, dev=None, dev_stop=math.inf,
                h=None):
        if h is None:
            E, P1, h = self.E, self.P1, self.p.dt
        else:
            E, P1 = self.ops.etd_coefficients(h)
        V = self.V if noise.shape[1] else np.zeros((0, self.V.shape[1]))
        use_barrier = barrier is not None
        bar = barrier if use_barrier else np.zeros(self.ops.grid_points)
        track = dev is not None
        d = dev if track else np.zeros(self.p.n_modes)
        return kernels.noisy_segment(a, start, stop, noise, V, self.scaling.epsilon, E, P1,
                                     self.ops.eig, h, self.ops.B, self.ops.P, self.p.lam,
                                     self.geom.probe_factor, bar, int(sign), use_barrier, d,
                                     track, dev_stop, pde_core.BLOWUP)


def _inside(geom, a, deltas, sign, barrier) -> bool:
    if barrier is not None and np.all(sign * (geom.ops.B @ a - barrier) >= 0.0):
        return True
    return int(geom.member(a, deltas)) == sign


def simulate_path(x0, spec: NoiseSpec, scaling: ScalingParams, geom: DomainGeometry,
                  rng: np.random.Generator, opts: PathOptions | None = None,
                  seed_id: int = 0, rate: float | None = None) -> PathResult:
    """Run one path from ``x0`` until it leaves ``D(eps**gamma)`` or is censored."""
    opts = opts or PathOptions()
    p = geom.params
    dt = p.dt
    delta = (scaling.delta,)
    tilde = (scaling.delta, scaling.delta2)
    x0 = np.asarray(x0, dtype=float)
    sign = opts.sign
    if sign is None:
        sign = int(geom.member(x0, delta))
    if sign == 0 or int(geom.member(x0, delta)) != sign:
        raise ValueError("initial state is not inside the reduced domain D(eps^gamma)")
    if rate is None:
        rate = characteristic_rate(spec, geom, scaling, sign)
    t_max = opts.t_max_path if opts.t_max_path is not None else (opts.t_max_factor / rate if rate > 0 else math.inf)
    if not math.isfinite(t_max):
        raise ValueError("censoring horizon is infinite; set t_max_path")
    beta = large_jump_rate(spec, scaling) if opts.large_jumps else 0.0
    barrier = geom.barrier(delta, sign)
    stepper = _Stepper(geom, spec, scaling, opts.small_noise)
    pe = geom.probe_factor
    chunk = max(pe, (opts.chunk_steps // pe) * pe)
    # dumps sample inside chunks so the rng draws do not depend on opts.dump
    stride = pe if opts.dump else chunk
    phi_grid = sign * geom.phi_grid

    a = x0.copy()
    t = 0.0
    k = 0
    epochs, traj = [], []
    forced = list(opts.forced_jumps)

    def record(tau, cause):
        return ExitRecord(seed_id, scaling.epsilon, float(tau), float(rate * tau), k, cause)

    def result(rec):
        return PathResult(rec, epochs, traj)

    while True:
        fj = forced.pop(0) if forced else None
        if fj is not None and fj[0] is not None:
            tk = float(fj[0])
        elif beta > 0:
            tk = sample_interjump_time(beta, rng)
        else:
            tk = math.inf
        horizon = min(tk, t_max - t)
        censor = tk >= t_max - t
        n_full = int(math.floor(horizon / dt + 1e-9))
        rem = horizon - n_full * dt
        diag = None
        dev = None
        if opts.diagnostics:
            diag = EpochDiagnostics(length=tk, stayed=True, max_dev=0.0,
                                    start_in_tilde=int(geom.member(a, tilde)) == sign,
                                    state=a.copy() if opts.keep_states else None)
            epochs.append(diag)
            dev = a.copy()

        s0 = 0
        while s0 < n_full:
            s1 = min(n_full, s0 + chunk)
            noise = stepper.noise(s1 - s0, dt, rng)
            s = 0
            while s < s1 - s0:
                stop = min(s1 - s0, s + stride)
                s, status, md = stepper.segment(a, s, stop, noise, barrier, sign, dev)
                if diag is not None:
                    diag.max_dev = max(diag.max_dev, md)
                if status == kernels.SEG_BLOWUP:
                    raise pde_core.IntegrationError(f"path {seed_id} blew up at t = {t + (s0 + s) * dt}")
                if status == kernels.NEEDS_TEST and int(geom.member(a, delta)) != sign:
                    # the barrier was inconclusive and the full probe test failed
                    if diag is not None:
                        diag.stayed = False
                        diag.length = (s0 + s) * dt
                    return result(record(t + (s0 + s) * dt, "drift_or_small_noise"))
                if opts.dump and status == kernels.DONE:
                    traj.append((t + (s0 + s) * dt, float(np.max(np.abs(geom.ops.B @ a - phi_grid)))))
            s0 = s1
        if rem > 1e-12 * max(1.0, horizon):
            noise = stepper.noise(1, rem, rng)
            _, status, md = stepper.segment(a, 0, 1, noise, None, sign, dev, h=rem)
            if diag is not None:
                diag.max_dev = max(diag.max_dev, md)
            if status == kernels.SEG_BLOWUP:
                raise pde_core.IntegrationError(f"path {seed_id} blew up")
        t += horizon
        if not _inside(geom, a, delta, sign, barrier):
            if diag is not None:
                diag.stayed = False
            return result(record(t, "drift_or_small_noise"))
        if censor:
            if diag is not None:
                diag.length = horizon
            return result(record(t_max, "censored"))

        if fj is not None:
            W = np.asarray(fj[1], dtype=float)
            idx, radius = None, float(pde_core.h_norm(W))
        else:
            idx, radius = sample_large_jump_detail(spec, scaling, rng)
            W = radius * spec.directions[idx].profile
        a += scaling.epsilon * W
        k += 1
        inside = _inside(geom, a, delta, sign, barrier)
        if diag is not None:
            diag.jump_index = idx
            diag.jump_radius = radius
            diag.post_in = inside
            diag.post_in_tilde = inside and int(geom.member(a, tilde)) == sign
        if opts.dump:
            traj.append((t, float(np.max(np.abs(geom.ops.B @ a - phi_grid)))))
        if not inside:
            return result(record(t, "large_jump"))


# -- ensembles -----------------------------------------------------------------

class EnsembleAborted(RuntimeError):
    pass


@dataclass
class EnsembleTask:
    """Everything a worker needs for one value of ``eps``."""

    eps_index: int
    scaling: ScalingParams
    sign: int = 1
    rate: float = 0.0


_WORKER: dict = {}


def _init_worker(geom, spec, opts, master_seed, n_paths, dump_dir=None):
    _WORKER.update(geom=geom, spec=spec, opts=opts, master_seed=master_seed, n_paths=n_paths,
                   dump_dir=dump_dir)


def _run_one(task: EnsembleTask, path: int):
    w = _WORKER
    seed_id = task.eps_index * w["n_paths"] + path
    g = rng_mod.stream(w["master_seed"], seed_id)
    x0 = w["geom"].equilibrium(task.sign)
    try:
        res = simulate_path(x0, w["spec"], task.scaling, w["geom"], g, w["opts"],
                            seed_id=seed_id, rate=task.rate)
    except (pde_core.IntegrationError, ValueError, FloatingPointError) as exc:
        return seed_id, None, f"{type(exc).__name__}: {exc}"
    if w.get("dump_dir") and res.trajectory:
        with open(os.path.join(w["dump_dir"], f"path_{seed_id}.csv"), "w") as fh:
            fh.write("time,sup_distance\n")
            for tt, dd in res.trajectory:
                fh.write(f"{tt!r},{dd!r}\n")
    return seed_id, res.record, None


def read_records(path) -> tuple[str | None, list[ExitRecord]]:
    """Header line and records of a record file (missing file: ``(None, [])``)."""
    if not os.path.exists(path):
        return None, []
    with open(path, newline="") as fh:
        header = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        next(reader, None)
        return header, [ExitRecord.from_row(r) for r in reader if r]


def write_records(path, header: str, records) -> None:
    """Canonical record file: header, column names, rows sorted by ``seed_id``."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in sorted(records, key=lambda r: r.seed_id):
            w.writerow(r.row())
    os.replace(tmp, path)


def run_ensemble(geom: DomainGeometry, spec: NoiseSpec, tasks, n_paths: int, master_seed: int,
                 opts: PathOptions | None = None, workers: int = 1, out_path=None,
                 header: str = "# records", resume: bool = False,
                 max_fail_fraction: float = 0.01, dump_dir=None) -> list[ExitRecord]:
    """Simulate ``n_paths`` paths per task; stream rows to ``out_path`` as they finish.

    Path ``p`` of task ``j`` uses stream ``(master_seed, j * n_paths + p)``,
    so results do not depend on ``workers`` or completion order.  With
    ``resume`` the rows already present in ``out_path`` are kept and their
    seeds skipped.  On completion the file is rewritten in canonical order.
    """
    opts = opts or PathOptions()
    tasks = list(tasks)
    done: dict[int, ExitRecord] = {}
    if resume and out_path is not None:
        old_header, old = read_records(out_path)
        if old_header is not None and old_header != header:
            raise ValueError(f"{out_path} was written with a different configuration")
        done = {r.seed_id: r for r in old}
    todo = [(t, p) for t in tasks for p in range(n_paths)
            if t.eps_index * n_paths + p not in done]
    total = len(tasks) * n_paths
    failures: list[tuple[int, str]] = []

    sink = None
    if out_path is not None:
        if not done:
            write_records(out_path, header, [])
        sink = open(out_path, "a", newline="")
    writer = csv.writer(sink, lineterminator="\n") if sink else None

    def accept(seed_id, rec, err):
        if err is not None:
            failures.append((seed_id, err))
            logger.warning("path %d failed: %s", seed_id, err)
            if len(failures) > max_fail_fraction * max(total, 1):
                raise EnsembleAborted(f"{len(failures)} of {total} paths failed; last: {err}")
            return
        done[seed_id] = rec
        if writer is not None:
            writer.writerow(rec.row())
            sink.flush()

    try:
        if workers <= 1:
            _init_worker(geom, spec, opts, master_seed, n_paths, dump_dir)
            for t, p in todo:
                accept(*_run_one(t, p))
        elif todo:
            with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                     initargs=(geom, spec, opts, master_seed, n_paths, dump_dir)) as pool:
                futures = [pool.submit(_run_one, t, p) for t, p in todo]
                try:
                    for fut in as_completed(futures):
                        accept(*fut.result())
                except EnsembleAborted:
                    for f in futures:
                        f.cancel()
                    raise
    finally:
        if sink is not None:
            sink.close()
    records = sorted(done.values(), key=lambda r: r.seed_id)
    if out_path is not None:
        write_records(out_path, header, records)
        if failures:
            with open(f"{out_path}.errors", "w") as fh:
                for sid, err in sorted(failures):
                    fh.write(f"{sid},{err}\n")
    return records


# -- diagnostics ---------------------------------------------------------------

def deviation_probability(spec: NoiseSpec, scaling: ScalingParams, geom: DomainGeometry,
                          n_samples: int, rng: np.random.Generator, sign: int = 1,
                          amplitude: float = 1.0) -> tuple[float, float]:
    """Estimate ``P(sup_{s <= T1} |Y(s) - u(s)|_inf >= eps**(2 gamma) / 2)`` from ``phi^sign``.

    ``T1`` is exponential with rate ``beta_eps``; ``amplitude`` scales the
    small-jump noise (0 disables it).  Returns the estimate and its binomial
    standard error.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    beta = large_jump_rate(spec, scaling)
    stepper = _Stepper(geom, spec, scaling, small_noise=amplitude != 0.0)
    if amplitude not in (0.0, 1.0):
        stepper.V = np.ascontiguousarray(amplitude * spec.axes)
    stop = 0.5 * scaling.delta2
    dt = geom.params.dt
    phi = geom.equilibrium(sign)
    hits = 0
    for _ in range(n_samples):
        T1 = sample_interjump_time(beta, rng)
        n_full = int(math.floor(T1 / dt + 1e-9))
        rem = T1 - n_full * dt
        a, dev = phi.copy(), phi.copy()
        hit = False
        s0 = 0
        while s0 < n_full and not hit:
            s1 = min(n_full, s0 + 4000)
            noise = stepper.noise(s1 - s0, dt, rng)
            _, status, _ = stepper.segment(a, 0, s1 - s0, noise, None, sign, dev, dev_stop=stop)
            hit = status == kernels.DEV_EXCEEDED
            s0 = s1
        if not hit and rem > 0:
            noise = stepper.noise(1, rem, rng)
            _, status, md = stepper.segment(a, 0, 1, noise, None, sign, dev, dev_stop=stop, h=rem)
            hit = status == kernels.DEV_EXCEEDED or md >= stop
            if not hit:
                hit = float(np.max(np.abs(geom.ops.B @ (a - dev)))) >= stop
        hits += hit
    phat = hits / n_samples
    return phat, math.sqrt(phat * (1 - phat) / n_samples)


INCLUSIONS = ("i", "ii", "iii", "iv", "v", "vi", "vii")


@dataclass
class EventSummary:
    n_epochs: int
    counts: dict
    premise: dict
    violations: dict
    examples: dict

    def rate(self, name: str) -> float:
        n = self.premise[name]
        return self.violations[name] / n if n else 0.0

    def lines(self) -> list[str]:
        out = [f"epochs {self.n_epochs}"]
        out += [f"count {k} {v}" for k, v in self.counts.items()]
        for name in INCLUSIONS:
            out.append(f"inclusion {name}: premise {self.premise[name]} "
                       f"violations {self.violations[name]} rate {self.rate(name):.4g}")
        return out


def tag_epoch_events(diags, geom: DomainGeometry, scaling: ScalingParams, spec: NoiseSpec,
                     t_long: float, sign: int = 1) -> EventSummary:
    """Count epoch events and check the path/noise inclusions i)-vii).

    Noise-only events use the threshold tables: with ``s = eps * r`` along
    direction ``i``, ``eps W in D0`` iff ``s < r_i()``,
    ``eps W in D0(d, d^2)`` iff ``s < r_i(d, d^2)``, the shell is their
    difference and ``D0(d, d^2, d^2)`` uses ``r_i(d, d^2, d^2)``.  ``t_long``
    is ``T_rec + kappa gamma |ln eps|``.
    """
    d1, d2 = scaling.delta, scaling.delta2
    eps = scaling.epsilon
    counts = dict.fromkeys(("A", "B", "C", "A-", "Ec", "no_jump"), 0)
    premise = dict.fromkeys(INCLUSIONS, 0)
    viol = dict.fromkeys(INCLUSIONS, 0)
    examples: dict = {}

    def check(name, cond_premise, cond_ok, d):
        if cond_premise:
            premise[name] += 1
            if not cond_ok:
                viol[name] += 1
                examples.setdefault(name, d)
                logger.info("inclusion %s violated: %s", name, d)

    for d in diags:
        E = d.max_dev <= 0.5 * d2
        counts["Ec"] += not E
        if d.jump_radius is None or not d.stayed:
            counts["no_jump"] += 1
            continue
        A = d.post_in
        B = not d.post_in
        Am = bool(d.post_in_tilde)
        C = A and not Am
        counts["A"] += A
        counts["B"] += B
        counts["C"] += C
        counts["A-"] += Am
        s = eps * d.jump_radius
        if d.jump_index is None:
            continue
        i = d.jump_index
        r_full = geom.table_radius(sign, i)
        r_tilde = geom.table_radius(sign, i, (d1, d2))
        r_three = geom.table_radius(sign, i, (d1, d2, d2))
        in_D0 = s < r_full
        in_tilde0 = s < r_tilde
        in_shell = in_D0 and not in_tilde0
        in_three0 = s < r_three
        small = s <= 0.5 * d2
        long = d.length >= t_long
        check("i", A and E and long, in_D0, d)
        check("ii", B and E and long, not in_tilde0, d)
        check("iii", C and E and long, in_shell, d)
        check("iv", B and E and small and long, False, d)
        check("v", C and E and small and long, False, d)
        check("vi", d.start_in_tilde and E and long and not in_D0, B, d)
        check("vii", d.start_in_tilde and E and long and in_three0, Am, d)
    return EventSummary(len(diags), counts, premise, viol, examples)
