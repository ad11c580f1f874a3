"""Command line driver: ``chafee-exit {equilibria,tables,run,summarize} --config FILE``.

Artifacts (all under ``--out``, default the config's ``output_dir``):

``equilibria.txt``
    equilibria, residuals, energies and the relaxation fit.
``thresholds.csv``
    threshold cache, ``lambda,sign,direction_index,delta,radius``.
``records.csv``
    ``seed_id,epsilon,tau,normalized_tau,n_large_jumps,cause``.
``summary.txt`` / ``summary.csv``
    per-eps statistics, one ``key = value`` per line / one row per eps.

Every file starts with a ``#`` header carrying the configuration hash.
The environment variable ``CHAFEE_EXIT_SEED`` overrides ``mc.master_seed``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import config as config_mod
from . import domains, exit_mc, noise, pde_core, stats

logger = logging.getLogger("chafee_exit")

EXIT_CONFIG, EXIT_TABLES, EXIT_HASH, EXIT_ABORT = 2, 3, 4, 5


def header(kind: str, cfg) -> str:
    return f"# chafee-exit {kind} config={cfg.hash()}"


class Setup:
    """Geometry, noise spec and threshold tables for one configuration."""

    def __init__(self, cfg, out: str):
        self.cfg = cfg
        self.out = out
        self.geom = domains.DomainGeometry(cfg.model, classify_tol=cfg.classify_tol,
                                           probe_count=cfg.probe_count,
                                           probe_factor=cfg.dt_probe_factor,
                                           shortcuts=cfg.shortcuts)
        self.spec = config_mod.build_spec(cfg, self.geom.phi_plus)
        self.cache = cfg.table_cache or os.path.join(out, "thresholds.csv")
        self.geom.load_tables(self.cache, self.spec)

    def margins(self) -> list:
        sets = []
        for eps in self.cfg.epsilon_grid:
            for m in domains.default_margins(self.cfg.scaling(eps)):
                if m not in sets:
                    sets.append(m)
        return sets

    def missing(self, margins) -> int:
        n = 0
        for m in margins:
            for i in range(len(self.spec.directions)):
                for s in (1, -1):
                    n += (s, i, domains.normalize_deltas(m)) not in self.geom.table
        return n

    def ensure_tables(self, margins, build: bool, workers: int = 1) -> bool:
        if self.missing(margins) == 0:
            return True
        if not build:
            return False
        self.geom.build_tables(self.spec, margins, workers=workers)
        os.makedirs(os.path.dirname(self.cache) or ".", exist_ok=True)
        self.geom.save_tables(self.cache, self.spec)
        return True

    def rates(self) -> dict:
        return {eps: domains.characteristic_rate(self.spec, self.geom, self.cfg.scaling(eps),
                                                 self.cfg.sign)
                for eps in self.cfg.epsilon_grid}


def cmd_equilibria(cfg, args, out) -> int:
    st = Setup(cfg, out)
    p = cfg.model
    found = pde_core.find_equilibria(p)
    lines = [header("equilibria", cfg)]
    for i, a in enumerate(found.equilibria):
        lines.append(f"equilibrium[{i}].sup_norm = {pde_core.sup_norm(a, p)!r}")
        lines.append(f"equilibrium[{i}].mean = {pde_core.mean_value(a)!r}")
        lines.append(f"equilibrium[{i}].residual = {pde_core.h_norm(pde_core.residual(a, p))!r}")
        lines.append(f"equilibrium[{i}].energy = {pde_core.energy(a, p)!r}")
    for seed, msg in found.failures:
        lines.append(f"newton_failure = {seed}: {msg}")
    scalings = [cfg.scaling(e) for e in cfg.epsilon_grid]
    if len(scalings) >= 2:
        st.ensure_tables([(s.delta,) for s in scalings], build=True, workers=args.workers)
        fit = domains.relaxation_fit(st.spec, st.geom, scalings, cfg.sign)
        for e, t in zip(fit.eps, fit.times):
            lines.append(f"relaxation_time[eps={e!r}] = {t!r}")
        lines.append(f"T_rec = {fit.t_rec!r}")
        lines.append(f"kappa = {fit.kappa!r}")
    _write(os.path.join(out, "equilibria.txt"), lines)
    print("\n".join(lines[1:]))
    return 0


def cmd_tables(cfg, args, out) -> int:
    st = Setup(cfg, out)
    st.ensure_tables(st.margins(), build=True, workers=args.workers)
    rep = domains.check_hypotheses(st.spec, st.geom, [cfg.scaling(e) for e in cfg.epsilon_grid],
                                   cfg.sign)
    lines = [header("tables", cfg)] + rep.lines()
    for eps, rate in st.rates().items():
        lines.append(f"lambda_eps[eps={eps!r}] = {rate!r}")
        lines.append(f"beta_eps[eps={eps!r}] = {noise.large_jump_rate(st.spec, cfg.scaling(eps))!r}")
    _write(os.path.join(out, "tables_report.txt"), lines)
    print("\n".join(lines[1:]))
    return 0


def cmd_run(cfg, args, out) -> int:
    st = Setup(cfg, out)
    margins = [(), *[(cfg.scaling(e).delta,) for e in cfg.epsilon_grid]]
    if not st.ensure_tables(margins, build=args.build_tables, workers=args.workers):
        print(f"threshold tables missing in {st.cache}; run 'tables' or pass --build-tables",
              file=sys.stderr)
        return EXIT_TABLES
    rates = st.rates()
    tasks = [exit_mc.EnsembleTask(j, cfg.scaling(e), cfg.sign, rates[e])
             for j, e in enumerate(cfg.epsilon_grid)]
    dump = args.dump_trajectories or cfg.dump_trajectories
    dump_dir = None
    if dump:
        dump_dir = os.path.join(out, "trajectories")
        os.makedirs(dump_dir, exist_ok=True)
    opts = exit_mc.PathOptions(t_max_factor=cfg.t_max_path_factor, chunk_steps=cfg.chunk_steps,
                               dump=dump, sign=cfg.sign)
    path = os.path.join(out, "records.csv")
    try:
        recs = exit_mc.run_ensemble(st.geom, st.spec, tasks, cfg.n_paths, cfg.master_seed, opts,
                                    workers=args.workers, out_path=path,
                                    header=header("records", cfg), resume=args.resume,
                                    dump_dir=dump_dir)
    except exit_mc.EnsembleAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_HASH
    for eps in cfg.epsilon_grid:
        sub = [r for r in recs if r.epsilon == eps]
        cens = sum(r.cause == "censored" for r in sub)
        print(f"eps={eps!r}: {len(sub)} paths, censored fraction {cens / len(sub) if sub else 0.0:.4f}")
    return 0


def cmd_summarize(cfg, args, out) -> int:
    path = os.path.join(out, "records.csv")
    head, recs = exit_mc.read_records(path)
    want = header("records", cfg)
    if head is not None and head != want:
        print(f"{path} belongs to a different configuration ({head!r})", file=sys.stderr)
        return EXIT_HASH
    st = Setup(cfg, out)
    try:
        rates = st.rates()
    except KeyError:
        rates = {}
    summ = stats.summarize(recs, cfg.epsilon_grid, rates, cfg.theta_grid)
    lines = [header("summary", cfg)]
    rows = [header("summary", cfg),
            ",".join(["epsilon", "n", "n_censored", "censor_fraction", "mean_tau", "se_tau",
                      "lambda_eps", "ks"] + [f"laplace_{t!r}" for t in cfg.theta_grid]
                     + ["mean_large_jumps", "large_jump_fraction"])]
    for s in summ.per_eps:
        k = f"eps[{s.epsilon!r}]"
        lines += [f"{k}.n = {s.n}", f"{k}.censored = {s.n_censored}",
                  f"{k}.censor_fraction = {s.censor_fraction!r}",
                  f"{k}.mean_tau = {s.mean_tau!r}", f"{k}.se_tau = {s.se_tau!r}",
                  f"{k}.lambda_eps = {s.rate!r}", f"{k}.ks = {s.ks!r}",
                  f"{k}.mean_large_jumps = {s.mean_jumps!r}",
                  f"{k}.large_jump_fraction = {s.large_jump_fraction!r}"]
        for th, (v, se) in s.laplace.items():
            lines += [f"{k}.laplace[{th!r}] = {v!r}", f"{k}.laplace_se[{th!r}] = {se!r}"]
        rows.append(",".join([repr(s.epsilon), str(s.n), str(s.n_censored), repr(s.censor_fraction),
                              repr(s.mean_tau), repr(s.se_tau), repr(s.rate), repr(s.ks)]
                             + [repr(s.laplace[t][0]) for t in cfg.theta_grid]
                             + [repr(s.mean_jumps), repr(s.large_jump_fraction)]))
    if summ.slope is not None:
        lines += [f"slope = {summ.slope!r}", f"intercept = {summ.intercept!r}", f"r2 = {summ.r2!r}"]
    _write(os.path.join(out, "summary.txt"), lines)
    _write(os.path.join(out, "summary.csv"), rows)
    print("\n".join(lines[1:]))
    return 0


def _write(path, lines) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


COMMANDS = {"equilibria": cmd_equilibria, "tables": cmd_tables, "run": cmd_run,
            "summarize": cmd_summarize}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chafee-exit", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment configuration file")
    ap.add_argument("--workers", type=int, default=1, help="worker processes")
    ap.add_argument("--build-tables", action="store_true",
                    help="build missing threshold tables instead of failing")
    ap.add_argument("--dump-trajectories", action="store_true",
                    help="write per-path (time, distance to equilibrium) files")
    ap.add_argument("--out", help="output directory (overrides io.output_dir)")
    ap.add_argument("--resume", action="store_true", help="keep finished paths in records.csv")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load_config(args.config)
    except config_mod.ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for c in cfg.checks:
        print(f"constraint {c.name}: {'pass' if c.ok else 'warn'} ({c.detail})", file=sys.stderr)
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return COMMANDS[args.command](cfg, args, out)


if __name__ == "__main__":
    sys.exit(main())
