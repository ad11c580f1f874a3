"""Experiment configuration: ``[section]`` headers with ``key = value`` lines.

Example::

    [model]
    lambda = 20
    n_modes = 32
    dt = 0.01

    [noise]
    alpha = 1.5
    directions = e1
    weights = 0.5

    [scaling]
    rho = 0.75
    gamma = 1.0
    epsilon_grid = 2^-4, 2^-5, 2^-6

    [mc]
    n_paths = 2000
    master_seed = 12345

Numbers accept the ``a^b`` shorthand.  Unknown sections or keys are errors;
all semantic problems are collected before reporting.  Violations of the
scaling inequalities are warnings only.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field

from . import noise as noise_mod
from . import pde_core

SEED_ENV = "CHAFEE_EXIT_SEED"

SCHEMA = {
    "model": {"lambda": 20.0, "n_modes": 32, "dt": 1e-3, "grid_points": 0, "t_max": 50.0,
              "classify_tol": 1e-3},
    "noise": {"alpha": 1.5, "directions": "e1", "weights": "0.5", "r_min": 1e-3},
    "scaling": {"rho": 0.75, "gamma": 0.01, "theta": 0.01, "gamma_cap": 1.0,
                "epsilon_grid": "2^-4, 2^-5, 2^-6"},
    "mc": {"n_paths": 2000, "master_seed": 0, "t_max_path_factor": 50.0,
           "theta_grid": "0.5, 1, 2", "dt_probe_factor": 10, "probe_count": 8,
           "start": "plus", "shortcuts": True, "chunk_steps": 2000},
    "io": {"output_dir": "runs", "table_cache": "", "dump_trajectories": False},
}

INT_KEYS = {"n_modes", "grid_points", "n_paths", "master_seed", "dt_probe_factor", "probe_count",
            "chunk_steps"}
BOOL_KEYS = {"shortcuts", "dump_trajectories"}
STR_KEYS = {"directions", "weights", "epsilon_grid", "theta_grid", "start", "output_dir",
            "table_cache"}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def parse_number(text: str) -> float:
    """Float, or ``base^exp``."""
    text = text.strip()
    m = re.fullmatch(r"([^\^]+)\^([^\^]+)", text)
    if m:
        return float(m.group(1)) ** float(m.group(2))
    return float(text)


def parse_list(text: str) -> list[float]:
    return [parse_number(t) for t in text.split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    model: pde_core.ModelParams
    alpha: float
    directions: list
    weights: list
    r_min: float
    rho: float
    gamma: float
    theta: float
    gamma_cap: float
    epsilon_grid: list
    n_paths: int
    master_seed: int
    t_max_path_factor: float
    theta_grid: list
    dt_probe_factor: int
    probe_count: int
    start: str
    shortcuts: bool
    chunk_steps: int
    classify_tol: float
    output_dir: str
    table_cache: str
    dump_trajectories: bool
    checks: list = field(default_factory=list)

    @property
    def sign(self) -> int:
        return 1 if self.start == "plus" else -1

    def scaling(self, eps: float) -> noise_mod.ScalingParams:
        return noise_mod.ScalingParams(eps, self.rho, self.gamma, self.theta, self.gamma_cap)

    def cache_path(self) -> str:
        return self.table_cache or os.path.join(self.output_dir, "thresholds.csv")

    def canonical(self) -> dict:
        d = {k: v for k, v in asdict(self).items()
             if k not in ("checks", "output_dir", "table_cache", "dump_trajectories")}
        d["model"] = asdict(self.model)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _line_numbers(text: str) -> dict:
    where, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            where[(section, None)] = n
        elif "=" in s and section and not s.startswith(("#", ";")):
            where[(section, s.split("=", 1)[0].strip().lower())] = n
    return where


def validate_config(text: str, env=None) -> ExperimentConfig:
    """Parse and check a configuration; raises ConfigError listing every problem."""
    env = os.environ if env is None else env
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}".replace("\n", " ")]) from None
    where = _line_numbers(text)
    problems = []

    def at(section, key=None):
        n = where.get((section, key))
        return f"line {n}: " if n else ""

    raw = {s: dict(v) for s, v in SCHEMA.items()}
    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"{at(section)}unknown section [{section}]")
            continue
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                problems.append(f"{at(section, key)}unknown key '{key}' in [{section}]")
                continue
            default = SCHEMA[section][key]
            try:
                if key in BOOL_KEYS:
                    raw[section][key] = cp.getboolean(section, key)
                elif key in STR_KEYS:
                    raw[section][key] = value.strip()
                elif key in INT_KEYS:
                    raw[section][key] = int(value.strip())
                else:
                    raw[section][key] = parse_number(value)
            except ValueError:
                problems.append(f"{at(section, key)}cannot parse {key} = {value!r}"
                                f" (expected {type(default).__name__})")
    if SEED_ENV in env:
        try:
            raw["mc"]["master_seed"] = int(env[SEED_ENV])
        except ValueError:
            problems.append(f"environment {SEED_ENV}={env[SEED_ENV]!r} is not an integer")

    m, nz, sc, mc, io = (raw[s] for s in ("model", "noise", "scaling", "mc", "io"))
    model = None
    mp = {"lam": m["lambda"], "n_modes": m["n_modes"], "dt": m["dt"],
          "grid_points": m["grid_points"], "t_max": m["t_max"]}
    try:
        model = pde_core.ModelParams(**mp)
    except (ValueError, TypeError) as exc:
        for msg in str(exc).split("; "):
            problems.append(f"{at('model')}{msg}")

    alpha = nz["alpha"]
    if not 0 < alpha < 2:
        problems.append(f"{at('noise', 'alpha')}alpha = {alpha} must lie in (0, 2)")
    dirs = [d.strip() for d in str(nz["directions"]).split(",") if d.strip()]
    try:
        weights = parse_list(str(nz["weights"]))
    except ValueError:
        weights = []
        problems.append(f"{at('noise', 'weights')}weights must be a comma-separated list of numbers")
    if len(weights) == 1 and len(dirs) > 1:
        weights = weights * len(dirs)
    if len(weights) != len(dirs):
        problems.append(f"{at('noise', 'weights')}{len(dirs)} directions but {len(weights)} weights")
    for d in dirs:
        if not re.fullmatch(r"e\d+|phi", d):
            problems.append(f"{at('noise', 'directions')}unknown direction '{d}' (use e<k> or phi)")
        elif d != "phi" and model is not None and not 1 <= int(d[1:]) <= model.n_modes:
            problems.append(f"{at('noise', 'directions')}direction {d} outside 1..n_modes")
    if any(not w > 0 for w in weights):
        problems.append(f"{at('noise', 'weights')}weights must be positive")
    if not nz["r_min"] > 0:
        problems.append(f"{at('noise', 'r_min')}r_min must be positive")

    try:
        grid = parse_list(str(sc["epsilon_grid"]))
    except ValueError:
        grid = []
        problems.append(f"{at('scaling', 'epsilon_grid')}epsilon_grid must be a list of numbers")
    if not grid:
        problems.append(f"{at('scaling', 'epsilon_grid')}epsilon_grid is empty")
    if any(not 0 < e < 1 for e in grid):
        problems.append(f"{at('scaling', 'epsilon_grid')}every epsilon must lie in (0, 1)")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        problems.append(f"{at('scaling', 'epsilon_grid')}epsilon_grid must be strictly decreasing")
    if not 0 < sc["rho"] < 1:
        problems.append(f"{at('scaling', 'rho')}rho must lie in (0, 1)")
    if not sc["gamma"] > 0:
        problems.append(f"{at('scaling', 'gamma')}gamma must be positive")

    if mc["n_paths"] < 0:
        problems.append(f"{at('mc', 'n_paths')}n_paths must be >= 0")
    if not 0 <= mc["master_seed"] < 2**64:
        problems.append(f"{at('mc', 'master_seed')}master_seed must fit in 64 unsigned bits")
    if not mc["t_max_path_factor"] > 0:
        problems.append(f"{at('mc', 't_max_path_factor')}t_max_path_factor must be positive")
    try:
        theta_grid = parse_list(str(mc["theta_grid"]))
    except ValueError:
        theta_grid = []
        problems.append(f"{at('mc', 'theta_grid')}theta_grid must be a list of numbers")
    if any(not t > -1 for t in theta_grid):
        problems.append(f"{at('mc', 'theta_grid')}every theta must exceed -1")
    if mc["dt_probe_factor"] < 1:
        problems.append(f"{at('mc', 'dt_probe_factor')}dt_probe_factor must be >= 1")
    if mc["probe_count"] < 2 or mc["probe_count"] % 2:
        problems.append(f"{at('mc', 'probe_count')}probe_count must be a positive even number")
    if mc["start"] not in ("plus", "minus"):
        problems.append(f"{at('mc', 'start')}start must be 'plus' or 'minus'")
    if mc["chunk_steps"] < 1:
        problems.append(f"{at('mc', 'chunk_steps')}chunk_steps must be positive")
    if not m["classify_tol"] > 0:
        problems.append(f"{at('model', 'classify_tol')}classify_tol must be positive")

    if problems:
        raise ConfigError(problems)

    cfg = ExperimentConfig(
        model=model, alpha=alpha, directions=dirs, weights=weights, r_min=nz["r_min"],
        rho=sc["rho"], gamma=sc["gamma"], theta=sc["theta"], gamma_cap=sc["gamma_cap"],
        epsilon_grid=grid, n_paths=mc["n_paths"], master_seed=mc["master_seed"],
        t_max_path_factor=mc["t_max_path_factor"], theta_grid=theta_grid,
        dt_probe_factor=mc["dt_probe_factor"], probe_count=mc["probe_count"], start=mc["start"],
        shortcuts=mc["shortcuts"], chunk_steps=mc["chunk_steps"], classify_tol=m["classify_tol"],
        output_dir=io["output_dir"], table_cache=io["table_cache"],
        dump_trajectories=io["dump_trajectories"])
    cfg.checks = noise_mod.check_constants(alpha, cfg.scaling(grid[0]))
    return cfg


def load_config(path, env=None) -> ExperimentConfig:
    with open(path) as fh:
        return validate_config(fh.read(), env)


def build_spec(cfg: ExperimentConfig, phi_plus) -> noise_mod.NoiseSpec:
    dirs = []
    n = cfg.model.n_modes
    for name, w in zip(cfg.directions, cfg.weights):
        prof = phi_plus if name == "phi" else pde_core.basis_vector(int(name[1:]), n)
        dirs.append(noise_mod.Direction(noise_mod.unit_direction(prof), w, name))
    return noise_mod.NoiseSpec(cfg.alpha, dirs, cfg.r_min)
