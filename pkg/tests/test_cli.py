import os

import pytest

from chafee_exit import cli, config as cf

CONFIG = """
[model]
lambda = 20
n_modes = 16
dt = 0.02

[noise]
alpha = 1.5
directions = e1
weights = 0.5
r_min = 0.05

[scaling]
rho = 0.75
gamma = 1.0
epsilon_grid = 2^-3, 2^-4, 2^-5

[mc]
n_paths = 6
master_seed = 7
"""


@pytest.fixture
def cfg_path(tmp_path, monkeypatch):
    monkeypatch.delenv(cf.SEED_ENV, raising=False)
    p = tmp_path / "exp.ini"
    p.write_text(CONFIG)
    return p


def run(cfg_path, out, *extra):
    return cli.main(["--config", str(cfg_path), "--out", str(out), *extra])


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text(CONFIG.replace("lambda = 20", "lambda = 9"))
    assert cli.main(["run", "--config", str(p)]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "nope.ini")]) == cli.EXIT_CONFIG


def test_run_needs_tables(cfg_path, tmp_path, capsys):
    assert run(cfg_path, tmp_path / "o", "run") == cli.EXIT_TABLES
    assert "--build-tables" in capsys.readouterr().err


def test_pipeline(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "equilibria") == 0
    eq = (out / "equilibria.txt").read_text()
    cfg = cf.load_config(cfg_path)
    assert eq.startswith(f"# chafee-exit equilibria config={cfg.hash()}\n")
    assert "kappa = " in eq and eq.count(".residual") == 3
    assert run(cfg_path, out, "tables", "--workers", "2") == 0
    assert "H.1 holds" in (out / "tables_report.txt").read_text()
    assert (out / "thresholds.csv").read_text().startswith("# threshold table hash=")
    assert run(cfg_path, out, "run", "--dump-trajectories") == 0
    recs = (out / "records.csv").read_text().splitlines()
    assert recs[0] == cli.header("records", cfg)
    assert recs[1] == "seed_id,epsilon,tau,normalized_tau,n_large_jumps,cause"
    assert len(recs) == 2 + 18
    assert os.listdir(out / "trajectories")
    first = (out / "records.csv").read_bytes()
    assert run(cfg_path, out, "run", "--workers", "2") == 0
    assert (out / "records.csv").read_bytes() == first
    assert run(cfg_path, out, "summarize") == 0
    summ = (out / "summary.txt").read_text()
    assert "slope = " in summ and "eps[0.125].n = 6" in summ
    csv = (out / "summary.csv").read_text().splitlines()
    assert csv[1].startswith("epsilon,n,n_censored") and len(csv) == 5


def test_resume_matches_uninterrupted(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "run", "--build-tables") == 0
    full = (out / "records.csv").read_bytes()
    lines = full.decode().splitlines(keepends=True)
    (out / "records.csv").write_text("".join(lines[:7]))
    assert run(cfg_path, out, "run", "--resume") == 0
    assert (out / "records.csv").read_bytes() == full


def test_summarize_empty(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "summarize") == 0
    text = (out / "summary.txt").read_text()
    assert "eps[0.0625].n = 0" in text


def test_summarize_refuses_other_config(cfg_path, tmp_path, capsys):
    out = tmp_path / "o"
    out.mkdir()
    (out / "records.csv").write_text("# chafee-exit records config=deadbeef\n"
                                      "seed_id,epsilon,tau,normalized_tau,n_large_jumps,cause\n")
    assert run(cfg_path, out, "summarize") == cli.EXIT_HASH
    assert "different configuration" in capsys.readouterr().err


def test_resume_refuses_other_config(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert run(cfg_path, out, "run", "--build-tables") == 0
    text = (out / "records.csv").read_text().replace("config=", "config=x", 1)
    (out / "records.csv").write_text(text)
    assert run(cfg_path, out, "run", "--resume") == cli.EXIT_HASH


def test_seed_env_changes_records(cfg_path, tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(cfg_path, a, "run", "--build-tables") == 0
    monkeypatch.setenv(cf.SEED_ENV, "8")
    assert run(cfg_path, b, "run", "--build-tables") == 0
    assert (a / "records.csv").read_bytes() != (b / "records.csv").read_bytes()


def test_console_script_entry_point():
    from importlib.metadata import entry_points
    eps = [e for e in entry_points(group="console_scripts") if e.name == "chafee-exit"]
    assert eps and eps[0].value == "chafee_exit.cli:main"
