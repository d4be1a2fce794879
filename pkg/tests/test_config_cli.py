import csv
import json
import math
from pathlib import Path

import pytest

from qdftlab import __version__
from qdftlab.cli import main, run
from qdftlab.config import ConfigError, parse_config

MINIMAL = "family = geometric\nrho = 0.5\ntheta = 1.5707963\n"
KEY_COLUMNS = {"theta", "t", "N", "r", "n", "L", "tuple", "experiment", "replicates", "path"}


def small_config(out, family="family = geometric\nrho = 0.5", theta="1.5707963267948966", extra=""):
    return parse_config(f"""
[model]
{family}
L = 32
[experiment]
theta = {theta}
n = 256
R = 200
N_list = 32, 128
decay_replicates = 60
decompose_tuples = 20
conditions_terms = 8
{extra}
[output]
directory = {out}
""")


# --- parse_config -------------------------------------------------------------

def test_minimal_flat_config():
    cfg = parse_config(MINIMAL)
    assert cfg.family.kind == "geometric" and cfg.family.rho == 0.5
    assert cfg.thetas == (1.5707963,)
    assert cfg.L is None and cfg.R == 2000 and cfg.time_grid == (0.5, 1.0)


def test_rho_out_of_range():
    with pytest.raises(ConfigError, match=r"geometric ratio must be in \(0,1\)") as e:
        parse_config(MINIMAL.replace("0.5", "1.0"))
    assert e.value.key == "rho" and e.value.line == 2


def test_duplicate_key_named():
    with pytest.raises(ConfigError, match="'rho'") as e:
        parse_config(MINIMAL + "rho = 0.3\n")
    assert e.value.line == 4


def test_duplicate_key_across_sections():
    with pytest.raises(ConfigError, match="duplicate key") as e:
        parse_config("theta = 1.0\n[model]\nfamily = harmonic\n[experiment]\ntheta = 2.0\n")
    assert e.value.key == "theta"


@pytest.mark.parametrize("text,key", [
    ("rho = 0.5\ntheta = 1\n", "family"),
    ("family = geometric\ntheta = 1\n", "rho"),
    ("family = harmonic\n", "theta"),
    ("family = power\ntheta = 1\n", "alpha"),
])
def test_missing_mandatory_key(text, key):
    with pytest.raises(ConfigError, match="missing mandatory key") as e:
        parse_config(text)
    assert e.value.key == key


def test_unknown_key_and_section():
    with pytest.raises(ConfigError, match="unknown key") as e:
        parse_config(MINIMAL + "colour = red\n")
    assert e.value.key == "colour" and e.value.line == 4
    with pytest.raises(ConfigError, match="unknown key in \\[output\\]"):
        parse_config(MINIMAL + "[output]\nrho = 0.2\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "[plots]\n")


def test_malformed_number_reports_line():
    with pytest.raises(ConfigError, match="malformed number") as e:
        parse_config(MINIMAL + "# comment\nn = 4k\n")
    assert e.value.key == "n" and e.value.line == 5


def test_value_validation():
    with pytest.raises(ConfigError, match="2\\*pi"):
        parse_config(MINIMAL.replace("1.5707963", "7"))
    with pytest.raises(ConfigError, match="strictly increasing"):
        parse_config(MINIMAL + "r_list = 4, 2\n")
    with pytest.raises(ConfigError, match="\\(0, m\\]"):
        parse_config(MINIMAL + "time_grid = 0.5, 2\n")


def test_theta_list_uniform_and_finite_family():
    cfg = parse_config("family = finite\ncoefficients = 1, -0.5  # two lags\ntheta = uniform\nL = auto\n")
    assert cfg.uniform and cfg.family.values == (1.0, -0.5) and cfg.L is None
    assert parse_config("family = finite\ncoefficients =\ntheta = 1\n").family.is_zero


def test_echo_covers_every_field():
    cfg = parse_config(MINIMAL)
    echo = cfg.echo()
    for key in ("family", "innovation", "theta", "n", "m", "G", "L", "R", "r_list", "N_list",
                "time_grid", "master_seed", "significance", "output_dir"):
        assert key in echo
    assert json.loads(json.dumps(echo)) == echo


def test_overrides():
    cfg = parse_config(MINIMAL).with_overrides(seed=9, out="x", replicates=50)
    assert (cfg.master_seed, cfg.output_dir, cfg.R) == (9, "x", 50)


# --- run / CLI ----------------------------------------------------------------

def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def files_on_disk(root: Path):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())


def test_conditions_only_harmonic(tmp_path):
    out = tmp_path / "h"
    m = run(small_config(out, "family = harmonic"), "conditions")
    rows = read_csv(out / "conditions.csv")
    assert len(rows) == 8
    assert {"hannan_partial_sum", "weak_hannan_partial_sum", "regularity_decay"} <= set(rows[0])
    summary = json.loads((out / "summary.json").read_text())["conditions"]
    assert (summary["hannan"], summary["weak_hannan"], summary["regularity"]) == \
        ("diverges", "converges", "converges")
    assert [e["id"] for e in m.experiments] == ["conditions"]


def test_decay_matrix_with_standard_errors(tmp_path):
    out = tmp_path / "d"
    run(small_config(out), "decay")
    rows = read_csv(out / "decay.csv")
    assert len(rows) == 5 * 2
    assert {"r", "N", "value", "value_se"} == set(rows[0]) - {"theta"}
    assert all(float(r["value_se"]) > 0 for r in rows)
    assert (out / "paths" / "decay_theta0_N128.dat").exists()


def test_full_run_artifacts(tmp_path):
    out = tmp_path / "all"
    cfg = small_config(out, theta="1.5707963267948966, 3.141592653589793")
    m = run(cfg, "all")
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["tool_version"] == __version__
    assert manifest["config"] == cfg.echo()
    assert manifest["seed_mixing"]["algorithm"] == "splitmix64"
    assert manifest["files"] == files_on_disk(out)
    starts = [e["started_s"] for e in manifest["experiments"]]
    assert starts == sorted(starts)
    assert all(e["finished_s"] >= e["started_s"] for e in manifest["experiments"])
    assert {e["id"] for e in m.experiments} >= {"conditions", "fdd-test", "anisotropy"}
    # every value column carries a standard error or the exact tag
    for name in manifest["files"]:
        if not name.endswith(".csv"):
            continue
        rows = read_csv(out / name)
        if not rows:
            continue
        for col in rows[0]:
            if col in KEY_COLUMNS or col.endswith("_se"):
                continue
            if {r[col] for r in rows} <= {"true", "false"}:
                continue
            assert f"{col}_se" in rows[0], (name, col)
            for r in rows:
                se = r[f"{col}_se"]
                assert se == "exact" or math.isfinite(float(se)) or se == "nan"


def test_rerun_replaces_previous_outputs(tmp_path):
    out = tmp_path / "rr"
    run(small_config(out), "all")
    run(small_config(out), "conditions")
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["files"] == files_on_disk(out)
    assert "decay.csv" not in manifest["files"]


def test_refuses_foreign_directory(tmp_path):
    out = tmp_path / "busy"
    out.mkdir()
    (out / "notes.txt").write_text("keep me")
    with pytest.raises(ConfigError, match="not empty"):
        run(small_config(out), "conditions")
    assert (out / "notes.txt").read_text() == "keep me"


def test_byte_identical_reruns_across_threads(tmp_path, monkeypatch):
    bodies = []
    for i, threads in enumerate(("1", "3", "8")):
        monkeypatch.setenv("QDFTLAB_THREADS", threads)
        out = tmp_path / f"run{i}"
        run(small_config(out), "all")
        bodies.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    assert bodies[0] and bodies[0] == bodies[1] == bodies[2]


def test_errors_carry_experiment_id(tmp_path):
    out = tmp_path / "err"
    cfg = small_config(out, "family = harmonic", extra="")
    m = run(cfg, "fdd-test")  # L = 32 is far too shallow for the harmonic tail
    (entry,) = m.experiments
    assert entry["status"] == "error" and entry["error"].startswith("fdd-test:")
    assert m.failed
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["experiments"][0]["partial_outputs"] is False


def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.ini"
    good.write_text(MINIMAL + f"n = 256\nR = 200\nconditions_terms = 4\n[output]\ndirectory = {tmp_path / 'o'}\n")
    assert main(["conditions", str(good)]) == 0
    bad = tmp_path / "bad.ini"
    bad.write_text(MINIMAL.replace("0.5", "1.5"))
    assert main(["conditions", str(bad)]) == 2
    assert "geometric ratio" in capsys.readouterr().err
    harm = tmp_path / "harm.ini"
    harm.write_text("family = harmonic\ntheta = 1.5\nL = 16\nn = 256\nR = 100\n")
    assert main(["fdd-test", str(harm), "--out", str(tmp_path / "h")]) == 1
    assert main(["simulate", str(good), "--seed", "3", "--replicates", "150",
                 "--out", str(tmp_path / "s")]) == 0
    manifest = json.loads((tmp_path / "s" / "run.json").read_text())
    assert manifest["config"]["master_seed"] == 3 and manifest["config"]["R"] == 150
