import csv
import json
import math

import numpy as np
import pytest

from landau_ids.cli import main
from landau_ids.config import (
    ConfigError,
    config_hash,
    load_toml,
    read_curve_csv,
    validate_run,
    write_curve_csv,
)

RUN_TOML = """
[lattice]
b = 6.283185307179586
a = 1.0
n = 1

[potential]
family = "exponential"
beta = 2.0
sup_norm = 2.0

[disorder]
kappa = 1.0
seed = 7

[energies]
min = 0.02
max = 0.3
count = 6

[sampling]
samples = 256
theta_per_side = 2
max_window = 6
"""


@pytest.fixture
def run_cfg(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(RUN_TOML)
    return path


def _read(path):
    return path.read_bytes()


def test_run_ids_outputs_and_determinism(run_cfg, tmp_path):
    outs = [tmp_path / n for n in ("a", "b", "c")]
    assert main(["run-ids", "--config", str(run_cfg), "--out", str(outs[0])]) == 0
    assert main(["run-ids", "--config", str(run_cfg), "--out", str(outs[1])]) == 0
    assert main(["run-ids", "--config", str(run_cfg), "--out", str(outs[2]), "--threads", "4"]) == 0
    for o in outs[1:]:
        assert _read(o / "ids_curve.csv") == _read(outs[0] / "ids_curve.csv")
        assert _read(o / "meta.json") == _read(outs[0] / "meta.json")
    lines = (outs[0] / "ids_curve.csv").read_text().splitlines()
    assert lines[0].startswith("# landau-ids ") and "config-sha256:" in lines[0]
    assert "E,value,stderr" in lines
    meta = json.loads((outs[0] / "meta.json").read_text())
    # defaults are materialized
    assert meta["config"]["sampling"]["chunk"] == 256
    assert meta["config"]["policy"]["starvation"] == "warn"
    assert meta["provenance"]["config_sha256"] == config_hash(meta["config"])


def test_seed_override_changes_hash(run_cfg, tmp_path):
    assert main(["run-ids", "--config", str(run_cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run-ids", "--config", str(run_cfg), "--out", str(tmp_path / "b"), "--seed", "8"]) == 0
    ma = json.loads((tmp_path / "a" / "meta.json").read_text())
    mb = json.loads((tmp_path / "b" / "meta.json").read_text())
    assert mb["config"]["disorder"]["seed"] == 8
    assert ma["provenance"]["config_sha256"] != mb["provenance"]["config_sha256"]


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.toml"
    assert main(["run-ids", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_missing_kappa_is_schema_error(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(RUN_TOML.replace("kappa = 1.0\n", ""))
    assert main(["run-ids", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "schema" in err and "kappa" in err


def test_hypothesis_violation_rejected(tmp_path, capsys):
    path = tmp_path / "h4.toml"
    path.write_text(RUN_TOML.replace("sup_norm = 2.0", "sup_norm = 20.0"))
    assert main(["run-ids", "--config", str(path)]) == 2
    assert "gap" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "extra.toml"
    path.write_text(RUN_TOML + "\n[sampling2]\nx = 1\n")
    assert main(["run-ids", "--config", str(path)]) == 2


def test_starvation_policy_error(tmp_path, capsys):
    path = tmp_path / "starve.toml"
    path.write_text(RUN_TOML.replace("min = 0.02", "min = 0.001") + '\n[policy]\nstarvation = "error"\n')
    assert main(["run-ids", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "starvation" in capsys.readouterr().err


def test_fit_lifshitz_from_curve(tmp_path, capsys):
    b = 2 * math.pi
    eps = np.geomspace(1e-3, 1e-1, 12)
    values = b / (2 * math.pi) * np.exp(-0.01 / eps)
    curve = tmp_path / "ids_curve.csv"
    write_curve_csv(curve, 2 * b * eps, values, values / 100,
                    {"version": "x", "git": "x", "config_sha256": "x"})
    (tmp_path / "meta.json").write_text(json.dumps(
        {"run": {"lattice": {"b": b}, "potential": {"family": "powerlaw", "varkappa": 4.0}}}))
    assert main(["fit-lifshitz", str(curve), "--out", str(tmp_path / "fit")]) == 0
    report = json.loads((tmp_path / "fit" / "lifshitz_fit.json").read_text())
    assert report["slope"] == pytest.approx(-1.0, rel=1e-6)
    assert report["target"] == pytest.approx(1.0)
    out = capsys.readouterr().out
    assert "window(E/2b)" in out and "limit" in out


def test_fit_lifshitz_insufficient_points(tmp_path):
    curve = tmp_path / "ids_curve.csv"
    write_curve_csv(curve, [0.1, 0.2], [0.0, 0.0], [0.0, 0.0], {"version": "x", "git": "x", "config_sha256": "x"})
    rc = main(["fit-lifshitz", str(curve), "--b", "6.283185307179586", "--family", "powerlaw",
               "--param", "varkappa=4", "--out", str(tmp_path)])
    assert rc == 1


def test_verify_bounds_single_selector(tmp_path):
    assert main(["verify-bounds", "delta", "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(l for l in (tmp_path / "bounds_summary.csv").read_text().splitlines()
                           if not l.startswith("#")))
    assert rows[0] == ["suite", "case", "value", "bound", "pass", "note"]
    assert all(r[4] == "True" for r in rows[1:])


def test_verify_bounds_points_to_failing_row(tmp_path, capsys):
    assert main(["verify-bounds", "determinant", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    path = tmp_path / "bounds_summary.csv"
    line = int(err.split(f"{path}:")[1].split()[0])
    assert path.read_text().splitlines()[line - 1].split(",")[4] == "False"


def test_unknown_selector_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["verify-bounds", "nonsense"])
    assert exc.value.code == 2


@pytest.mark.parametrize("W,flat", [('kind = "constant"\nvalue = 0.3', True),
                                    ('kind = "constant"\nvalue = 0.0', True),
                                    ('kind = "bumps"\namplitude = 0.5\nwidth = 0.3', False)])
def test_band_sweep(tmp_path, W, flat):
    path = tmp_path / "band.toml"
    path.write_text(f"[band]\np = 1\nr = 2\ntheta_per_side = 3\nq_max = 1\n[band.W]\n{W}\n")
    assert main(["band-sweep", "--config", str(path), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(l for l in (tmp_path / "bands.csv").read_text().splitlines()
                               if not l.startswith("#")))
    assert len(rows) == 2
    assert all(r["constant"] == str(flat) for r in rows)


def test_band_sweep_rejects_reducible_flux(tmp_path):
    path = tmp_path / "band.toml"
    path.write_text('[band]\np = 2\nr = 4\n[band.W]\nkind = "constant"\n')
    assert main(["band-sweep", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_print_schema(capsys):
    assert main(["print-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "kappa" in schema["run"]["properties"]["disorder"]["required"]


def test_curve_csv_round_trip(tmp_path):
    E = np.array([0.1, 1 / 3, 2.5e-7])
    v = np.array([1e-300, 0.5, 1 / 7])
    path = tmp_path / "c.csv"
    write_curve_csv(path, E, v, v, {"version": "x", "git": "x", "config_sha256": "x"})
    e2, v2, s2 = read_curve_csv(path)
    assert np.array_equal(E, e2) and np.array_equal(v, v2) and np.array_equal(v, s2)


def test_validate_run_energy_units(run_cfg):
    data = load_toml(run_cfg)
    setup = validate_run(data)
    assert setup.energies[0] == pytest.approx(0.02 * 2 * setup.lattice.b)
    data["energies"]["units"] = "absolute"
    assert validate_run(data).energies[0] == pytest.approx(0.02)
    data["energies"]["max"] = 0.01
    with pytest.raises(ConfigError):
        validate_run(data)
