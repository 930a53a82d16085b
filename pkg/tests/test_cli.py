"""End-to-end checks of the command-line surface and its artifacts."""

import json
import os

import numpy as np
import pytest

from kppcascade.cli import (
    ExperimentConfig,
    RECIPES,
    _column,
    _parse_f,
    _parse_frames,
    _parse_grid,
    _parse_window,
    _read_table,
    _resolve,
    emit_csv,
    main,
)
from kppcascade.core import Grid1D, heaviside_stack, quadratic
from kppcascade.errors import InvalidInputError
from kppcascade.evolve import EvolveConfig, evolve_lab


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def traj_table(workdir):
    """k=1 trajectory with 20 snapshots spanning a decade, for front fits."""
    path = workdir / "traj_k1.csv"
    snaps = ",".join("%g" % (0.4 * i) for i in range(1, 21))
    code = main(
        ["evolve", "--k", "1", "--grid=-10,0.05,801", "--t-end", "8",
         "--snap", snaps, "--out", str(path)]
    )
    assert code == 0
    return path


@pytest.fixture(scope="module")
def bbm_table(workdir):
    path = workdir / "maxima.csv"
    code = main(
        ["bbm", "--k", "2", "--alpha", "1", "--t", "3", "--replicas", "300",
         "--seed", "7", "--out", str(path)]
    )
    assert code == 0
    return path


@pytest.fixture(scope="module")
def pde3_table(workdir):
    path = workdir / "traj_k2_t3.csv"
    code = main(
        ["evolve", "--k", "2", "--alpha", "1", "--grid=-20,0.05,1001",
         "--t-end", "3", "--out", str(path)]
    )
    assert code == 0
    return path


# ---------------------------------------------------------------- emit_csv


def test_csv_round_trip_is_bit_exact(tmp_path):
    path = tmp_path / "table.csv"
    awkward = [1.0 / 3.0, 1e-300, -0.0, 2.0**-53, 6.02e23]
    emit_csv(path, {"seed": 0}, ("a",), [(v,) for v in awkward])
    cols, rows = _read_table(str(path))
    back = _column(cols, rows, "a").astype(float)
    assert np.array_equal(back, np.array(awkward))


def test_csv_empty_table_keeps_header(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv(path, {"k": 2, "flag": True}, ("x", "y"), [])
    lines = path.read_text().splitlines()
    assert lines[-1] == "x,y"
    assert all(ln.startswith("#") for ln in lines[:-1])
    assert "# flag = true" in lines


def test_csv_comment_block_is_sorted(tmp_path):
    path = tmp_path / "sorted.csv"
    emit_csv(path, {"zeta": 1, "alpha": 2, "mid": 3}, ("v",), [(0,)])
    keys = [ln.split(" = ")[0][2:] for ln in path.read_text().splitlines()
            if ln.startswith("#")]
    assert keys == sorted(keys)


def test_csv_row_width_mismatch(tmp_path):
    with pytest.raises(InvalidInputError, match="width"):
        emit_csv(tmp_path / "bad.csv", {}, ("a", "b"), [(1.0,)])


def test_csv_write_is_atomic(tmp_path):
    path = tmp_path / "atom.csv"
    emit_csv(path, {}, ("a",), [(1,)])
    emit_csv(path, {}, ("a",), [(2,)])
    assert [p.name for p in tmp_path.iterdir()] == ["atom.csv"]
    assert path.read_text().splitlines()[-1] == "2"


# ---------------------------------------------------- parsing and resolution


def test_resolve_precedence():
    merged = _resolve({"a": 1, "b": 2, "c": 3}, {"b": 20}, {"c": 30, "a": None})
    assert merged == {"a": 1, "b": 20, "c": 30}


def test_resolve_rejects_unknown_key():
    with pytest.raises(InvalidInputError, match="bogus"):
        _resolve({"a": 1}, {"bogus": 2}, {})


def test_resolve_names_missing_parameter():
    with pytest.raises(InvalidInputError, match="'t_end'"):
        _resolve({"t_end": None}, None, {})


def test_parse_f_variants():
    assert _parse_f("quadratic").fprime0 == pytest.approx(1.0)
    assert _parse_f('{"kind": "quadratic"}').fprime0 == pytest.approx(1.0)
    mck = _parse_f("mckean:2.0")
    assert mck(np.array([0.5]))[0] != 0.0
    poly = _parse_f("polynomial:0,1,-1")
    xs = np.linspace(0.0, 1.0, 11)
    assert np.allclose(poly(xs), quadratic()(xs))


def test_parse_f_rejects_unknown():
    with pytest.raises(InvalidInputError, match="cubic"):
        _parse_f("cubic")
    with pytest.raises(InvalidInputError, match="unknown nonlinearity key"):
        _parse_f('{"kind": "quadratic", "typo": 1}')


def test_parse_grid_shape():
    g = _parse_grid("-40,0.05,1601")
    assert (g.x0, g.dx, g.n) == (-40.0, 0.05, 1601)
    with pytest.raises(InvalidInputError, match="x0,dx,n"):
        _parse_grid("1,2")


def test_parse_frames_canonical_linear():
    mode, frames = _parse_frames("linear:10", 2)
    assert mode == "linear"
    assert [f.a_coeff for f in frames] == [0.5, 1.5]
    assert all(f.cstar == 2.0 and f.t0 == 10.0 for f in frames)


def test_parse_frames_triples_broadcast():
    mode, frames = _parse_frames("2,1.5,10", 3)
    assert mode == "moving"
    assert len(frames) == 3
    with pytest.raises(InvalidInputError, match="1 or 3"):
        _parse_frames("2,1.5,10;2,0.5,10", 3)


def test_parse_window_rejects_bad_shape():
    assert _parse_window("100:1000") == (100.0, 1000.0)
    with pytest.raises(InvalidInputError, match="lo:hi"):
        _parse_window("100-1000")


def test_experiment_config_validates():
    with pytest.raises(InvalidInputError, match="subcommand"):
        ExperimentConfig("warp", {}, None)
    with pytest.raises(InvalidInputError, match="threads"):
        ExperimentConfig("wave", {}, None, threads=0)


# ---------------------------------------------------------------- exit codes


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["bbm", "--k", "1", "--alpa", "1", "--t", "1",
              "--replicas", "100", "--out", "x.csv"])
    assert info.value.code == 2


def test_unknown_config_key_exits_2(tmp_path, capsys):
    doc = tmp_path / "cfg.json"
    doc.write_text(json.dumps({"alpha": 1, "alpa": 2}))
    code = main(["bbm", "--k", "1", "--t", "1", "--replicas", "100",
                 "--config", str(doc), "--out", str(tmp_path / "x.csv")])
    err = capsys.readouterr().err
    assert code == 2
    assert "alpa" in err and err.startswith("error[invalid-input]")


def test_missing_input_file_exits_4(tmp_path, capsys):
    code = main(["front", "--in", str(tmp_path / "nope.csv"),
                 "--window", "1:10", "--out", str(tmp_path / "f.json")])
    assert code == 4
    assert capsys.readouterr().err.startswith("error[io]")


def test_numerical_failure_exits_3(pde3_table, tmp_path, capsys):
    # one snapshot can never support a decade-long fit window
    code = main(["front", "--in", str(pde3_table), "--window", "1:10",
                 "--out", str(tmp_path / "f.json")])
    assert code == 3
    assert capsys.readouterr().err.startswith("error[numerical]")


def test_missing_required_flag_exits_2(tmp_path, capsys):
    code = main(["wave", "--out", str(tmp_path / "p.csv")])
    assert code == 2
    assert "'c'" in capsys.readouterr().err


def test_missing_out_exits_2(capsys):
    code = main(["wave", "--c", "2.5"])
    assert code == 2
    assert "--out" in capsys.readouterr().err


# -------------------------------------------------------------- subcommands


def test_wave_profile_artifact(workdir):
    path = workdir / "profile.csv"
    assert main(["wave", "--c", "2.5", "--out", str(path)]) == 0
    text = path.read_text()
    assert "# lambda_est = " in text
    cols, rows = _read_table(str(path))
    assert cols == ["x", "U"]
    values = _column(cols, rows, "U").astype(float)
    assert np.all(np.diff(values) <= 1e-12)
    assert values[0] == pytest.approx(1.0, abs=1e-6)
    assert values[-1] == pytest.approx(0.0, abs=1e-6)


def test_evolve_long_format(pde3_table):
    cols, rows = _read_table(str(pde3_table))
    assert cols == ["t", "component", "x", "value"]
    assert len(rows) == 2 * 1001
    comp = _column(cols, rows, "component").astype(int)
    assert sorted(set(comp)) == [1, 2]
    values = _column(cols, rows, "value").astype(float)
    assert values.min() >= 0.0 and values.max() <= 1.0 + 1e-12


def test_evolve_values_match_library_bitwise(pde3_table):
    grid = Grid1D(-20.0, 0.05, 1001)
    cfg = EvolveConfig(k=2, alpha=1.0, f=quadratic(), grid=grid, dt=5e-3,
                       t_end=3.0, snapshot_times=(3.0,))
    direct = evolve_lab(cfg, heaviside_stack(grid, 2)).final
    cols, rows = _read_table(str(pde3_table))
    values = _column(cols, rows, "value").astype(float)
    stacked = np.concatenate([direct.component(1), direct.component(2)])
    assert np.array_equal(values, stacked)


def test_evolve_rerun_is_byte_identical(workdir):
    a, b = workdir / "re_a.csv", workdir / "re_b.csv"
    argv = ["evolve", "--k", "1", "--grid=-5,0.1,101", "--t-end", "1",
            "--out"]
    assert main(argv + [str(a)]) == 0
    assert main(argv + [str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_front_fit_artifact(traj_table, workdir):
    path = workdir / "fit.json"
    assert main(["front", "--in", str(traj_table), "--window", "0.4:8",
                 "--out", str(path)]) == 0
    fit = json.loads(path.read_text())
    assert set(fit) >= {"c_hat", "a_hat", "b_hat", "rms_residual", "window",
                        "config"}
    assert fit["c_hat"] == 2.0
    assert fit["n_samples"] == 20
    assert 0.5 < fit["a_hat"] < 2.5  # short-time fit, wide but sane
    assert fit["config"]["subcommand"] == "front"


def test_selfsim_series_artifact(workdir):
    path = workdir / "q.csv"
    assert main(["selfsim", "--k", "2", "--alpha", "1", "--t0", "10000",
                 "--tau-end", "1", "--out", str(path)]) == 0
    assert "# epsilon = 0.01\n" in path.read_text()
    cols, rows = _read_table(str(path))
    assert cols == ["tau", "component", "q", "remainder_norm"]
    q = _column(cols, rows, "q").astype(float)
    tau = _column(cols, rows, "tau").astype(float)
    assert np.all(q[tau == 0.0] == pytest.approx(1.0, abs=1e-9))


def test_bbm_table_layout(bbm_table):
    cols, rows = _read_table(str(bbm_table))
    assert cols == ["replica", "max_position", "derivative_martingale",
                    "truncated", "count_type_1", "count_type_2"]
    assert len(rows) == 300
    assert set(_column(cols, rows, "truncated")) == {"false"}
    counts = _column(cols, rows, "count_type_1").astype(int)
    assert counts.min() >= 1


def test_bbm_seed_changes_output(bbm_table, tmp_path):
    other = tmp_path / "maxima8.csv"
    assert main(["bbm", "--k", "2", "--alpha", "1", "--t", "3",
                 "--replicas", "300", "--seed", "8", "--out", str(other)]) == 0
    a = _read_table(str(bbm_table))[1]
    b = _read_table(str(other))[1]
    assert a != b


def test_compare_artifact(bbm_table, pde3_table, workdir):
    path = workdir / "ks.json"
    assert main(["compare", "--bbm", str(bbm_table), "--pde", str(pde3_table),
                 "--t", "3", "--out", str(path)]) == 0
    report = json.loads(path.read_text())
    assert report["n_samples"] == 300
    assert report["truncated_excluded"] == 0
    assert report["ks_distance"] < 0.05  # measured 0.030 at seed 7
    assert report["x_lo"] < report["x_hi"]


def test_compare_wrong_time_exits_2(bbm_table, pde3_table, tmp_path, capsys):
    code = main(["compare", "--bbm", str(bbm_table), "--pde", str(pde3_table),
                 "--t", "4", "--out", str(tmp_path / "ks.json")])
    assert code == 2
    assert "no snapshot at t = 4" in capsys.readouterr().err


# ---------------------------------------------------------------- reproduce


def test_reproduce_lists_recipes(capsys):
    assert main(["reproduce"]) == 0
    listed = capsys.readouterr().out.split()
    assert listed == list(RECIPES)


def test_reproduce_unknown_name_exits_2(capsys):
    assert main(["reproduce", "warp-drive"]) == 2
    err = capsys.readouterr().err
    assert "warp-drive" in err and "bramson" in err


def test_reproduce_artifact_is_deterministic(tmp_path, capsys):
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    assert main(["reproduce", "wave-profile", "--out", str(dir_a)]) == 0
    assert main(["reproduce", "wave-profile", "--out", str(dir_b)]) == 0
    out = capsys.readouterr().out
    assert out.count("wave-profile: PASS") == 2
    bytes_a = (dir_a / "wave-profile.json").read_bytes()
    assert bytes_a == (dir_b / "wave-profile.json").read_bytes()
    payload = json.loads(bytes_a)
    assert payload["passed"] is True
    assert payload["config"]["name"] == "wave-profile"
    assert "runtime_seconds" not in payload["results"]


def test_recipe_registry_covers_acceptance_surface():
    assert list(RECIPES) == [
        "wave-profile", "bramson", "cascade-k2", "cascade-k3", "wave-shape",
        "shift-identity", "projection-limit", "remainder-decay",
        "heat-kernel-scaling", "bbm-pde", "property-suite",
    ]
    assert all(callable(fn) for fn in RECIPES.values())
