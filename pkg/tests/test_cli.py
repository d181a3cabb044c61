import json

import pytest

from kuramoto_mfg import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_thresholds_two_dirac(capsys):
    code, out, _ = run(capsys, "thresholds", "--beta", "1", "--sigma", "1")
    assert code == 0
    rep = json.loads(out)
    assert 11.17 <= rep["kappa_c"] <= 11.19
    assert 2.85 <= rep["kappa_P"] <= 2.95
    assert rep["gamma"] == 1.5
    assert rep["config"]["dist"]["kind"] == "dirac"
    assert list(rep)[:3] == ["command", "kappa_c", "kappa_P"]


def test_thresholds_delta0(capsys):
    code, out, _ = run(capsys, "thresholds", "--sigma", "2", "--dist",
                       '{"kind": "dirac", "nodes": [[0, 1]]}')
    assert code == 0
    rep = json.loads(out)
    assert rep["kappa_c"] == 12.0
    assert rep["kappa_c_delta0"] == 12.0


@pytest.mark.parametrize("dist,field", [
    ('{"kind": "cauchy"}', "dist.kind"),
    ('{"kind": "uniform"}', "dist.a"),
    ('{"nodes": [[1, 1]]}', "dist.kind"),
    ('{"kind": "dirac", "nodes": [[1, 0.3]]}', "dist"),
    ("{not json", "dist"),
])
def test_malformed_dist_is_config_error(capsys, dist, field):
    code, _, err = run(capsys, "thresholds", "--dist", dist)
    assert code == 2
    assert field in err


def test_bad_config_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"kappa": 1, "eta": 2}}')
    code, _, err = run(capsys, "thresholds", "--config", str(bad))
    assert code == 2 and "model.eta" in err
    code, _, err = run(capsys, "thresholds", "--config", str(tmp_path / "missing.json"))
    assert code == 2
    code, _, err = run(capsys, "thresholds", "--beta", "-1")
    assert code == 2 and "beta" in err
    code, _, _ = run(capsys, "nonsense")
    assert code == 2


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"kappa": 3, "beta": 2, "sigma": 1},
                               "dist": {"kind": "gaussian", "mean": 0, "variance": 1}}))
    code, out, _ = run(capsys, "thresholds", "--config", str(cfg), "--beta", "1", "--sigma", "2")
    rep = json.loads(out)
    assert rep["config"]["model"] == {"kappa": 3.0, "beta": 1.0, "sigma": 2.0, "gamma": 3.0}
    assert 13.76 <= rep["kappa_c"] <= 13.78


def test_gmap_figure1(capsys, tmp_path):
    out_csv = tmp_path / "g.csv"
    code, _, _ = run(capsys, "gmap", "--kappa", "9", "--scan-points", "64", "--out", str(out_csv),
                     "--quiet")
    assert code == 0
    side = json.loads(out_csv.with_suffix(".json").read_text())
    assert len(side["fixed_points"]) == 3 and side["fixed_points"][0] == 0.0
    rows = out_csv.read_text().splitlines()
    assert rows[0] == "alpha,G_kappa" and len(rows) == 66


def test_gmap_subcritical_and_clipping(capsys):
    code, out, err = run(capsys, "gmap", "--kappa", "1", "--alpha-max", "5", "--grid-n", "128")
    assert code == 0
    rep = json.loads(out)
    assert rep["fixed_points"] == [0.0]
    assert "clipped" in err and rep["warnings"]


def test_penrose_command(capsys, tmp_path):
    out_csv = tmp_path / "p.csv"
    code, _, _ = run(capsys, "penrose", "--theta-max", "12", "--samples", "801",
                     "--out", str(out_csv), "--quiet")
    assert code == 0
    side = json.loads(out_csv.with_suffix(".json").read_text())
    assert side["theta_max"] == 12.0
    assert side["config"]["options"]["theta_max"] == 12.0
    assert side["rightmost_crossing"]["reP"] == pytest.approx(2 / side["kappa_P"])
    assert out_csv.read_text().splitlines()[0] == "theta,reP,imP"
    code, out, _ = run(capsys, "penrose", "--dist", '{"kind": "dirac", "nodes": [[0, 1]]}')
    rep = json.loads(out)
    assert len(rep["crossings"]) == 1 and rep["crossings"][0]["theta"] == 0.0


def test_stability_certificates(capsys):
    code, out, _ = run(capsys, "stability", "--beta", "1", "--sigma", "2", "--lambda", "0.01",
                       "--kappas", "13", "--dist", '{"kind": "gaussian", "mean": 0, "variance": 1}')
    assert code == 0
    rep = json.loads(out)
    assert rep["kappas"][0]["certificate"] == "yes"
    assert rep["op_norm_L"] <= rep["norm_bound"] + 1e-6
    code, out, _ = run(capsys, "stability", "--kappas", "2,5", "--time-n", "1024")
    rep = json.loads(out)
    two, five = rep["kappas"]
    assert two["certificate"] == "yes" and two["zero_count"] == 0 and two["zero_count_route"]
    assert five["certificate"] == "unknown" and five["zero_count"] > 0
    code, _, err = run(capsys, "stability", "--lambda", "0.9")
    assert code == 2 and "lambda" in err


def test_simulate_uniform(capsys, tmp_path):
    out_csv = tmp_path / "s.csv"
    code, _, _ = run(capsys, "simulate", "--kappa", "2", "--start", "uniform", "--grid-n", "64",
                     "--time-n", "100", "--horizon", "5", "--out", str(out_csv), "--quiet")
    assert code == 0
    rows = [r.split(",") for r in out_csv.read_text().splitlines()[1:]]
    assert all(abs(float(r[3])) < 1e-12 for r in rows)
    side = json.loads(out_csv.with_suffix(".json").read_text())
    assert "error" in side["decay_fit"]


def test_simulate_exit_codes(capsys):
    code, _, err = run(capsys, "simulate", "--kappa", "2", "--grid-n", "64", "--time-n", "100",
                       "--horizon", "5", "--max-sweeps", "1", "--quiet")
    assert code == 4 and "not converged" in err
    code, _, err = run(capsys, "simulate", "--kappa", "3000", "--grid-n", "32", "--time-n", "50",
                       "--horizon", "1", "--start", "equilibrium", "--quiet")
    assert code == 3 and "numerical failure" in err
    code, _, _ = run(capsys, "simulate", "--kappa", "2", "--start", "sideways")
    assert code == 2


def test_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("KMFG_THREADS", "two")
    code, _, err = run(capsys, "gmap", "--kappa", "1", "--grid-n", "64")
    assert code == 2 and "KMFG_THREADS" in err
    monkeypatch.setenv("KMFG_THREADS", "2")
    code, out, _ = run(capsys, "gmap", "--kappa", "3", "--grid-n", "64",
                       "--dist", '{"kind": "dirac", "nodes": [[0, 1]]}')
    assert code == 0 and len(json.loads(out)["fixed_points"]) == 2


def test_repro_is_deterministic_and_matches(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "repro", "--out", str(a), "--quiet")[0] == 0
    assert run(capsys, "repro", "--out", str(b), "--quiet")[0] == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / "repro.json").read_text())
    assert rep["matches_expected"] and rep["differences"] == []


def test_compare_reports_differences():
    diffs = cli._compare({"x": [1.0, 2.0], "y": "a"}, {"x": [1.0, 2.5], "y": "b"})
    assert len(diffs) == 2
    assert cli._compare({"x": 1.0}, {"x": 1.0 + 1e-12}) == []
