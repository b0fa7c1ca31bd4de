from __future__ import annotations

import dataclasses
import json

import pytest

from mpoqem import bench, cli


def _tiny(experiment: str, **kw) -> bench.ExperimentConfig:
    base = dict(n_qubits=[4], depths=[4], eps2=[0.02], reps=2)
    base.update(kw)
    return dataclasses.replace(bench.preset(experiment), **base)


def test_presets_validate():
    for exp in bench.EXPERIMENTS:
        bench.preset(exp).validate()
        big = bench.preset(exp, paper_scale=True)
        big.validate()
    assert bench.preset("err-threshold").eps2 == [0.05, 0.1, 0.15, 0.2]
    deep = bench.preset("deep-qem", paper_scale=True)
    assert deep.n_qubits == [20] and deep.reps == 200 and max(deep.depths) == 20


@pytest.mark.parametrize(
    "bad",
    [
        dict(experiment="fig9"),
        dict(reps=0),
        dict(families=["coherent"]),
        dict(depths=[6]),
        dict(n_qubits=[]),
        dict(threads=0),
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(bench.ConfigError):
        dataclasses.replace(bench.preset("deep-qem"), **bad).validate()


def test_rows_are_deterministic_and_ordered():
    cfg = _tiny("mpo-inverse-sweep", families=["depolarizing", "bit_flip"], global_rates=[0.0])
    a, b = bench.run_experiment(cfg), bench.run_experiment(cfg)
    assert a.rows_csv() == b.rows_csv()
    keys = [(r["family"], r["seed"]) for r in a.rows]
    assert keys == [("depolarizing", 0), ("depolarizing", 1), ("bit_flip", 0), ("bit_flip", 1)]
    assert a.rows_csv().splitlines()[0].split(",") == bench.columns("mpo-inverse-sweep")


def test_worker_pool_matches_serial():
    cfg = _tiny("deep-qem", depths=[4, 8], global_rates=[0.05])
    serial = bench.run_experiment(cfg)
    pooled = bench.run_experiment(dataclasses.replace(cfg, threads=2))
    assert serial.rows_csv() == pooled.rows_csv()
    assert serial.summary_csv() == pooled.summary_csv()


def test_outputs_and_summary_check(tmp_path):
    cfg = _tiny("noise-inverse-dprime", d_primes=[1, 2], global_rates=[0.0, 0.01])
    res = bench.run_experiment(cfg)
    paths = bench.write_outputs(res, tmp_path)
    text = paths["rows"].read_text()
    assert text.startswith("# ")
    assert text.split("\n", 1)[1] == res.rows_csv()
    assert bench.check_summary(cfg.experiment, paths["rows"], paths["summary"])
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["statistic"] == "geometric" and manifest["config"]["reps"] == 2
    assert len(bench.load_rows(paths["rows"])) == 2 * 2 * 2
    # tampering with a row breaks the consistency check
    lines = text.splitlines()
    fields = lines[2].split(",")
    fields[bench.columns(cfg.experiment).index("noisy")] = "0.5"
    lines[2] = ",".join(fields)
    paths["rows"].write_text("\n".join(lines) + "\n")
    assert not bench.check_summary(cfg.experiment, paths["rows"], paths["summary"])


def test_state_level_summary_is_arithmetic():
    res = bench.run_experiment(_tiny("deep-qem", global_rates=[0.05]))
    stats = {s["metric"]: s["statistic"] for s in res.summary}
    assert stats["unmitigated"] == stats["mitigated"] == "arithmetic"
    channel = bench.run_experiment(_tiny("mpo-inverse-sweep"))
    stats = {s["metric"]: s["statistic"] for s in channel.summary}
    assert stats["noisy"] == stats["inverse"] == "geometric" and stats["sweeps"] == "arithmetic"


def test_failed_seed_is_recorded(monkeypatch):
    calls = []

    def flaky(cfg, point, seed):
        calls.append(seed)
        if seed == 1:
            raise RuntimeError("boom")
        return [dict(unmitigated=0.1, mitigated=0.05, ratio=0.5, all_converged=1)]

    monkeypatch.setitem(bench._SPECS, "deep-qem", dataclasses.replace(bench._SPECS["deep-qem"], runner=flaky))
    res = bench.run_experiment(_tiny("deep-qem", reps=3))
    assert calls == [0, 1, 2]
    assert [r["status"] for r in res.rows] == ["ok", "error: RuntimeError: boom", "ok"]
    assert len(res.failures) == 1
    assert all(s["count"] == 2 for s in res.summary)


def test_fits_in_manifest():
    cfg = _tiny("alpha-vs-nq", n_qubits=[4], depths=[4, 8, 12], global_rates=[0.05], reps=1)
    fits = bench.run_experiment(cfg).fits
    f = fits["depth_fit_n4"]
    assert f["unmitigated"]["exponent"] > 0 and 0 <= f["mitigated"]["r2"] <= 1
    assert f["suppression_factor"] == pytest.approx(10 ** f["intercept_gap"])


def test_config_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('reps = 3\n[deep-qem]\ndepths = [4, 8]\nseed = 7\n')
    cfg = bench.load_config(p, "deep-qem")
    assert (cfg.reps, cfg.depths, cfg.seed) == (3, [4, 8], 7)
    p.write_text("unknown_key = 1\n")
    with pytest.raises(bench.ConfigError):
        bench.load_config(p, "deep-qem")


def test_cli_runs_and_writes(tmp_path, capsys):
    cfgfile = tmp_path / "c.toml"
    cfgfile.write_text("n_qubits = [4]\ndepths = [4]\nfamilies = ['dephasing']\neps2 = [0.01]\nglobal_rates = [0.0]\n")
    out = tmp_path / "out"
    rc = cli.main(["mpo-inverse-sweep", "--config", str(cfgfile), "--out", str(out), "--reps", "1", "--seed", "3", "--check"])
    assert rc == 0
    rows = bench.load_rows(out / "mpo-inverse-sweep_rows.csv")
    assert [r["seed"] for r in rows] == [3]
    assert "rows:" in capsys.readouterr().out


def test_cli_config_errors(tmp_path, capsys):
    assert cli.main(["deep-qem", "--reps", "0", "--out", str(tmp_path)]) != 0
    assert cli.main(["deep-qem", "--config", str(tmp_path / "missing.toml")]) != 0
    bad = tmp_path / "bad.toml"
    bad.write_text("reps = [\n")
    assert cli.main(["deep-qem", "--config", str(bad)]) != 0
    assert "config error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["not-an-experiment"])
    assert exc.value.code != 0
