import dataclasses
import json

import pytest

from twotime import scenarios as scen_mod
from twotime.cli import main
from twotime.config import config_from_dict
from twotime.engine import RunawayError
from twotime.runner import (CHECKPOINT_NAME, emit_results, load_checkpoint, replica_chunks, resume_scenario,
                            run_scenario)

TINY_HO = {"scenario": "ho_ground_state", "replicas": 6, "batch": 2, "t1": 4.0, "gap": 2.0, "window": 6.0,
           "lag": 2.0, "taus": [0.0, 1.0], "n_bases": 2, "min_window_ratio": 0.0, "step_factor": 0.1}
TINY_OU = {"scenario": "ou_check", "replicas": 4, "batch": 1, "steps": 4000, "burn_in_steps": 100,
           "noise_draws": 1000}


def tiny(base, **kw):
    d = dict(base)
    d.update(kw)
    return config_from_dict(d)


def tables(path):
    return {p.name: p.read_bytes() for p in sorted(path.glob("*.csv"))}


def test_replica_chunks():
    assert replica_chunks(5, 2) == [[0, 1], [2, 3], [4]]


def test_output_files_enumerated(tmp_path):
    bundle = run_scenario(tiny(TINY_HO))
    written = {p.name for p in emit_results(bundle, tmp_path)}
    assert {"manifest.json", "correlator.csv", "oracle_delta.csv"} <= written
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["files"]) == written
    assert man["seed"] == 0 and man["config"]["scenario"] == "ho_ground_state"
    assert man["oracle"] and man["tolerance"] and man["statistic"]
    assert man["versions"]["numpy"]


def test_tables_byte_identical(tmp_path):
    for d in ("a", "b"):
        emit_results(run_scenario(tiny(TINY_HO, seed=11)), tmp_path / d)
    assert tables(tmp_path / "a") == tables(tmp_path / "b")
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma.pop("created"), mb.pop("created")
    assert ma == mb


def test_different_seed_changes_tables(tmp_path):
    emit_results(run_scenario(tiny(TINY_HO, seed=1)), tmp_path / "a")
    emit_results(run_scenario(tiny(TINY_HO, seed=2)), tmp_path / "b")
    assert tables(tmp_path / "a")["correlator.csv"] != tables(tmp_path / "b")["correlator.csv"]


def test_resume_matches_uninterrupted_run(tmp_path):
    cfg = tiny(TINY_HO)
    ck = tmp_path / CHECKPOINT_NAME
    full = run_scenario(cfg, checkpoint=ck)
    emit_results(full, tmp_path / "full")
    doc = json.loads(ck.read_text())
    assert len(doc["chunks"]) == 3
    # pretend the run died after the first chunk
    doc["chunks"] = {"0": doc["chunks"]["0"]}
    ck.write_text(json.dumps(doc))
    seen = []
    resumed = resume_scenario(ck, progress=seen.append)
    assert len(seen) == 2
    emit_results(resumed, tmp_path / "resumed")
    assert tables(tmp_path / "full") == tables(tmp_path / "resumed")


def test_resume_rejects_foreign_checkpoint(tmp_path):
    ck = tmp_path / CHECKPOINT_NAME
    run_scenario(tiny(TINY_HO), checkpoint=ck)
    _, doc = load_checkpoint(ck)
    with pytest.raises(ValueError, match="different configuration"):
        run_scenario(tiny(TINY_HO, seed=5), resume=doc)


def test_worker_count_does_not_change_results(tmp_path):
    emit_results(run_scenario(tiny(TINY_OU, workers=1)), tmp_path / "w1")
    emit_results(run_scenario(tiny(TINY_OU, workers=2)), tmp_path / "w2")
    assert tables(tmp_path / "w1") == tables(tmp_path / "w2")


def test_runaway_drops_only_the_failing_replica(monkeypatch):
    real = scen_mod.CATALOG["ou_check"]

    def run_chunk(cfg, ids, ctx):
        if 2 in ids:
            raise RunawayError(17, 1e9, ids)
        return real.run_chunk(cfg, ids, ctx)

    monkeypatch.setitem(scen_mod.CATALOG, "ou_check", dataclasses.replace(real, run_chunk=run_chunk))
    bundle = run_scenario(tiny(TINY_OU, batch=4))
    assert bundle.failures == [{"replica": 2, "step": 17, "drift_norm": 1e9}]
    assert bundle.aggregate.summary  # aggregation ran on the survivors


def test_minkowski_run_is_exploratory(tmp_path):
    cfg = config_from_dict({"scenario": "free_field", "mode": "minkowski", "damping": 1.0, "replicas": 2,
                            "spatial_extent": 4, "time_extent": 4, "steps": 200, "record_every": 10,
                            "burn_in_time": 0.1})
    bundle = run_scenario(cfg)
    assert bundle.exploratory and bundle.passed is None
    emit_results(bundle, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["oracle"] == "none (exploratory)" and man["exploratory"]


def test_delta_sweep_columns(tmp_path):
    cfg = config_from_dict({"scenario": "delta_sweep", "replicas": 16, "batch": 8, "pilot_time": 60.0,
                            "pilot_replicas": 4, "ratios": [1.0, 3.0, 10.0, 30.0]})
    emit_results(run_scenario(cfg), tmp_path)
    header = (tmp_path / "delta_sweep.csv").read_text().splitlines()[0]
    assert header == "delta_over_deltafluct,windowed,ensemble_ref,diff,err,run_variance"


def test_cli_verbs(tmp_path, capsys):
    assert main(["list-scenarios"]) == 0
    assert "ho_ground_state" in capsys.readouterr().out
    cfg = tmp_path / "ho.yaml"
    cfg.write_text("\n".join(f"{k}: {json.dumps(v)}" for k, v in TINY_HO.items()) + "\n")
    assert main(["validate", str(cfg)]) == 0
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "-q"]) == 0
    assert (out / "manifest.json").exists() and (out / CHECKPOINT_NAME).exists()
    assert main(["resume", str(out / CHECKPOINT_NAME), "-q"]) == 0
    assert "PASSED" in capsys.readouterr().out


def test_cli_invalid_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: ou_check\nlangevin_step: -1\n")
    assert main(["run", str(bad)]) == 2
    assert "langevin_step must be positive" in capsys.readouterr().err
    assert main(["validate", "no_such_thing"]) == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert main(["resume", str(junk)]) == 2


def test_cli_reports_failed_check(tmp_path, monkeypatch, capsys):
    real = scen_mod.CATALOG["ho_ground_state"]

    def aggregate(cfg, results, ctx):
        agg = real.aggregate(cfg, results, ctx)
        agg.checks[0] = dataclasses.replace(agg.checks[0], expected=agg.checks[0].expected + 100.0)
        return agg

    monkeypatch.setitem(scen_mod.CATALOG, "ho_ground_state", dataclasses.replace(real, aggregate=aggregate))
    cfg = tmp_path / "ho.yaml"
    cfg.write_text("\n".join(f"{k}: {json.dumps(v)}" for k, v in TINY_HO.items()) + "\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "-q"]) == 1
    assert "FAILED" in capsys.readouterr().out


def test_chunking_does_not_change_aggregate():
    import numpy as np
    a = run_scenario(tiny(TINY_OU, batch=1)).checks
    b = run_scenario(tiny(TINY_OU, batch=4)).checks
    assert [c.quantity for c in a] == [c.quantity for c in b]
    np.testing.assert_allclose([c.measured for c in a], [c.measured for c in b], rtol=1e-12)
