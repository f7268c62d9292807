import csv
import hashlib
import json
from pathlib import Path

import pytest

from api.experiments import EXPERIMENTS, monitor, run_experiment
from core.config import LabConfig
from core.errors import UnknownExperiment
from infrastructure.events import LabEventType


def _config(tmp_path: Path, **overrides) -> LabConfig:
    values = {
        "horizon": 6,
        "stages": 16,
        "depth": 5,
        "alpha_length": 12,
        "samples": 2,
        "sample_horizon": 24,
        "quasimeasure_stages": 12,
        "out": str(tmp_path),
    }
    values.update(overrides)
    return LabConfig.from_dict(values)


def test_all_named_experiments_are_registered():
    assert set(EXPERIMENTS) == {
        "solomonoff-convergence",
        "lemma1-bounds",
        "counterexample",
        "prop1",
        "prop2",
        "anti-dominance",
        "poly3-limit",
    }


def test_unknown_experiment(tmp_path, bus):
    with pytest.raises(UnknownExperiment) as excinfo:
        run_experiment("no-such-thing", _config(tmp_path), bus)
    assert excinfo.value.witness == "no-such-thing"


def test_manifest_lists_every_file_with_digest(tmp_path, bus):
    result, manifest_path = run_experiment("lemma1-bounds", _config(tmp_path), bus)
    assert result.passed
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    assert manifest["config"]["experiment"] == "lemma1-bounds"
    assert manifest["config"]["seed"] == 0
    assert manifest["verdicts"]["lemma1-bounds.chain"] is True
    listed = {o["path"]: o["sha256"] for o in manifest["outputs"]}
    assert {"lemma1_chain.csv", "lemma1_tails.csv", "lemma1_counts.csv", "plot_lemma1_chain.py", "lemma1-bounds.json"} <= set(listed)
    for name, digest in listed.items():
        data = (manifest_path.parent / name).read_bytes()
        assert hashlib.sha256(data).hexdigest() == digest


def test_outputs_are_bit_identical_for_same_seed(tmp_path, bus):
    _, first = run_experiment("lemma1-bounds", _config(tmp_path / "a"), bus)
    _, second = run_experiment("lemma1-bounds", _config(tmp_path / "b"), bus)
    for name in ("lemma1_chain.csv", "lemma1-bounds.json", "plot_lemma1_chain.py"):
        assert (first.parent / name).read_bytes() == (second.parent / name).read_bytes()


def test_lifecycle_events_are_published(tmp_path, bus):
    run_experiment("poly3-limit", _config(tmp_path), bus)
    started = bus.get_event_history(LabEventType.EXPERIMENT_STARTED)
    finished = bus.get_event_history(LabEventType.EXPERIMENT_FINISHED)
    written = bus.get_event_history(LabEventType.FILE_WRITTEN)
    assert started[-1].experiment == "poly3-limit"
    assert finished[-1].data["passed"] is True
    assert {e.data["path"] for e in written} == {"poly3_limit.csv", "plot_poly3_limit.py", "poly3-limit.json"}
    assert bus.get_subscriber_count(LabEventType.FILE_WRITTEN) == 0


def test_poly3_experiment_series(tmp_path, bus):
    result, manifest_path = run_experiment("poly3-limit", _config(tmp_path), bus)
    assert result.verdicts == {"limit": True, "exact_agreement": True}
    with open(manifest_path.parent / "poly3_limit.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["t"] == "1"
    assert rows[-1]["t"] == "1000000"
    assert abs(float(rows[-1]["partial_product"]) - 0.450) < 1e-3


def test_solomonoff_convergence(tmp_path, bus):
    result, manifest_path = run_experiment("solomonoff-convergence", _config(tmp_path), bus)
    assert result.passed
    with open(manifest_path.parent / "solomonoff_hellinger.csv", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["t", "h_t", "cumsum", "exp_half_cumsum"]
        assert len(list(reader)) == 24


def test_counterexample_experiment(tmp_path, bus):
    result, manifest_path = run_experiment("counterexample", _config(tmp_path), bus)
    for key in ("lex_monotone", "stagewise_random", "r_supermartingale", "contamination_bound_at_01", "contamination_has_01"):
        assert result.verdicts[key], key
    payload = json.loads((manifest_path.parent / "counterexample.json").read_text(encoding="utf-8"))
    assert payload["seed"] == 0
    assert payload["values"]["trace"]["invariant_passed"] is True
    assert len(payload["values"]["on_sequence_conditionals"]) == 12


def test_anti_dominance_experiment(tmp_path, bus):
    result, _ = run_experiment("anti-dominance", _config(tmp_path), bus)
    assert result.passed
    assert result.summary["exceeds_from"] is not None


def test_prop2_experiment(tmp_path, bus):
    result, manifest_path = run_experiment("prop2", _config(tmp_path), bus)
    assert result.verdicts["ratio_above_one_before_cutoff"]
    assert result.verdicts["ratio_exact_after_cutoff"]
    assert result.summary["largest_cutoff"] == 10
    assert (manifest_path.parent / "prop2_series.csv").exists()


def test_prop1_experiment_writes_summary(tmp_path, bus):
    result, manifest_path = run_experiment("prop1", _config(tmp_path), bus)
    assert set(result.verdicts) == {"property_checks", "plateau"}
    with open(manifest_path.parent / "prop1_summary.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["seed"] for r in rows] == ["0", "1"]


def test_monitor_counts_runs(tmp_path, bus):
    before = monitor.get_stats()["total_runs"]
    run_experiment("poly3-limit", _config(tmp_path), bus)
    assert monitor.get_stats()["total_runs"] == before + 1
