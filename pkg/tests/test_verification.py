import asyncio

from api.verification import (
    PROPERTY_INSTANCES,
    VerificationSuite,
    hellinger_property_violations,
    random_vector,
    run_verification,
)
from core.config import LabConfig
from core.registry import BASE_MANIFEST, convergence_registry, default_registry, load_manifest
from infrastructure.events import LabEventType

import numpy as np


def _corrupted_registry():
    entries = [dict(e) for e in BASE_MANIFEST]
    entries[5] = dict(entries[5], is_measure=True)
    return load_manifest({"name": "corrupted", "entries": entries})


def test_small_suite_passes(small_config, bus):
    report = asyncio.run(run_verification(small_config, bus=bus))
    assert report.passed, report.first_failure
    assert [c.name for c in report.checks][:3] == ["measure_flags", "registry_semimeasures", "mixture_dominance"]
    assert all(line.startswith("[PASS]") for line in report.lines())
    assert len(bus.get_event_history(LabEventType.CHECK_PASSED)) == len(report.checks)


def test_default_configuration_passes(tmp_path, bus):
    config = LabConfig.from_dict({"out": str(tmp_path)})
    assert config.depth == 8 and config.horizon == 10
    report = asyncio.run(run_verification(config, bus=bus))
    assert report.passed, report.first_failure


def test_corrupted_measure_flag_fails_first(small_config, bus):
    report = asyncio.run(run_verification(small_config, registry=_corrupted_registry(), bus=bus))
    assert not report.passed
    failure = report.first_failure
    assert failure.name == "measure_flags"
    assert failure.witness == "half-uniform"
    assert bus.get_event_history(LabEventType.CHECK_FAILED)


def test_low_precision_warns_but_is_deterministic(small_config, bus):
    small_config.precision = 30
    first = asyncio.run(run_verification(small_config, bus=bus))
    second = asyncio.run(run_verification(small_config, bus=bus))
    assert first.warnings
    assert first.lines() == second.lines()
    assert first.passed
    assert bus.get_event_history(LabEventType.TOLERANCE_WARNING)


def test_failed_check_keeps_witness(small_config, bus, mocker):
    suite = VerificationSuite(small_config, bus=bus)
    mocker.patch.object(suite, "check_anti_dominance", side_effect=RuntimeError("boom"))
    report = asyncio.run(suite.run())
    failed = [c for c in report.checks if not c.passed]
    assert [c.name for c in failed] == ["anti_dominance"]
    assert "boom" in failed[0].detail


def test_random_vectors_are_defective_on_request():
    rng = np.random.default_rng(3)
    for _ in range(50):
        assert sum(random_vector(rng, 3, True)) < 1
        assert sum(random_vector(rng, 3, False)) == 1


def test_property_checks_are_seeded():
    assert hellinger_property_violations(5, 50) == hellinger_property_violations(5, 50) == []


def test_hellinger_properties_use_thousand_instances(small_config, bus):
    assert PROPERTY_INSTANCES == 1000
    result = VerificationSuite(small_config, bus=bus).check_hellinger_properties()
    assert result.passed
    assert result.detail.startswith("1000 ")


def test_supermartingale_check_covers_both_registries(small_config, bus):
    registry = default_registry()
    result = VerificationSuite(small_config, registry=registry, bus=bus).check_registry_supermartingales()
    assert result.passed
    assert result.detail.startswith(f"{len(registry) + len(convergence_registry())} ")


def test_supermartingale_failure_names_entry(small_config, bus, mocker):
    mocker.patch("api.verification.is_supermartingale", return_value=(False, "01"))
    suite = VerificationSuite(small_config, registry=default_registry(), bus=bus)
    result = suite.check_registry_supermartingales()
    assert not result.passed
    assert result.witness == f"{suite.registry.entry(1).name}:01"
