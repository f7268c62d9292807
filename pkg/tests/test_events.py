import asyncio

import pytest

from infrastructure.events import LabEvent, LabEventBus, LabEventType


def test_duplicate_subscription_is_refused(bus):
    def on_check(event):
        pass

    assert bus.subscribe(LabEventType.CHECK_PASSED, on_check)
    assert not bus.subscribe(LabEventType.CHECK_PASSED, on_check)
    assert bus.get_subscriber_count(LabEventType.CHECK_PASSED) == 1
    assert bus.unsubscribe(LabEventType.CHECK_PASSED, on_check)
    assert not bus.unsubscribe(LabEventType.CHECK_PASSED, on_check)


def test_publish_nowait_calls_sync_subscribers(bus):
    seen = []
    bus.subscribe(LabEventType.FILE_WRITTEN, lambda e: seen.append(e.data["path"]))
    assert bus.publish_nowait(LabEvent(LabEventType.FILE_WRITTEN, data={"path": "a.csv"}))
    assert seen == ["a.csv"]


def test_publish_nowait_reports_failing_subscriber(bus):
    def broken(event):
        raise RuntimeError("boom")

    bus.subscribe(LabEventType.CHECK_FAILED, broken)
    assert not bus.publish_nowait(LabEvent(LabEventType.CHECK_FAILED))
    assert len(bus.get_event_history(LabEventType.CHECK_FAILED)) == 1


@pytest.mark.asyncio
async def test_async_publish_reaches_both_kinds(bus):
    seen = []

    async def on_async(event):
        seen.append(("async", event.experiment))

    def on_sync(event):
        seen.append(("sync", event.experiment))

    bus.subscribe(LabEventType.EXPERIMENT_STARTED, on_async)
    bus.subscribe(LabEventType.EXPERIMENT_STARTED, on_sync)
    assert await bus.publish(LabEvent(LabEventType.EXPERIMENT_STARTED, experiment="prop1"))
    assert sorted(seen) == [("async", "prop1"), ("sync", "prop1")]


def test_async_publish_reports_failing_subscriber(bus):
    async def broken(event):
        raise RuntimeError("boom")

    bus.subscribe(LabEventType.CHECK_FAILED, broken)
    assert not asyncio.run(bus.publish(LabEvent(LabEventType.CHECK_FAILED)))


def test_history_is_bounded():
    bus = LabEventBus(max_history_size=3)
    for i in range(5):
        bus.publish_nowait(LabEvent(LabEventType.TOLERANCE_WARNING, data={"i": i}))
    history = bus.get_event_history()
    assert [e.data["i"] for e in history] == [2, 3, 4]
    assert history[-1].to_dict()["event_type"] == "tolerance.warning"
    bus.clear_history()
    assert bus.get_event_history() == []
