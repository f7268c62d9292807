"""
实验事件总线
校验结果、精度警告、实验生命周期与文件写出都经由这里分发；
清单与报告通过订阅拿到结果，不直接依赖产生结果的模块
"""

import asyncio
import logging
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any

logger: logging.Logger = logging.getLogger(__name__)


class LabEventType(Enum):
    """实验事件类型枚举"""

    # 校验
    CHECK_PASSED = "check.passed"
    CHECK_FAILED = "check.failed"
    TOLERANCE_WARNING = "tolerance.warning"  # 工作精度低于 64 位

    # 实验生命周期
    EXPERIMENT_STARTED = "experiment.started"
    EXPERIMENT_FINISHED = "experiment.finished"

    # 输出
    FILE_WRITTEN = "file.written"


@dataclass
class LabEvent:
    """实验事件"""

    event_type: LabEventType
    experiment: str = ""
    data: dict[str, Any] = field(default_factory=dict)
    created_at: datetime = field(default_factory=datetime.now)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_type": self.event_type.value,
            "experiment": self.experiment,
            "data": self.data,
            "created_at": self.created_at.isoformat(),
        }


def _callback_name(callback: Callable) -> str:
    return getattr(callback, "__name__", repr(callback))


class LabEventBus:
    """
    实验事件总线

    - publish_nowait: 同步代码中立即调用同步订阅者
    - publish: 在事件循环里并发调用全部订阅者，同步回调放进线程
    """

    def __init__(self, max_history_size: int = 1000):
        self._subscribers: dict[LabEventType, list[Callable]] = {}
        self._history: deque[LabEvent] = deque(maxlen=max_history_size)

    def subscribe(self, event_type: LabEventType, callback: Callable) -> bool:
        """
        订阅事件

        Args:
            event_type: 事件类型
            callback: 同步或 async 回调，参数为 LabEvent

        Returns:
            bool: 重复订阅时返回 False
        """
        callbacks = self._subscribers.setdefault(event_type, [])
        if callback in callbacks:
            logger.warning(f"重复订阅 {event_type.value}: {_callback_name(callback)}")
            return False
        callbacks.append(callback)
        logger.debug(f"订阅 {event_type.value}: {_callback_name(callback)}")
        return True

    def unsubscribe(self, event_type: LabEventType, callback: Callable) -> bool:
        callbacks = self._subscribers.get(event_type, [])
        if callback not in callbacks:
            logger.warning(f"{event_type.value} 没有这个订阅: {_callback_name(callback)}")
            return False
        callbacks.remove(callback)
        return True

    def publish_nowait(self, event: LabEvent) -> bool:
        """
        立即分发给同步订阅者，async 订阅者被跳过

        Returns:
            bool: 全部回调是否成功
        """
        self._history.append(event)
        ok = True
        for callback in list(self._subscribers.get(event.event_type, [])):
            if asyncio.iscoroutinefunction(callback):
                logger.debug(f"同步发布跳过 async 回调 {_callback_name(callback)}")
                continue
            try:
                callback(event)
            except Exception as e:
                ok = False
                logger.error(f"回调 {_callback_name(callback)} 处理 {event.event_type.value} 失败: {e}", exc_info=True)
        return ok

    async def publish(self, event: LabEvent) -> bool:
        """
        并发调用全部订阅者

        Returns:
            bool: 全部回调是否成功
        """
        self._history.append(event)
        return await self._dispatch(event)

    async def _dispatch(self, event: LabEvent) -> bool:
        callbacks = list(self._subscribers.get(event.event_type, []))
        if not callbacks:
            return True
        results = await asyncio.gather(
            *(
                callback(event) if asyncio.iscoroutinefunction(callback) else asyncio.to_thread(callback, event)
                for callback in callbacks
            ),
            return_exceptions=True,
        )
        ok = True
        for callback, result in zip(callbacks, results):
            if isinstance(result, Exception):
                ok = False
                logger.error(f"回调 {_callback_name(callback)} 处理 {event.event_type.value} 失败: {result}")
        return ok

    def get_event_history(self, event_type: LabEventType | None = None, limit: int = 100) -> list[LabEvent]:
        events = [e for e in self._history if event_type is None or e.event_type == event_type]
        return events[-limit:]

    def get_subscriber_count(self, event_type: LabEventType) -> int:
        return len(self._subscribers.get(event_type, []))

    def clear_history(self):
        self._history.clear()


_global_event_bus: LabEventBus | None = None


def get_event_bus() -> LabEventBus:
    """进程内共享的事件总线"""
    global _global_event_bus
    if _global_event_bus is None:
        _global_event_bus = LabEventBus()
    return _global_event_bus
