"""基础设施模块"""
from .events import LabEventBus, LabEvent, LabEventType, get_event_bus
from .outputs import OutputWriter, render_csv, render_json, render_plot_script, sha256_bytes

__all__ = ['LabEventBus', 'LabEvent', 'LabEventType', 'get_event_bus', 'OutputWriter', 'render_csv', 'render_json', 'render_plot_script', 'sha256_bytes']
