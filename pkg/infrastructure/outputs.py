"""
输出写出模块
CSV（带表头）、JSON（UTF-8、键排序、两空格缩进）与绘图脚本；
每个文件写出后计算 sha256 并发布 file.written 事件
"""

import csv
import hashlib
import io
import json
import logging
import threading
from pathlib import Path
from typing import Any

from core.models import OutputRecord, RunManifest
from utils.formatters import format_value

from .events import LabEvent, LabEventBus, LabEventType, get_event_bus

logger: logging.Logger = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def render_csv(columns: list[str], rows: list[list[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"CSV 行宽 {len(row)} 与表头 {len(columns)} 不一致")
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def render_json(payload: dict[str, Any]) -> str:
    return json.dumps(format_value(payload), ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def render_plot_script(csv_name: str, x: str, ys: list[str], title: str, log_y: bool = False) -> str:
    """读取 CSV 的 matplotlib 命令文本，实验室本身不执行"""
    lines = [
        "# 由实验室生成的绘图脚本，读取同目录下的 CSV",
        "import csv",
        "import matplotlib.pyplot as plt",
        "",
        f"with open({csv_name!r}, encoding='utf-8') as fh:",
        "    rows = list(csv.DictReader(fh))",
        "",
        f"x = [float(r[{x!r}]) for r in rows]",
        "fig, ax = plt.subplots()",
    ]
    for column in ys:
        lines.append(f"ax.plot(x, [float(r[{column!r}]) for r in rows], label={column!r})")
    if log_y:
        lines.append("ax.set_yscale('log')")
    lines += [
        f"ax.set_xlabel({x!r})",
        f"ax.set_title({title!r})",
        "ax.legend()",
        f"fig.savefig({Path(csv_name).stem + '.png'!r})",
        "",
    ]
    return "\n".join(lines)


class OutputWriter:
    """
    单个实验的输出写出器
    写入串行化；清单只列出本写出器写过的文件
    """

    def __init__(self, out_dir: str | Path, experiment: str, bus: LabEventBus | None = None):
        self.out_dir = Path(out_dir)
        self.experiment = experiment
        self.bus = bus or get_event_bus()
        self.records: list[OutputRecord] = []
        self._lock = threading.Lock()

    def _write(self, name: str, text: str, kind: str, columns: list[str] | None, description: str) -> OutputRecord:
        data = text.encode("utf-8")
        path = self.out_dir / name
        with self._lock:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            record = OutputRecord(
                path=name,
                sha256=sha256_bytes(data),
                kind=kind,
                columns=list(columns or []),
                description=description,
            )
            self.records.append(record)
        logger.info(f"写出文件: {path} ({kind}, {len(data)} 字节)")
        self.bus.publish_nowait(
            LabEvent(LabEventType.FILE_WRITTEN, experiment=self.experiment, data=record.to_dict())
        )
        return record

    def write_csv(self, name: str, columns: list[str], rows: list[list[Any]], description: str = "") -> OutputRecord:
        return self._write(name, render_csv(columns, rows), "csv", columns, description)

    def write_json(self, name: str, payload: dict[str, Any], description: str = "") -> OutputRecord:
        return self._write(name, render_json(payload), "json", None, description)

    def write_plot_script(
        self, csv_name: str, x: str, ys: list[str], title: str, log_y: bool = False
    ) -> OutputRecord:
        name = f"plot_{Path(csv_name).stem}.py"
        return self._write(name, render_plot_script(csv_name, x, ys, title, log_y), "plot", None, f"绘制 {csv_name}")

    def write_manifest(self, manifest: RunManifest) -> Path:
        """写出运行清单；清单本身不计入 outputs，outputs 由 file.written 订阅者填写"""
        path = self.out_dir / MANIFEST_NAME
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(render_json(manifest.to_dict()), encoding="utf-8")
        logger.info(f"运行清单已写出: {path}")
        return path
