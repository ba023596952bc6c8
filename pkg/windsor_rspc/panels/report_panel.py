"""
Terminal summaries of operator results

Panels draw into a ``Layout`` the way add-on panels draw into their UI
layout: labels, property rows, boxes and separators. ``Layout.render``
turns the drawn items into text.
"""

from typing import Any, ClassVar, Dict, List, Optional, Sequence, Type, Union

import numpy as np

from ..operators.registry import Context


class Layout:
    def __init__(self, indent: int = 0):
        self.indent = indent
        self.lines: List[Union[str, "Layout"]] = []

    def label(self, text: str = ""):
        self.lines.append(" " * self.indent + text)

    def prop(self, name: str, value: Any, unit: str = ""):
        if isinstance(value, (float, np.floating)):
            shown = f"{value:.4g}"
        elif isinstance(value, np.ndarray):
            shown = ", ".join(f"{v:.4g}" for v in value)
        else:
            shown = str(value)
        self.label(f"{name + ':':<28}{shown}{' ' + unit if unit else ''}")

    def row(self, cells: Sequence[Any], width: int = 12):
        text = "".join(
            f"{c:>{width}.4g}" if isinstance(c, float) else f"{c!s:>{width}}"
            for c in cells
        )
        self.label(text)

    def separator(self):
        self.label("")

    def box(self, title: str) -> "Layout":
        self.label(f"[{title}]")
        child = Layout(self.indent + 2)
        self.lines.append(child)
        return child

    def render(self) -> str:
        return "\n".join(
            line.render() if isinstance(line, Layout) else line for line in self.lines
        )


class Panel:
    bl_label: ClassVar[str] = ""
    bl_idname: ClassVar[str] = ""
    result_key: ClassVar[str] = ""

    def __init__(self):
        self.layout = Layout()

    @classmethod
    def poll(cls, context: Context) -> bool:
        return cls.result_key in context.results

    def draw(self, context: Context):
        raise NotImplementedError


class RunPanel(Panel):
    bl_label = "Scenario Run"
    bl_idname = "RSPC_PT_run"
    result_key = "rspc.run"

    def draw(self, context: Context):
        record = context.results[self.result_key]
        layout = self.layout
        box = layout.box(self.bl_label)
        box.prop("Scenario", record.scenario)
        box.prop("Control", "on" if record.control else "off")
        box.prop("Seed", record.seed)
        box.prop("Samples", len(record))
        if record.engaged_at is not None:
            box.prop("Engaged at", record.engaged_at * record.sample_period, "s")
        if len(record):
            box.prop("Mean outputs", np.mean(record.y, axis=0))
            box.prop("cb analog mean", float(np.mean(record.cb)))
        if record.fault:
            box.prop("Fault", record.fault)


class ComparePanel(Panel):
    bl_label = "Controlled vs Uncontrolled"
    bl_idname = "RSPC_PT_compare"
    result_key = "rspc.compare"

    def draw(self, context: Context):
        metrics = context.results[self.result_key]
        layout = self.layout
        box = layout.box(self.bl_label)
        box.row(["", "y1", "y2", "y3"])
        box.row(["rms on"] + [float(v) for v in metrics.tracking_rms_on])
        box.row(["rms off"] + [float(v) for v in metrics.tracking_rms_off])
        layout.separator()
        cb = layout.box("cb analog")
        cb.prop("Mean on / off", np.array([metrics.cb_mean_on, metrics.cb_mean_off]))
        cb.prop("Std on / off", np.array([metrics.cb_std_on, metrics.cb_std_off]))
        cb.prop(
            "Sliding range on / off",
            np.array([metrics.sliding_ptp_on, metrics.sliding_ptp_off]),
        )
        cb.prop("Improvement", metrics.improvement_pct, "%")
        layout.prop("Controller step mean", metrics.step_time_mean_ms, "ms")
        layout.prop("Controller step max", metrics.step_time_max_ms, "ms")


class SweepPanel(Panel):
    bl_label = "Yaw Sweep"
    bl_idname = "RSPC_PT_sweep"
    result_key = "rspc.sweep"

    def draw(self, context: Context):
        box = self.layout.box(self.bl_label)
        box.row(["beta", "cb on", "std on", "cb off", "std off"])
        for r in context.results[self.result_key]:
            box.row([r.beta, r.cb_mean_on, r.cb_std_on, r.cb_mean_off, r.cb_std_off])


class BenchPanel(Panel):
    bl_label = "Benchmark"
    bl_idname = "RSPC_PT_bench"

    @classmethod
    def poll(cls, context: Context) -> bool:
        return any(key.startswith("rspc.bench") for key in context.results)

    def draw(self, context: Context):
        box = self.layout.box(self.bl_label)
        estimator = context.results.get("rspc.bench_estimator")
        if estimator is not None:
            box.prop("Seeds", estimator.seeds)
            box.prop("Naive Markov error", estimator.biased_error)
            box.prop("Compensated Markov error", estimator.unbiased_error)
            box.prop("Ratio", estimator.ratio)
        qp = context.results.get("rspc.bench_qp")
        if qp is not None:
            box.prop("Converged", f"{qp.converged}/{qp.problems}")
            box.prop("Max violation", qp.max_violation)
            box.prop("Mean sweeps", qp.mean_iterations)


_PANELS: Dict[str, Type[Panel]] = {}


def draw_panels(context: Context) -> Optional[str]:
    """Render every registered panel that has something to show"""
    texts = []
    for cls in _PANELS.values():
        if cls.poll(context):
            panel = cls()
            panel.draw(context)
            texts.append(panel.layout.render())
    return "\n\n".join(texts) if texts else None


classes = (RunPanel, ComparePanel, SweepPanel, BenchPanel)


def register():
    for cls in classes:
        _PANELS[cls.bl_idname] = cls


def unregister():
    for cls in classes:
        _PANELS.pop(cls.bl_idname, None)
