"""Figure rendering: convergence curves from benchmark traces.

Three figure kinds: f-gap vs iteration, f-gap vs cumulative runtime, and the
extragradient on/off comparison.  Each solver label becomes one curve: the
median over seeds, with a min/max band across seeds.  Rendering is pure with
respect to its inputs and deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402 - backend must be pinned first
import numpy as np  # noqa: E402

from .traces import TraceSet, load_traces  # noqa: E402

KINDS = ("iterations", "runtime", "eg_comparison")

_DISPLAY_FLOOR = 1e-16


@dataclass(frozen=True)
class PlotSpec:
    manifest: str
    kind: str
    out: str
    log_scale: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")


@dataclass
class RenderResult:
    path: Path
    n_curves: int
    curve_labels: list


def median_band(traces, x_mode="iterations"):
    """Median curve with min/max envelope across seeds, grouped by iteration.

    Seeds may stop at different lengths; each iteration index aggregates the
    seeds that reached it.
    """
    series = []
    for tr in traces:
        y = np.asarray(tr.columns["f_gap"], dtype=float)
        if x_mode == "runtime":
            x = np.cumsum(np.asarray(tr.columns["wall_time_ms"], dtype=float)) / 1e3
        else:
            x = np.asarray(tr.columns["t"], dtype=float)
        series.append((x, y))
    horizon = max(len(y) for _, y in series)
    xs, med, lo, hi = [], [], [], []
    for i in range(horizon):
        ys = [y[i] for _, y in series if len(y) > i]
        xvals = [x[i] for x, y in series if len(y) > i]
        xs.append(float(np.median(xvals)))
        med.append(float(np.median(ys)))
        lo.append(min(ys))
        hi.append(max(ys))
    return np.asarray(xs), np.asarray(med), np.asarray(lo), np.asarray(hi)


def _display(y, log_scale):
    if not log_scale:
        return y
    return np.maximum(y, _DISPLAY_FLOOR)


def _curve_groups(trace_set: TraceSet, kind: str):
    """(curve label, traces) pairs for the requested figure kind."""
    if kind in ("iterations", "runtime"):
        return [(label, trace_set.by_label(label)) for label in trace_set.labels()]
    eg_family = [tr for tr in trace_set.traces if tr.solver in ("snpe", "npe")]
    with_eg = [tr for tr in eg_family if not tr.disable_extragradient]
    without_eg = [tr for tr in eg_family if tr.disable_extragradient]
    if not with_eg or not without_eg:
        missing = ("disable_extragradient=false" if not with_eg
                   else "disable_extragradient=true")
        raise ValueError(
            f"eg_comparison needs both extragradient variants; no runs with {missing}")
    groups = []
    for variant, subset in (("extragradient on", with_eg),
                            ("extragradient off", without_eg)):
        for label in dict.fromkeys(tr.label for tr in subset):
            members = [tr for tr in subset if tr.label == label]
            groups.append((f"{label} ({variant})", members))
    return groups


def render(spec: PlotSpec) -> RenderResult:
    """Build one figure and write it to spec.out; returns what was drawn."""
    trace_set = load_traces(spec.manifest)
    groups = _curve_groups(trace_set, spec.kind)
    x_mode = "runtime" if spec.kind == "runtime" else "iterations"

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    labels = []
    for label, traces in groups:
        x, med, lo, hi = median_band(traces, x_mode=x_mode)
        ax.plot(x, _display(med, spec.log_scale), label=label, linewidth=1.6)
        if len(traces) > 1:
            ax.fill_between(x, _display(lo, spec.log_scale),
                            _display(hi, spec.log_scale), alpha=0.18)
        labels.append(label)

    if spec.log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("runtime (s)" if x_mode == "runtime" else "iteration")
    ax.set_ylabel("objective gap")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return RenderResult(path=out, n_curves=len(labels), curve_labels=labels)
