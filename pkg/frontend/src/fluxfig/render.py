"""Figure rendering for fluxlab result files.

Five figure kinds, one per CLI artifact family:

========  ==================================  ===========================
kind      input file(s)                       content
========  ==================================  ===========================
sweep     coherence sweep.csv                 lifetimes vs swept energy
chi_scan  chi_scan.csv                        dispersive shifts vs omega_r
phase_plane  readout trajectories.csv         cavity alpha-plane orbits
gate_errors  gate_result.json (one or more)   error budget vs detuning
pulse     cz pulse.csv                        drive envelope vs time
========  ==================================  ===========================

Rendering is pure: matplotlib runs on the Agg backend with pinned fonts,
DPI and metadata, so identical inputs produce byte-identical images.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (needs the backend pinned)

from .tables import SchemaError, read_json_result, read_table

__all__ = ["FigureSpec", "render"]

KINDS = ("sweep", "chi_scan", "phase_plane", "gate_errors", "pulse")

SWEEP_COLUMNS = ["vary", "omega_ghz", "t1_ns", "tphi_ns", "t2_ns"]
CHI_COLUMNS = ["omega_r", "chi_g", "chi_e", "chi_f", "contrast", "mismatch"]
TRAJ_COLUMNS = ["t_ns", "state_label", "re_alpha", "im_alpha"]
PULSE_COLUMNS = ["t_ns", "re_amp_ghz", "im_amp_ghz"]
GATE_KEYS = ("kind", "t_gate_ns", "fidelity", "p_erasure", "p_other",
             "params")

_RC = {
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "figure.figsize": (6.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "fluxlab-figures",
    "svg.fonttype": "path",
}


@dataclasses.dataclass(frozen=True)
class FigureSpec:
    """One figure request: input files, kind, axis options, output path."""

    kind: str
    inputs: tuple[str, ...]
    output: str
    title: str | None = None
    log_y: bool | None = None
    dpi: int = 120

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(
                f"kind: expected one of {KINDS}, got {self.kind!r}"
            )
        if not self.inputs:
            raise SchemaError("inputs: at least one input file is required")
        if self.dpi <= 0:
            raise SchemaError(f"dpi: must be positive, got {self.dpi}")
        suffix = Path(self.output).suffix.lower()
        if suffix not in (".png", ".svg"):
            raise SchemaError(
                f"output: expected a .png or .svg path, got {self.output!r}"
            )

    @classmethod
    def from_json(cls, path: str | Path) -> "FigureSpec":
        path = Path(path)
        if not path.exists():
            raise SchemaError(f"{path}: spec file does not exist")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise SchemaError(f"{path}: top level must be an object")
        known = {"kind", "inputs", "output", "title", "log_y", "dpi"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise SchemaError(f"{path}: {unknown[0]}: unknown key")
        for key in ("kind", "inputs", "output"):
            if key not in raw:
                raise SchemaError(f"{path}: {key}: required key missing")
        inputs = raw["inputs"]
        if isinstance(inputs, str):
            inputs = [inputs]
        if not isinstance(inputs, list) or not all(
            isinstance(v, str) for v in inputs
        ):
            raise SchemaError(f"{path}: inputs: expected a list of paths")
        # inputs are resolved relative to the spec file's directory
        base = path.parent
        return cls(
            kind=raw["kind"],
            inputs=tuple(str((base / p)) for p in inputs),
            output=str(base / raw["output"]),
            title=raw.get("title"),
            log_y=raw.get("log_y"),
            dpi=int(raw.get("dpi", 120)),
        )


def _finish(fig, ax, spec: FigureSpec, info: dict) -> dict:
    if spec.title:
        ax.set_title(spec.title)
    if ax.has_data() and ax.get_legend_handles_labels()[0]:
        ax.legend(loc="best")
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".svg":
        metadata = {"Date": None, "Creator": "fluxlab-plot"}
    else:
        metadata = {"Software": "fluxlab-plot"}
    fig.savefig(out, dpi=spec.dpi, metadata=metadata)
    plt.close(fig)
    info["output"] = str(out)
    return info


def _render_sweep(spec: FigureSpec, fig, ax) -> dict:
    table = read_table(spec.inputs[0], SWEEP_COLUMNS, free_first_column=True)
    x_name = table.columns[0]
    ax.set_xlabel(f"{x_name} (GHz)")
    ax.set_ylabel("time (ns)")
    if len(table):
        x = table.numeric(x_name)
        for col, label in (("t1_ns", "$T_1$"), ("tphi_ns", r"$T_\phi$"),
                           ("t2_ns", "$T_2$")):
            ax.plot(x, table.numeric(col), marker="o", label=label)
        if spec.log_y is not False:
            ax.set_yscale("log")
    return {"n_rows": len(table), "x_name": x_name}


def _render_chi_scan(spec: FigureSpec, fig, ax) -> dict:
    table = read_table(spec.inputs[0], CHI_COLUMNS)
    x = table.numeric("omega_r")
    ax.set_xlabel(r"$\omega_r/2\pi$ (GHz)")
    ax.set_ylabel(r"$|\chi|$ (GHz)")
    for col, label in (("chi_g", r"$\chi_g$"), ("chi_e", r"$\chi_e$"),
                       ("chi_f", r"$\chi_f$")):
        ax.plot(x, np.abs(table.numeric(col)), label=label)
    ax.plot(x, np.abs(table.numeric("mismatch")), "--", color="black",
            label=r"$|\chi_g-\chi_f|$")
    if spec.log_y is not False and len(table):
        ax.set_yscale("log")
    return {"n_rows": len(table)}


def _render_phase_plane(spec: FigureSpec, fig, ax) -> dict:
    table = read_table(spec.inputs[0], TRAJ_COLUMNS)
    labels = table.strings("state_label")
    re = table.numeric("re_alpha")
    im = table.numeric("im_alpha")
    ax.set_xlabel(r"Re $\alpha$")
    ax.set_ylabel(r"Im $\alpha$")
    ax.set_aspect("equal", adjustable="datalim")
    centers: dict[str, tuple[float, float]] = {}
    for label in sorted(set(labels)):
        sel = np.array([lb == label for lb in labels])
        ax.plot(re[sel], im[sel], label=f"state {label}")
        # annotate the trajectory endpoint: the assignment pointer state
        cx, cy = float(re[sel][-1]), float(im[sel][-1])
        centers[label] = (cx, cy)
        ax.plot([cx], [cy], marker="x", markersize=8, color="black")
        ax.annotate(label, (cx, cy), textcoords="offset points",
                    xytext=(4, 4))
    return {"centers": centers, "n_states": len(centers)}


def _render_gate_errors(spec: FigureSpec, fig, ax) -> dict:
    results = [read_json_result(p, GATE_KEYS) for p in spec.inputs]
    detunings = []
    for path, res in zip(spec.inputs, results):
        params = res["params"]
        det = params.get("delta_ghz", params.get("delta2_ghz"))
        if det is None:
            raise SchemaError(
                f"{path}: params has no delta_ghz/delta2_ghz entry"
            )
        detunings.append(float(det))
    order = np.argsort(detunings)
    x = np.asarray(detunings)[order]
    series = {
        "gate error": np.array(
            [1.0 - results[i]["fidelity"] for i in order]),
        "$p_{erasure}$": np.array(
            [results[i]["p_erasure"] for i in order]),
        "$p_{other}$": np.array([results[i]["p_other"] for i in order]),
    }
    for label, y in series.items():
        ax.plot(x, np.maximum(y, 1e-16), marker="o", label=label)
    ax.set_xlabel(r"detuning (GHz)")
    ax.set_ylabel("probability")
    if spec.log_y is not False:
        ax.set_yscale("log")
    return {"n_points": len(x)}


def _render_pulse(spec: FigureSpec, fig, ax) -> dict:
    table = read_table(spec.inputs[0], PULSE_COLUMNS)
    t = table.numeric("t_ns")
    ax.plot(t, table.numeric("re_amp_ghz"), label="Re")
    im = table.numeric("im_amp_ghz")
    if np.any(np.abs(im) > 0):
        ax.plot(t, im, label="Im")
    ax.set_xlabel("t (ns)")
    ax.set_ylabel("amplitude (GHz)")
    return {"n_rows": len(table)}


_RENDERERS = {
    "sweep": _render_sweep,
    "chi_scan": _render_chi_scan,
    "phase_plane": _render_phase_plane,
    "gate_errors": _render_gate_errors,
    "pulse": _render_pulse,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns a small info dict (row counts and, for
    phase_plane, the annotated per-state centers)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        info = _RENDERERS[spec.kind](spec, fig, ax)
        return _finish(fig, ax, spec, info)
