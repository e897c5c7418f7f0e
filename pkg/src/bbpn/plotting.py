"""Figures for experiment outputs, rendered off-screen with the Agg backend."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .posterior import credible_band

BAND_COLOR = "tab:red"
TRUTH_COLOR = "tab:blue"
METHOD_STYLE = {
    "finest_run": dict(color="tab:green", marker="s"),
    "richardson": dict(color="tab:red", marker="^"),
    "bulirsch_stoer": dict(color="goldenrod", marker="v"),
    "bbpn": dict(color="tab:blue", marker="o"),
}


def _figure(width=6.0, height=3.6):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _save(fig, path):
    fig.tight_layout()
    # no metadata, so repeated runs give identical bytes
    fig.savefig(path, format="png", metadata={"Software": None})
    return Path(path)


def _scalar_limit(ax, result, stage, width):
    data = stage.data
    ax.plot(data.h, data.q, "o", color="k", ms=4, label="solver output")
    post = stage.posterior
    lo, hi = credible_band(post, width)
    ax.errorbar([0.0], post.mean, yerr=[[post.mean[0] - lo[0]], [hi[0] - post.mean[0]]],
                fmt="o", color=BAND_COLOR, capsize=4, label=f"limit, $\\pm{width:g}\\sigma$")
    if stage.truth is not None:
        ax.plot([0.0], stage.truth, "*", color=TRUTH_COLOR, ms=10, label="truth")
    ax.set_xlabel("h")
    ax.set_ylabel("q")


def _indexed_limit(ax, result, stage, width):
    query = result.query
    x = query[:, -1] if query.shape[1] else np.arange(len(query))
    order = np.argsort(x, kind="stable")
    post = stage.posterior
    lo, hi = credible_band(post, width)
    blocks = np.unique(query[:, 0]) if query.shape[1] > 1 else [None]
    for b in blocks:
        sel = order if b is None else order[query[order, 0] == b]
        ax.fill_between(x[sel], lo[sel], hi[sel], color=BAND_COLOR, alpha=0.25, lw=0)
        ax.plot(x[sel], post.mean[sel], "-", color=BAND_COLOR, lw=1)
    data = stage.data
    for h in data.resolutions:
        t, q = data.at_resolution(h)
        ax.plot(t[:, -1], q, "o", mfc="none", color="k", ms=3, alpha=0.6)
    if stage.truth is not None:
        ax.plot(x[order], stage.truth[order], "*", color=TRUTH_COLOR, ms=6, label="truth")
    ax.set_xlabel(f"t_{query.shape[1]}")
    ax.set_ylabel("q")


def render_experiment(result, out_dir):
    """Limit-posterior figure for the final stage, plus a convergence figure
    when the study has more than one stage and a known truth."""
    out_dir = Path(out_dir)
    name = result.config.name
    stage = result.final
    written = []
    if stage is not None and stage.posterior is not None:
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        width = result.config.band_sigmas
        if result.query.shape[1] == 0:
            _scalar_limit(ax, result, stage, width)
        else:
            _indexed_limit(ax, result, stage, width)
        ax.set_title(f"{name}: limit posterior (h_min = {stage.h_finest:.4g})", fontsize=9)
        ax.legend(fontsize=7, loc="best")
        written.append(_save(fig, out_dir / f"{name}_limit.png"))

    scored = [s for s in result.stages if s.truth is not None and s.posterior is not None]
    if len(scored) > 1:
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        h = np.array([s.h_finest for s in scored])
        series = {"finest_run": [s.finest for s in scored],
                  "bbpn": [s.posterior.mean for s in scored]}
        for key in ("richardson", "bulirsch_stoer"):
            series[key] = [s.baselines.get(key) for s in scored]
        for method, ests in series.items():
            if any(e is None for e in ests):
                continue
            W = np.array([np.linalg.norm(e - s.truth) for e, s in zip(ests, scored)])
            ok = np.isfinite(W) & (W > 0)
            if ok.any():
                ax.loglog(h[ok], W[ok], label=method, **METHOD_STYLE[method])
        ax.set_xlabel("finest h in dataset")
        ax.set_ylabel("W")
        ax.legend(fontsize=7)
        written.append(_save(fig, out_dir / f"{name}_convergence.png"))
    return written


def render_calibration(rows, config, out_dir):
    """Squared surprise per repetition against the central chi-squared band."""
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    r = np.array([row["repetition"] for row in rows])
    s2 = np.array([row["S2"] for row in rows])
    inside = np.array([row["inside"] for row in rows], dtype=bool)
    ax.axhspan(rows[0]["band_lower"], rows[0]["band_upper"], color="0.85", lw=0,
               label=f"central {100 * config.central_mass:g}%")
    ax.semilogy(r[inside], s2[inside], "o", color="tab:blue", label="inside")
    ax.semilogy(r[~inside], s2[~inside], "x", color="tab:red", label="outside")
    ax.set_xlabel("repetition")
    ax.set_ylabel("$S^2$")
    ax.set_title(f"{config.name}: {int(inside.sum())}/{len(rows)} inside", fontsize=9)
    ax.legend(fontsize=7)
    return _save(fig, Path(out_dir) / f"{config.name}_calibration.png")
