"""Render figure specs to image files with matplotlib (Agg, deterministic)."""

from __future__ import annotations

import os
import warnings

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .runio import RunDataError, read_intensities, read_populations
from .spec import FigureSpec

_LEVEL_STYLES = ("-", "--", ":", "-.")
_PNG_METADATA = {"Software": "figs"}


def _save(fig, spec: FigureSpec) -> str:
    os.makedirs(os.path.dirname(spec.out) or ".", exist_ok=True)
    kwargs = {"dpi": spec.dpi}
    if spec.out.lower().endswith(".png"):
        kwargs["metadata"] = _PNG_METADATA
    fig.savefig(spec.out, **kwargs)
    plt.close(fig)
    return spec.out


def plot_intensity(spec: FigureSpec) -> str:
    """One panel per snapshot time, optional zoom insets on the last panel."""
    loaded = [(entry, read_intensities(entry.path)) for entry in spec.series]
    tags = sorted(loaded[0][1].keys(), key=lambda s: float(s))
    if not tags:
        raise RunDataError("first series has no intensity snapshots")
    for entry, data in loaded:
        if sorted(data.keys()) != sorted(loaded[0][1].keys()):
            raise RunDataError(f"series {entry.name!r}: snapshot times differ")
    r_ref = loaded[0][1][tags[0]][0]
    for entry, data in loaded:
        for tag in tags:
            if not np.array_equal(data[tag][0], r_ref):
                raise RunDataError(f"series {entry.name!r}: r grid differs")

    n = len(tags)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), squeeze=False)
    for col, tag in enumerate(tags):
        ax = axes[0][col]
        for entry, data in loaded:
            r, I, _ = data[tag]
            ax.plot(r, I, entry.style, label=entry.label, linewidth=1.0)
        ax.set_title(f"t = {tag} a.u.")
        ax.set_xlabel("r (bohr)")
        if col == 0:
            ax.set_ylabel("intensity (a.u.)")
    axes[0][0].legend(loc="upper right", fontsize=8)
    for k, (lo, hi) in enumerate(spec.zooms):
        ax = axes[0][-1]
        inset = ax.inset_axes([0.08 + 0.46 * (k % 2), 0.55, 0.38, 0.38])
        sel = (r_ref >= lo) & (r_ref <= hi)
        for entry, data in loaded:
            r, I, _ = data[tags[-1]]
            inset.plot(r[sel], I[sel], entry.style, linewidth=0.9)
        inset.tick_params(labelsize=6)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return _save(fig, spec)


def plot_populations(spec: FigureSpec) -> str:
    """Population time series, one line style per level per method."""
    loaded = [(entry, *read_populations(entry.path)) for entry in spec.series]
    t_ref = loaded[0][1]
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    for entry, t, pops, _ in loaded:
        if len(t) != len(t_ref) or not np.array_equal(t, t_ref):
            if spec.resample == "error":
                raise RunDataError(f"series {entry.name!r}: time grid differs "
                                   "(set resample = warn to interpolate)")
            warnings.warn(f"series {entry.name!r}: resampling onto the "
                          "reference time grid")
            pops = np.stack([np.interp(t_ref, t, pops[:, k])
                             for k in range(pops.shape[1])], axis=1)
        color = entry.style[0] if entry.style and entry.style[0].isalpha() else None
        for k in range(pops.shape[1]):
            style = _LEVEL_STYLES[k % len(_LEVEL_STYLES)]
            ax.plot(t_ref, pops[:, k], style, color=color,
                    label=f"{entry.label} p{k + 1}" if k < 2 else None,
                    linewidth=1.0)
    ax.set_xlabel("t (a.u.)")
    ax.set_ylabel("population")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="center right", fontsize=8)
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    return _save(fig, spec)


def render(spec: FigureSpec) -> str:
    if spec.kind == "intensity":
        return plot_intensity(spec)
    return plot_populations(spec)
