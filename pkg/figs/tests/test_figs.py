import os
import subprocess
import sys

import numpy as np
import pytest

from figs.cli import main
from figs.render import plot_intensity, plot_populations, render
from figs.runio import RunDataError, read_intensities, read_populations
from figs.spec import FigureSpecError, parse_figure_spec


def fmt(x):
    return f"{float(x):.17g}"


def write_run_dir(root, name, times, pops, r, intensities, complete=True):
    """Fabricate a run directory conforming to the harness file contract."""
    d = root / name
    d.mkdir(parents=True, exist_ok=True)
    K = pops.shape[1]
    cols = ["t"] + [f"p_{k+1}" for k in range(K)] + [f"se_{k+1}" for k in range(K)]
    with open(d / "populations.tsv", "w") as fh:
        fh.write("# " + "\t".join(cols) + "\n")
        for i, t in enumerate(times):
            row = [t, *pops[i], *([0.0] * K)]
            fh.write("\t".join(fmt(v) for v in row) + "\n")
    for tag, I in intensities.items():
        with open(d / f"intensity_t{tag}.tsv", "w") as fh:
            fh.write("# r\tI\tse_I\n")
            for rv, iv in zip(r, I):
                fh.write("\t".join(fmt(v) for v in (rv, iv, 0.0)) + "\n")
    if complete:
        with open(d / "manifest.txt", "w") as fh:
            fh.write("status = complete\nversion = test\n")
    return d


@pytest.fixture
def demo_runs(tmp_path):
    times = np.linspace(0.0, 10.0, 21)
    r = np.linspace(0.0, 100.0, 64)
    flat = {"5": np.zeros_like(r), "10": np.zeros_like(r)}
    bump = {"5": np.exp(-((r - 40) / 5.0) ** 2),
            "10": np.exp(-((r - 70) / 5.0) ** 2)}
    pops_a = np.stack([1 - np.exp(-times / 6), np.exp(-times / 6)], axis=1)
    pops_b = np.stack([1 - np.exp(-times / 9), np.exp(-times / 9)], axis=1)
    write_run_dir(tmp_path, "exact", times, pops_a, r, bump)
    write_run_dir(tmp_path, "vacuum", times, pops_b, r, flat)
    return tmp_path


def write_spec(tmp_path, text, name="fig.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


INTENSITY_SPEC = """
[figure]
kind = intensity
out = out/fig_intensity.png
zooms = 30:50
title = demo

[series.exact]
path = exact
label = exact
style = k--

[series.vacuum]
path = vacuum
label = vacuum
style = r-
"""

POPULATIONS_SPEC = """
[figure]
kind = populations
out = out/fig_pops.png

[series.exact]
path = exact
label = exact
style = k
"""


def test_runio_roundtrip(demo_runs):
    t, pops, se = read_populations(str(demo_runs / "exact"))
    assert pops.shape == (21, 2)
    assert np.all(se == 0.0)
    snaps = read_intensities(str(demo_runs / "exact"))
    assert sorted(snaps) == ["10", "5"]


def test_missing_manifest_rejected(demo_runs, tmp_path):
    times = np.linspace(0, 1, 3)
    pops = np.ones((3, 2)) * 0.5
    r = np.linspace(0, 1, 4)
    write_run_dir(tmp_path, "incomplete", times, pops, r, {}, complete=False)
    with pytest.raises(RunDataError):
        read_populations(str(tmp_path / "incomplete"))


def test_intensity_figure(demo_runs):
    spec = parse_figure_spec(write_spec(demo_runs, INTENSITY_SPEC))
    out = plot_intensity(spec)
    assert os.path.exists(out)
    assert os.path.getsize(out) > 1000


def test_vacuum_series_renders_flat_line(demo_runs):
    text = INTENSITY_SPEC.replace("[series.exact]\npath = exact\nlabel = exact\nstyle = k--\n\n", "")
    spec = parse_figure_spec(write_spec(demo_runs, text, "flat.ini"))
    out = plot_intensity(spec)
    assert os.path.exists(out)


def test_populations_figure(demo_runs):
    spec = parse_figure_spec(write_spec(demo_runs, POPULATIONS_SPEC, "pops.ini"))
    out = plot_populations(spec)
    assert os.path.exists(out)


def test_deterministic_regeneration(demo_runs):
    path = write_spec(demo_runs, INTENSITY_SPEC)
    spec = parse_figure_spec(path)
    out = plot_intensity(spec)
    with open(out, "rb") as fh:
        first = fh.read()
    out = plot_intensity(parse_figure_spec(path))
    with open(out, "rb") as fh:
        second = fh.read()
    assert first == second


def test_empty_spec_is_usage_error(tmp_path):
    p = write_spec(tmp_path, "[figure]\nkind = intensity\nout = x.png\n")
    with pytest.raises(FigureSpecError):
        parse_figure_spec(p)


def test_unknown_kind_rejected(demo_runs):
    text = INTENSITY_SPEC.replace("kind = intensity", "kind = hologram")
    with pytest.raises(FigureSpecError):
        parse_figure_spec(write_spec(demo_runs, text, "bad.ini"))


def test_population_grid_mismatch_policies(demo_runs):
    times = np.linspace(0.0, 10.0, 11)     # different grid
    pops = np.stack([times / 10.0, 1 - times / 10.0], axis=1)
    r = np.linspace(0.0, 100.0, 64)
    write_run_dir(demo_runs, "coarse", times, pops, r, {})
    text = POPULATIONS_SPEC + "\n[series.coarse]\npath = coarse\nlabel = coarse\n"
    spec = parse_figure_spec(write_spec(demo_runs, text, "mix.ini"))
    with pytest.raises(RunDataError):
        plot_populations(spec)
    text2 = text.replace("[figure]", "[figure]\nresample = warn")
    spec2 = parse_figure_spec(write_spec(demo_runs, text2, "mix2.ini"))
    with pytest.warns(UserWarning):
        out = plot_populations(spec2)
    assert os.path.exists(out)


def test_cli_single_command(demo_runs):
    path = write_spec(demo_runs, INTENSITY_SPEC, "cli.ini")
    assert main([path]) == 0
    assert main([str(demo_runs / "nonexistent.ini")]) == 2


def test_intensity_grid_mismatch_rejected(demo_runs):
    times = np.linspace(0.0, 10.0, 21)
    pops = np.ones((21, 2)) * 0.5
    r2 = np.linspace(0.0, 100.0, 32)
    write_run_dir(demo_runs, "othergrid", times, pops, r2,
                  {"5": np.zeros_like(r2), "10": np.zeros_like(r2)})
    text = INTENSITY_SPEC + "\n[series.other]\npath = othergrid\nlabel = o\n"
    spec = parse_figure_spec(write_spec(demo_runs, text, "gm.ini"))
    with pytest.raises(RunDataError):
        plot_intensity(spec)


def test_three_level_populations_styles(tmp_path):
    times = np.linspace(0.0, 8.0, 17)
    pops = np.stack([times / 8.0 * 0.5, 1 - times / 8.0, times / 8.0 * 0.5],
                    axis=1)
    r = np.linspace(0.0, 10.0, 8)
    write_run_dir(tmp_path, "triple", times, pops, r, {})
    text = """
[figure]
kind = populations
out = out/fig3lvl.png

[series.triple]
path = triple
label = exact
style = k
"""
    spec = parse_figure_spec(write_spec(tmp_path, text, "p3.ini"))
    out = plot_populations(spec)
    assert os.path.exists(out)
