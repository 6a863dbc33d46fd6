"""Figure specs: small INI files that say which runs to draw and how.

Example
-------
    [figure]
    kind = intensity
    out = fig3.png
    zooms = 10000:13000, 11700:11900
    title = field intensity

    [series.exact]
    path = runs/exact
    label = exact
    style = k--

    [series.mtef]
    path = runs/mtef
    label = MTEF
    style = r-

``kind`` is ``intensity`` or ``populations``.  For populations,
``resample = warn`` interpolates series onto the first series' time grid
(with a warning) instead of failing on mismatched grids.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field


class FigureSpecError(ValueError):
    pass


@dataclass
class SeriesEntry:
    name: str
    path: str
    label: str
    style: str = "-"


@dataclass
class FigureSpec:
    kind: str
    out: str
    series: list
    title: str = ""
    zooms: tuple = ()          # (r_min, r_max) windows, intensity only
    resample: str = "error"    # populations grid mismatch policy
    dpi: int = 150

    def validate(self):
        if self.kind not in ("intensity", "populations"):
            raise FigureSpecError(f"figure.kind: unknown kind {self.kind!r}")
        if not self.series:
            raise FigureSpecError("figure spec lists no series")
        if self.resample not in ("error", "warn"):
            raise FigureSpecError("figure.resample: must be 'error' or 'warn'")
        for entry in self.series:
            if not os.path.isdir(entry.path):
                raise FigureSpecError(f"series.{entry.name}: no run directory "
                                      f"{entry.path!r}")


def parse_figure_spec(path: str) -> FigureSpec:
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path):
        raise FigureSpecError(f"figure spec not found: {path}")
    if "figure" not in parser:
        raise FigureSpecError("figure: section missing")
    fig = parser["figure"]
    kind = fig.get("kind", "").strip()
    out = fig.get("out", "").strip()
    if not out:
        raise FigureSpecError("figure.out: required")
    zooms = []
    for chunk in fig.get("zooms", "").split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            lo, hi = (float(v) for v in chunk.split(":"))
        except ValueError:
            raise FigureSpecError(f"figure.zooms: cannot parse {chunk!r}") from None
        zooms.append((lo, hi))
    series = []
    base = os.path.dirname(os.path.abspath(path))
    for section in parser.sections():
        if not section.startswith("series."):
            if section != "figure":
                raise FigureSpecError(f"unknown section {section!r}")
            continue
        name = section[len("series."):]
        body = parser[section]
        run_path = body.get("path", "").strip()
        if not run_path:
            raise FigureSpecError(f"{section}.path: required")
        if not os.path.isabs(run_path):
            run_path = os.path.join(base, run_path)
        series.append(SeriesEntry(name=name, path=run_path,
                                  label=body.get("label", name).strip(),
                                  style=body.get("style", "-").strip()))
    out_path = out if os.path.isabs(out) else os.path.join(base, out)
    spec = FigureSpec(kind=kind, out=out_path, series=series,
                      title=fig.get("title", "").strip(),
                      zooms=tuple(zooms),
                      resample=fig.get("resample", "error").strip(),
                      dpi=fig.getint("dpi", 150))
    spec.validate()
    return spec
