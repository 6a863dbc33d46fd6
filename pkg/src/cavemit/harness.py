"""Run configuration, dispatch, columnar output, manifests, and comparison.

Config files are INI-style ``key = value`` sections ([model], [run], and an
optional section named after the method).  All physical values are atomic
units.  Unknown sections or keys are errors.

Data files are tab-separated UTF-8 text with one ``#``-prefixed header line
and 17-significant-digit floats; a run directory is valid only once its
manifest (written atomically, last) reports ``status = complete``.
"""

from __future__ import annotations

import configparser
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bbgky import CorrectionFlags, run_bbgky
from .ci import run_exact
from .errors import ConfigError, NumericalGuardError
from .fssh import run_fssh
from .mapping import run_fbts, run_lsc
from .model import build_paper_model, make_r_grid
from .mtef import run_mtef
from .observables import ObservableSeries

METHODS = ("exact", "mtef", "fssh", "lsc", "fbts", "bbgky")
TRAJECTORY_METHODS = ("mtef", "fssh", "lsc", "fbts")

_MODEL_KEYS = {"levels", "n_modes", "scale", "coupling", "rwa"}
_RUN_KEYS = {"method", "dt", "t_final", "snapshot_times", "r_grid", "n_traj",
             "master_seed", "workers", "out"}
_METHOD_KEYS = {
    "exact": {"max_photons", "krylov_dim", "exclude_same_mode_doubles"},
    "mtef": set(),
    "fssh": {"rescale"},
    "lsc": {"half_bilinear", "trace_stabilize", "divergence_bound"},
    "fbts": {"half_bilinear", "divergence_bound"},
    "bbgky": {"efsc", "pfsc"},
}


@dataclass
class RunConfig:
    levels: int = 2
    n_modes: int = 40
    scale: float = 10.0
    coupling: float = 0.0103
    rwa: bool = False
    method: str = "exact"
    dt: float = 0.05
    t_final: float = 10.0
    snapshot_times: tuple = ()
    r_grid: int = 2048
    n_traj: int = 1
    master_seed: int = 0
    workers: int = 1
    out: str = "run_out"
    method_opts: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    entries: dict

    def write(self, path: str):
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for key in sorted(self.entries):
                fh.write(f"{key} = {self.entries[key]}\n")
        os.replace(tmp, path)

    @staticmethod
    def read(path: str) -> dict:
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or "=" not in line:
                    continue
                key, _, val = line.partition("=")
                entries[key.strip()] = val.strip()
        return entries


def _parse_bool(raw: str, where: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: cannot parse boolean from {raw!r}")


def _parse_num(raw: str, kind, where: str):
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(path: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = RunConfig()

    sections = set(parser.sections())
    if "run" not in sections:
        raise ConfigError("run: section missing")
    raw_method = parser.get("run", "method", fallback=None)
    if raw_method is None:
        raise ConfigError("run.method: required")
    method = raw_method.strip().lower()
    if method not in METHODS:
        raise ConfigError(f"run.method: unknown method {raw_method!r}")
    cfg.method = method
    allowed_sections = {"model", "run", method}
    unknown = sections - allowed_sections
    if unknown:
        raise ConfigError(f"unknown section {sorted(unknown)[0]!r}")

    if parser.has_section("model"):
        for key, raw in parser.items("model"):
            if key not in _MODEL_KEYS:
                raise ConfigError(f"model.{key}: unknown key")
            where = f"model.{key}"
            if key == "levels":
                cfg.levels = _parse_num(raw, int, where)
            elif key == "n_modes":
                cfg.n_modes = _parse_num(raw, int, where)
            elif key == "scale":
                cfg.scale = _parse_num(raw, float, where)
            elif key == "coupling":
                cfg.coupling = _parse_num(raw, float, where)
            elif key == "rwa":
                cfg.rwa = _parse_bool(raw, where)

    for key, raw in parser.items("run"):
        if key not in _RUN_KEYS:
            raise ConfigError(f"run.{key}: unknown key")
        where = f"run.{key}"
        if key == "method":
            continue
        if key == "dt":
            cfg.dt = _parse_num(raw, float, where)
        elif key == "t_final":
            cfg.t_final = _parse_num(raw, float, where)
        elif key == "snapshot_times":
            vals = [v for v in (s.strip() for s in raw.split(",")) if v]
            cfg.snapshot_times = tuple(_parse_num(v, float, where) for v in vals)
        elif key == "r_grid":
            cfg.r_grid = _parse_num(raw, int, where)
        elif key == "n_traj":
            cfg.n_traj = _parse_num(raw, int, where)
        elif key == "master_seed":
            cfg.master_seed = _parse_num(raw, int, where)
        elif key == "workers":
            cfg.workers = _parse_num(raw, int, where)
        elif key == "out":
            cfg.out = raw.strip()

    if parser.has_section(method):
        allowed = _METHOD_KEYS[method]
        for key, raw in parser.items(method):
            if key not in allowed:
                raise ConfigError(f"{method}.{key}: unknown key")
            where = f"{method}.{key}"
            if key in ("max_photons", "krylov_dim"):
                cfg.method_opts[key] = _parse_num(raw, int, where)
            elif key in ("exclude_same_mode_doubles", "half_bilinear",
                         "trace_stabilize", "efsc", "pfsc"):
                cfg.method_opts[key] = _parse_bool(raw, where)
            elif key == "divergence_bound":
                cfg.method_opts[key] = _parse_num(raw, float, where)
            elif key == "rescale":
                cfg.method_opts[key] = raw.strip().lower()

    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    if cfg.levels not in (2, 3):
        raise ConfigError("model.levels: must be 2 or 3")
    if cfg.n_modes < 1:
        raise ConfigError("model.n_modes: must be at least 1")
    if cfg.scale <= 0:
        raise ConfigError("model.scale: must be positive")
    if cfg.coupling < 0:
        raise ConfigError("model.coupling: must be non-negative")
    if cfg.method not in METHODS:
        raise ConfigError("run.method: unknown method")
    if cfg.dt <= 0:
        raise ConfigError("run.dt: must be positive")
    if cfg.t_final <= 0:
        raise ConfigError("run.t_final: must be positive")
    for t in cfg.snapshot_times:
        if not 0.0 <= t <= cfg.t_final:
            raise ConfigError("run.snapshot_times: outside [0, t_final]")
    if cfg.r_grid < 2:
        raise ConfigError("run.r_grid: must be at least 2")
    if cfg.method in TRAJECTORY_METHODS and cfg.n_traj < 1:
        raise ConfigError("run.n_traj: must be at least 1 for trajectory methods")
    if cfg.workers < 1:
        raise ConfigError("run.workers: must be at least 1")
    if cfg.method == "bbgky" and cfg.levels != 2:
        raise ConfigError("model.levels: bbgky supports 2 levels only")
    if cfg.method == "fssh":
        if cfg.method_opts.get("rescale", "direction") not in ("direction", "uniform"):
            raise ConfigError("fssh.rescale: must be 'direction' or 'uniform'")
    if cfg.method == "exact":
        if cfg.method_opts.get("max_photons", 2) not in (1, 2):
            raise ConfigError("exact.max_photons: must be 1 or 2")


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _snapshot_tag(t: float) -> str:
    return f"{t:g}"


def write_series(series: ObservableSeries, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    K = series.populations.shape[1]
    pop_path = os.path.join(out_dir, "populations.tsv")
    with open(pop_path, "w", encoding="utf-8") as fh:
        cols = ["t"] + [f"p_{k + 1}" for k in range(K)] \
            + [f"se_{k + 1}" for k in range(K)]
        fh.write("# " + "\t".join(cols) + "\n")
        for i, t in enumerate(series.times):
            row = [t, *series.populations[i], *series.pop_stderr[i]]
            fh.write("\t".join(_fmt(v) for v in row) + "\n")
    for t in sorted(series.intensity):
        path = os.path.join(out_dir, f"intensity_t{_snapshot_tag(t)}.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# r\tI\tse_I\n")
            se = series.intensity_stderr[t]
            for r, I, s in zip(series.r_grid, series.intensity[t], se):
                fh.write("\t".join(_fmt(v) for v in (r, I, s)) + "\n")


def read_table(path: str):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().lstrip("# ").split()
        data = np.loadtxt(fh, ndmin=2)
    return header, data


def run(cfg: RunConfig) -> str:
    """Execute a validated config; returns the output directory."""
    validate_config(cfg)
    t0 = time.monotonic()
    model = build_paper_model(cfg.levels, cfg.n_modes, scale=cfg.scale,
                              coupling=cfg.coupling, rwa=cfg.rwa)
    r_grid = make_r_grid(model, cfg.r_grid)
    try:
        series = _dispatch(cfg, model, r_grid)
    except NumericalGuardError as exc:
        # partial progress is recorded, but the run is marked invalid
        os.makedirs(cfg.out, exist_ok=True)
        RunManifest({"status": "failed", "error": str(exc),
                     "version": __version__,
                     "config.run.method": cfg.method}).write(
            os.path.join(cfg.out, "manifest.txt"))
        raise

    write_series(series, cfg.out)
    entries = {
        "status": "complete",
        "version": __version__,
        "wall_time_s": f"{time.monotonic() - t0:.3f}",
        "config.model.levels": cfg.levels,
        "config.model.n_modes": cfg.n_modes,
        "config.model.scale": _fmt(cfg.scale),
        "config.model.coupling": _fmt(cfg.coupling),
        "config.model.rwa": cfg.rwa,
        "config.run.method": cfg.method,
        "config.run.dt": _fmt(cfg.dt),
        "config.run.t_final": _fmt(cfg.t_final),
        "config.run.snapshot_times": ",".join(_fmt(t) for t in cfg.snapshot_times),
        "config.run.r_grid": cfg.r_grid,
        "config.run.n_traj": cfg.n_traj,
        "config.run.master_seed": cfg.master_seed,
        "config.run.workers": cfg.workers,
    }
    for key, val in sorted(cfg.method_opts.items()):
        entries[f"config.{cfg.method}.{key}"] = val
    for key, val in sorted(series.manifest.items()):
        entries[f"run.{key}"] = val
    RunManifest(entries).write(os.path.join(cfg.out, "manifest.txt"))
    return cfg.out


def _dispatch(cfg: RunConfig, model, r_grid) -> ObservableSeries:
    opts = cfg.method_opts
    if cfg.method == "exact":
        series = run_exact(model, opts.get("max_photons", 2), cfg.dt,
                           cfg.t_final, cfg.snapshot_times, r_grid,
                           krylov_dim=opts.get("krylov_dim", 12),
                           exclude_same_mode_doubles=opts.get(
                               "exclude_same_mode_doubles", False))
    elif cfg.method == "mtef":
        series = run_mtef(model, cfg.n_traj, cfg.dt, cfg.t_final,
                          cfg.snapshot_times, r_grid, seed=cfg.master_seed,
                          workers=cfg.workers)
    elif cfg.method == "fssh":
        series = run_fssh(model, cfg.n_traj, cfg.dt, cfg.t_final,
                          cfg.snapshot_times, r_grid, seed=cfg.master_seed,
                          workers=cfg.workers,
                          rescale=opts.get("rescale", "direction"))
    elif cfg.method == "lsc":
        series = run_lsc(model, cfg.n_traj, cfg.dt, cfg.t_final,
                         cfg.snapshot_times, r_grid, seed=cfg.master_seed,
                         workers=cfg.workers,
                         half_bilinear=opts.get("half_bilinear", True),
                         trace_stabilize=opts.get("trace_stabilize", False),
                         divergence_bound=opts.get("divergence_bound", 1e3))
    elif cfg.method == "fbts":
        series = run_fbts(model, cfg.n_traj, cfg.dt, cfg.t_final,
                          cfg.snapshot_times, r_grid, seed=cfg.master_seed,
                          workers=cfg.workers,
                          half_bilinear=opts.get("half_bilinear", True),
                          divergence_bound=opts.get("divergence_bound", 1e3))
    elif cfg.method == "bbgky":
        flags = CorrectionFlags(efsc=opts.get("efsc", False),
                                pfsc=opts.get("pfsc", False))
        series = run_bbgky(model, flags, cfg.dt, cfg.t_final,
                           cfg.snapshot_times, r_grid)
    else:
        raise ConfigError("run.method: unknown method")
    return series


def _series_files(run_dir: str):
    manifest = os.path.join(run_dir, "manifest.txt")
    if not os.path.exists(manifest):
        raise ConfigError(f"{run_dir}: missing manifest")
    entries = RunManifest.read(manifest)
    if entries.get("status") != "complete":
        raise ConfigError(f"{run_dir}: incomplete run")
    snaps = sorted(f for f in os.listdir(run_dir)
                   if f.startswith("intensity_t") and f.endswith(".tsv"))
    return os.path.join(run_dir, "populations.tsv"), snaps


def compare(dir_a: str, dir_b: str, tol: float = None):
    """L2/Linf population and intensity deltas between two run directories.

    Returns (report text, max Linf delta, within_tol flag).
    """
    pop_a, snaps_a = _series_files(dir_a)
    pop_b, snaps_b = _series_files(dir_b)
    head_a, data_a = read_table(pop_a)
    head_b, data_b = read_table(pop_b)
    if data_a.shape != data_b.shape or not np.array_equal(data_a[:, 0], data_b[:, 0]):
        raise ConfigError("populations: time grids do not match")
    n_p = (len(head_a) - 1) // 2
    lines = []
    max_linf = 0.0
    diff = data_a[:, 1:1 + n_p] - data_b[:, 1:1 + n_p]
    l2 = float(np.sqrt(np.mean(diff ** 2)))
    linf = float(np.max(np.abs(diff))) if diff.size else 0.0
    max_linf = max(max_linf, linf)
    lines.append(f"populations: L2={_fmt(l2)} Linf={_fmt(linf)}")
    if snaps_a != snaps_b:
        raise ConfigError("intensity snapshots do not match")
    for name in snaps_a:
        _, a = read_table(os.path.join(dir_a, name))
        _, b = read_table(os.path.join(dir_b, name))
        if a.shape != b.shape or not np.array_equal(a[:, 0], b[:, 0]):
            raise ConfigError(f"{name}: spatial grids do not match")
        d = a[:, 1] - b[:, 1]
        l2 = float(np.sqrt(np.mean(d ** 2)))
        linf = float(np.max(np.abs(d))) if d.size else 0.0
        max_linf = max(max_linf, linf)
        tag = name[len("intensity_t"):-len(".tsv")]
        lines.append(f"intensity[t={tag}]: L2={_fmt(l2)} Linf={_fmt(linf)}")
    ok = tol is None or max_linf <= tol
    lines.append(f"max_linf = {_fmt(max_linf)}")
    if tol is not None:
        lines.append(f"tolerance = {_fmt(tol)}: {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines), max_linf, ok
