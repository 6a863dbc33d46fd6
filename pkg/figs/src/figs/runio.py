"""Readers for harness run directories (tab-separated tables + manifest)."""

from __future__ import annotations

import os

import numpy as np


class RunDataError(ValueError):
    """A run directory is missing, incomplete, or inconsistent."""


def read_manifest(run_dir: str) -> dict:
    path = os.path.join(run_dir, "manifest.txt")
    if not os.path.exists(path):
        raise RunDataError(f"{run_dir}: missing manifest")
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, _, val = line.partition("=")
            entries[key.strip()] = val.strip()
    if entries.get("status") != "complete":
        raise RunDataError(f"{run_dir}: run is not complete")
    return entries


def read_table(path: str):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().lstrip("# ").split()
        data = np.loadtxt(fh, ndmin=2)
    return header, data


def read_populations(run_dir: str):
    """Times, populations (n_t, K), and standard errors from populations.tsv."""
    read_manifest(run_dir)
    header, data = read_table(os.path.join(run_dir, "populations.tsv"))
    n_levels = (len(header) - 1) // 2
    t = data[:, 0]
    pops = data[:, 1:1 + n_levels]
    se = data[:, 1 + n_levels:1 + 2 * n_levels]
    return t, pops, se


def read_intensities(run_dir: str) -> dict:
    """Snapshot tag -> (r, I, se) for every intensity file in the run."""
    read_manifest(run_dir)
    out = {}
    for name in sorted(os.listdir(run_dir)):
        if not (name.startswith("intensity_t") and name.endswith(".tsv")):
            continue
        tag = name[len("intensity_t"):-len(".tsv")]
        _, data = read_table(os.path.join(run_dir, name))
        out[tag] = (data[:, 0], data[:, 1], data[:, 2])
    return out
