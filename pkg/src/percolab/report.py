"""CSV / JSON / figure output for the command line tools.

Every estimator row uses one fixed header so downstream tooling can
concatenate files from different subcommands.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CSV_FIELDS = ("p", "s", "L", "theta", "stderr", "n", "seed")


def _ensure_dir(path: str):
    d = os.path.dirname(os.path.abspath(path))
    if d:
        os.makedirs(d, exist_ok=True)


def write_csv(path: str, rows: Sequence[dict]):
    """Estimator rows under the canonical header, in given order."""
    _ensure_dir(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in CSV_FIELDS})


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v)
                for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)


def write_json(path: str, summary: dict):
    _ensure_dir(path)
    with open(path, "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_sweep(rows: Sequence[dict], path: str, title: str = ""):
    """theta against p, one curve per truncation level."""
    _ensure_dir(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    by_level: dict = {}
    for row in rows:
        by_level.setdefault(row["L"], []).append(row)
    for L in sorted(by_level):
        pts = sorted(by_level[L], key=lambda r: r["p"])
        ps = [r["p"] for r in pts]
        ts = [r["theta"] for r in pts]
        es = [r["stderr"] for r in pts]
        ax.errorbar(ps, ts, yerr=es, marker="o", ms=3, capsize=2,
                    label=f"L={L}")
    ax.set_xlabel("p")
    ax.set_ylabel(r"$\theta_L$")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_pc(estimate, path: str, title: str = ""):
    """Crossing sequence with the final interval band."""
    _ensure_dir(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if estimate.crossings:
        Ls = [L for L, _ in estimate.crossings]
        cs = [c for _, c in estimate.crossings]
        ax.plot(Ls, cs, "o-", label="crossing(L)")
        ax.set_xlabel("L")
    ax.axhline(estimate.point, color="k", lw=1, label="estimate")
    ax.axhspan(estimate.lo, estimate.hi, color="tab:orange", alpha=0.3,
               label="interval")
    ax.set_ylabel("p")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_gap(report, path: str):
    """Side-by-side critical intervals, or the quotient decay curve."""
    _ensure_dir(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if report.mode == "bisect":
        for x, est, label in ((0, report.pc_source, "source"),
                              (1, report.pc_target, "quotient")):
            ax.errorbar([x], [est.point],
                        yerr=[[est.point - est.lo], [est.hi - est.point]],
                        fmt="o", capsize=6, label=label)
        ax.set_xlim(-0.5, 1.5)
        ax.set_xticks([0, 1], ["source", "quotient"])
        ax.set_ylabel("p_c interval")
        ax.set_title(f"{report.pair}: gap = {report.gap:.4f}")
    else:
        rows = sorted(report.decay_rows, key=lambda r: r["L"])
        ax.errorbar([r["L"] for r in rows], [r["theta"] for r in rows],
                    yerr=[r["stderr"] for r in rows], marker="o", capsize=3,
                    label=f"quotient at p={report.p_test:.3f}")
        ax.axhline(0.05, color="r", ls="--", lw=1, label="0.05")
        ax.set_xlabel("L")
        ax.set_ylabel(r"$\theta_L$")
        ax.set_title(f"{report.pair}: decay above source $p_c$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
