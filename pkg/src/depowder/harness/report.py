"""CSV reports built from raw per-trial rows.

Every aggregate table is a pure function of the raw rows, so ``report`` can
rebuild it from a bench output directory. Floats are written with ``repr`` so
re-running an experiment reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import platform
from collections import defaultdict
from pathlib import Path

import numpy as np

TRIAL_COLUMNS = [
    "kind", "strategy", "part", "visibility", "seed", "mean_R_err", "mean_t_err", "mean_R_err_raw",
    "mean_t_err_raw", "final_R_err", "final_t_err", "success", "lost_at", "frames",
]
SPEED_COLUMNS = ["part", "visibility", "seed", "motion", "strategy", "max_factor", "max_speed", "unit"]
STRATEGY_ORDER = ["cuicp", "continuous", "vanilla"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return v


def _typed(rows):
    return [{k: _num(v) if k not in ("kind", "strategy", "part", "motion", "unit") else v for k, v in r.items()}
            for r in rows]


def _strategies(rows):
    present = {r["strategy"] for r in rows}
    return [s for s in STRATEGY_ORDER if s in present] + sorted(present - set(STRATEGY_ORDER))


def _parts(rows):
    seen = []
    for r in rows:
        if r["part"] not in seen:
            seen.append(r["part"])
    return seen


def static_table(rows) -> tuple[list[str], list[dict]]:
    """Mean R_err / t_err per strategy and part across visibilities, plus an overall row."""
    rows = _typed(rows)
    vis = sorted({r["visibility"] for r in rows})
    cols = ["strategy", "part"] + [f"R_err@{v:g}" for v in vis] + [f"t_err@{v:g}" for v in vis]
    acc = defaultdict(list)
    for r in rows:
        acc[(r["strategy"], r["part"], r["visibility"], "R")].append(r["mean_R_err"])
        acc[(r["strategy"], r["part"], r["visibility"], "t")].append(r["mean_t_err"])
    out = []
    parts = _parts(rows)
    for s in _strategies(rows):
        for p in parts + ["overall"]:
            row = {"strategy": s, "part": p}
            for v in vis:
                for m, name in (("R", "R_err"), ("t", "t_err")):
                    if p == "overall":
                        vals = [x for q in parts for x in acc[(s, q, v, m)]]
                    else:
                        vals = acc[(s, p, v, m)]
                    row[f"{name}@{v:g}"] = float(np.mean(vals)) if vals else float("nan")
            out.append(row)
    return cols, out


def push_table(rows) -> tuple[list[str], list[dict]]:
    """Success rate (%) per strategy and part, plus overall."""
    rows = _typed(rows)
    parts = _parts(rows)
    cols = ["strategy"] + parts + ["overall"]
    out = []
    for s in _strategies(rows):
        row = {"strategy": s}
        mine = [r for r in rows if r["strategy"] == s]
        for p in parts:
            hits = [r["success"] for r in mine if r["part"] == p]
            row[p] = 100.0 * float(np.mean(hits)) if hits else float("nan")
        row["overall"] = 100.0 * float(np.mean([r["success"] for r in mine])) if mine else float("nan")
        out.append(row)
    return cols, out


def speed_table(rows) -> tuple[list[str], list[dict]]:
    """Mean max trackable speed per part, visibility, motion and strategy."""
    rows = _typed(rows)
    strategies = _strategies(rows)
    cols = ["part", "visibility", "motion", "unit"] + [f"{s}_speed" for s in strategies] + \
        [f"{s}_factor" for s in strategies]
    keys = []
    for r in rows:
        k = (r["part"], r["visibility"], r["motion"], r["unit"])
        if k not in keys:
            keys.append(k)
    out = []
    for part, vis, motion, unit in keys:
        row = {"part": part, "visibility": vis, "motion": motion, "unit": unit}
        for s in strategies:
            sel = [r for r in rows if (r["part"], r["visibility"], r["motion"], r["strategy"]) == (part, vis, motion, s)]
            row[f"{s}_speed"] = float(np.mean([r["max_speed"] for r in sel])) if sel else float("nan")
            row[f"{s}_factor"] = float(np.mean([r["max_factor"] for r in sel])) if sel else float("nan")
        out.append(row)
    return cols, out


TABLES = {"static": static_table, "push": push_table, "speed": speed_table}


def detect_kind(rows) -> str:
    if rows and "motion" in rows[0]:
        return "speed"
    kinds = {r.get("kind") for r in rows}
    if kinds == {"push"}:
        return "push"
    return "static"


def table_for(rows) -> tuple[list[str], list[dict]]:
    return TABLES[detect_kind(rows)](rows)


def hardware_info() -> dict:
    return {
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "python": platform.python_version(),
        "system": f"{platform.system()} {platform.release()}",
        "cpu_model": _cpu_model(),
    }


def _cpu_model() -> str:
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.lower().startswith("model name"):
                return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or "unknown"


def format_table(cols, rows, digits: int = 2) -> str:
    """Fixed-width text rendering for summary files."""
    def cell(v):
        return f"{v:.{digits}f}" if isinstance(v, float) else str(v)

    body = [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
