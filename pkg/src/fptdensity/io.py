"""Deterministic CSV/JSON artifact writers.

CSV dialect: comma separator, '.' decimal, scientific notation with 17
significant digits, LF line endings, UTF-8, one header row, preceded by
'#' comment lines echoing the scenario configuration and a format-version
string.  Identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CSV_FORMAT_VERSION = "fptdensity-csv-1"


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_, int, np.integer)):
        return str(int(x))
    return format(float(x), ".16e")


def _header_lines(scenario, extra: dict | None = None) -> list[str]:
    lines = [f"# format: {CSV_FORMAT_VERSION}"]
    cfg = json.dumps(scenario.to_dict(), separators=(",", ":"))
    lines.append(f"# scenario: {cfg}")
    for key, val in (extra or {}).items():
        lines.append(f"# {key}: {val}")
    return lines


def write_csv(path, scenario, columns, rows, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = _header_lines(scenario, extra)
    out.append(",".join(columns))
    for row in rows:
        out.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
    return path


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n",
                    encoding="utf-8", newline="\n")
    return path


def density_rows(solution):
    grid = solution.grid
    for k, t in enumerate(grid.times):
        sl = grid[k]
        for j in range(sl.m):
            yield (t, j, sl.u[j], sl.nodes[j, 0], sl.nodes[j, 1],
                   solution.values[k, j])


def write_density_csv(path, scenario, solution) -> Path:
    return write_csv(path, scenario,
                     ["t", "node_index", "u", "y1", "y2", "p"],
                     density_rows(solution))


def write_survival_csv(path, scenario, curve) -> Path:
    rows = [(t, s, c, s + c) for t, s, c in
            zip(curve.times, curve.raw, curve.cdf)]
    return write_csv(path, scenario, ["t", "survival", "cdf", "survival_plus_cdf"], rows)


def write_hits_csv(path, scenario, result) -> Path:
    order = np.argsort(result.hit_times, kind="stable")
    rows = ((result.hit_ids[i], result.hit_times[i], result.hit_params[i])
            for i in order)
    return write_csv(path, scenario, ["path_id", "t_hit", "u_hit"], rows)


def write_mass_balance_csv(path, scenario, reports) -> Path:
    rows = [(r.interval[0], r.interval[1], r.delta, r.boundary_flux, r.df_mass,
             r.max_error) for r in reports]
    return write_csv(path, scenario,
                     ["t1", "t2", "delta", "boundary_flux", "df_mass", "abs_error"],
                     rows)


def write_validation_csv(path, scenario, rows) -> Path:
    return write_csv(path, scenario,
                     ["check", "value", "threshold", "passed"],
                     [(name, val, thr, int(ok)) for name, val, thr, ok in rows])


def write_compare_csv(path, scenario, times, solver_cdf, mc_cdf) -> Path:
    rows = zip(times, solver_cdf, mc_cdf, np.asarray(solver_cdf) - np.asarray(mc_cdf))
    return write_csv(path, scenario, ["t", "solver_cdf", "mc_cdf", "diff"], rows)
