"""Convergence and effectivity studies over (degree, level) sweeps.

Level ``l`` is the ``base * 2**l`` square mesh of the unit square.  The time
step defaults to the largest uniform step not above h**(p + 1) / rate, with
h the largest element diameter and rate >= 1 the decay rate of the problem,
so the temporal error stays below the spatial one.
"""

from __future__ import annotations

import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimator import TERM_NAMES, accumulate_parabolic, populate_constants, steady_estimate
from .fespace import DgSpace, broken_l2_norm, energy_norm
from .ipdg import DiscretizationParams
from .mesh import build_structured_mesh
from .oswald import measured_c3
from .problem import manufactured_problem
from .solver import NewtonConfig, march_parabolic, solve_elliptic

COLUMNS = (
    "problem",
    "mode",
    "p",
    "level",
    "n",
    "h",
    "ndof",
    "dt",
    "steps",
    "theta",
    "c_sigma",
    "true_error",
    "estimator",
    "effectivity",
    *TERM_NAMES,
    "eta_residual",
    "eta_flux_jump",
    "eta_penalty",
    "oscillation",
    "final_l2",
    "newton_iterations",
    "error_rate",
    "estimator_rate",
)


@dataclass(eq=False)
class CaseResult:
    row: dict
    solution: object  # final DgFunction
    series: object = None  # TimeSeries for parabolic runs
    report: object = None


def level_mesh(config, level):
    n = config.base * 2**level
    return build_structured_mesh(nx=n, ny=n)


def default_dt(T, h, p, rate=1.0):
    """Largest uniform step not above h**(p + 1) / rate that divides T."""
    return T / math.ceil(T * max(rate, 1.0) / h ** (p + 1) - 1e-12)


def run_case(config, p, level):
    """One steady or parabolic run; returns a :class:`CaseResult`."""
    spec = manufactured_problem(config.preset, T=config.t_final)
    mesh = level_mesh(config, level)
    space = DgSpace(mesh, p)
    params = DiscretizationParams(config.theta, config.c_sigma)
    newton = NewtonConfig(tol=config.newton_tol)
    h = float(mesh.element_diameter.max())
    row = {
        "problem": spec.name,
        "mode": "steady" if spec.steady else "parabolic",
        "p": p,
        "level": level,
        "n": mesh.n_elements,
        "h": h,
        "ndof": space.ndof,
        "theta": config.theta,
        "c_sigma": config.c_sigma,
    }
    if spec.steady:
        U, info = solve_elliptic(spec, space, params, newton)
        est = steady_estimate(U, spec, params)
        err = energy_norm(U, params.c_sigma, spec.exact_grad, t=0.0)
        sums = est.sums()
        row.update(
            dt=0.0,
            steps=0,
            true_error=err,
            estimator=est.estimate,
            effectivity=est.estimate / err if err > 0 else math.inf,
            elliptic=est.estimate,
            **{k: 0.0 for k in TERM_NAMES[1:]},
            eta_residual=sums["residual"],
            eta_flux_jump=sums["flux_jump"],
            eta_penalty=sums["penalty"],
            oscillation=sums["oscillation"],
            final_l2=broken_l2_norm(U),
            newton_iterations=info.iterations,
        )
        return CaseResult(row, U)

    dt = config.dt if config.dt is not None else default_dt(spec.T, h, p, spec.rate)
    series = march_parabolic(spec, space, params, dt, newton)
    constants = populate_constants(spec.nonlinearity, mesh, space, params, measured_c3())
    report = accumulate_parabolic(series, spec, params, constants)
    U = series.snapshot(len(series) - 1)
    final = steady_estimate(U, spec, params, t=series.times[-1]).sums()
    row.update(
        dt=float(series.times[1] - series.times[0]),
        steps=len(series) - 1,
        true_error=report.true_error,
        estimator=report.total,
        effectivity=report.effectivity,
        **report.terms,
        eta_residual=final["residual"],
        eta_flux_jump=final["flux_jump"],
        eta_penalty=final["penalty"],
        oscillation=final["oscillation"],
        final_l2=broken_l2_norm(U),
        newton_iterations=int(sum(series.newton_iterations)),
    )
    return CaseResult(row, U, series, report)


def _row_only(args):
    config, p, level = args
    return run_case(config, p, level).row


def slope(h, values):
    """Least-squares slope of log(values) against log(h)."""
    h = np.asarray(h, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(h) < 2 or np.any(v <= 0) or np.any(~np.isfinite(v)):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(v), 1)[0])


def run_study(config):
    """Every (degree, level) run, rows sorted by degree then level, with rates filled in."""
    tasks = [(config, p, level) for p in sorted(config.degrees) for level in range(config.levels)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_row_only, tasks))
    else:
        rows = [_row_only(t) for t in tasks]
    rows.sort(key=lambda r: (r["p"], r["level"]))
    for p in sorted(set(r["p"] for r in rows)):
        group = [r for r in rows if r["p"] == p]
        hs = [r["h"] for r in group]
        er = slope(hs, [r["true_error"] for r in group])
        es = slope(hs, [r["estimator"] for r in group])
        for r in group:
            r["error_rate"] = er
            r["estimator_rate"] = es
    return rows


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def format_csv(rows, columns=COLUMNS):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c, math.nan)) for c in columns))
    return "\n".join(lines) + "\n"


def write_atomic(path, data):
    """Write text or bytes to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def convergence_svg(rows):
    """Log-log plot of true error and estimator against h for every degree."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "qlipdg"
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for p in sorted(set(r["p"] for r in rows)):
        group = [r for r in rows if r["p"] == p]
        h = [r["h"] for r in group]
        ax.loglog(h, [r["true_error"] for r in group], "o-", label=f"error, p={p}")
        ax.loglog(h, [r["estimator"] for r in group], "s--", label=f"estimator, p={p}")
    ax.set_xlabel("h")
    ax.set_ylabel("energy norm")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def field_csv(u):
    """Values of ``u`` at the cell quadrature points: element, reference and physical point, value."""
    space = u.space
    vals = u.values()
    lines = ["element,xi,eta,x,y,value"]
    for k in range(space.mesh.n_elements):
        for q in range(len(space.ref)):
            xi, eta = space.ref[q]
            x, y = space.X[k, q]
            lines.append(",".join([str(k)] + [_fmt(v) for v in (xi, eta, x, y, vals[k, q])]))
    return "\n".join(lines) + "\n"
