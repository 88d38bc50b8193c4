"""Desk-scale convergence, energy and normality experiments.

Each driver takes an :class:`ExperimentConfig`, runs the sweep in parameter
order and returns rows that serialise to a deterministic CSV (17 significant
digits, ``.`` decimal separator). Wall-clock times are kept on the rows but
only written to CSV on request, so repeated runs produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bdf import BdfScheme, StepFailure, Trajectory, run_trajectory
from .fem import FiniteElementSpace, NodalField, error_norms, interpolate
from .mesh import build_box_mesh
from .problems import ProblemSpec, get_problem
from .stability import discrete_energy_report, energy_rhs

log = logging.getLogger(__name__)

TIME_TOL = 1e-12


class ExperimentError(RuntimeError):
    """A sweep cell failed; ``context`` names the parameters of the cell."""

    def __init__(self, context: dict, cause: Exception):
        desc = ", ".join(f"{k}={v}" for k, v in context.items())
        super().__init__(f"experiment failed at {desc}: {cause}")
        self.context = context
        self.__cause__ = cause


@dataclass
class ExperimentConfig:
    """Parameters of one experiment sweep.

    ``taus`` is the step-size list of a temporal sweep, ``tau`` the fixed
    step of a spatial sweep, and ``n_cells`` the list of cells per unit
    length in ``x`` and ``y`` of a spatial sweep (``h = 1/n``). ``mesh``
    is ``(nx, ny, nz, L)`` for runs on a single mesh.
    """

    problem: str = "exact2"
    k: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    r: list[int] = field(default_factory=lambda: [2])
    mesh: tuple[int, int, int, float] = (8, 8, 1, 0.01)
    taus: list[float] = field(default_factory=lambda: [0.2 / 2**i for i in range(1, 6)])
    tau: float = 2e-3
    n_cells: list[int] = field(default_factory=lambda: [2, 4, 8, 16])
    t_final: float = 0.2
    alpha: float = 0.2
    tol: float = 1e-10
    method: str = "direct"
    output: str | None = None
    plot: str | None = None
    seed: int = 0
    timings: bool = False

    def __post_init__(self):
        self.k = [int(k) for k in _as_list(self.k)]
        self.r = [int(r) for r in _as_list(self.r)]
        self.taus = [float(t) for t in _as_list(self.taus)]
        self.n_cells = [int(n) for n in _as_list(self.n_cells)]
        self.mesh = (int(self.mesh[0]), int(self.mesh[1]), int(self.mesh[2]), float(self.mesh[3]))
        self.validate()

    def validate(self) -> None:
        positive = {
            "k": self.k, "r": self.r, "taus": self.taus, "n_cells": self.n_cells,
            "mesh": list(self.mesh), "tau": [self.tau], "t_final": [self.t_final],
            "alpha": [self.alpha], "tol": [self.tol],
        }
        for name, values in positive.items():
            if any(not (v > 0) for v in values):
                raise ValueError(f"config field {name!r} must be positive, got {values}")
        for tau in self.taus + [self.tau]:
            steps_for(tau, self.t_final)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mesh"] = list(self.mesh)
        return d


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def steps_for(tau: float, t_final: float) -> int:
    """Number of steps ``N`` with ``N tau = t_final``; rejects non-divisors."""
    n = round(t_final / tau)
    if n < 1 or abs(n * tau - t_final) > TIME_TOL * max(1.0, t_final) * 10 + 1e-12:
        raise ValueError(f"tau={tau!r} does not divide t_final={t_final!r}")
    return n


def tau_defaults(**overrides) -> ExperimentConfig:
    return ExperimentConfig(**overrides)


def h_defaults(**overrides) -> ExperimentConfig:
    base = dict(problem="exact1", k=[2], r=[1, 2], tau=2e-3, n_cells=[2, 4, 8, 16], mesh=(2, 2, 1, 0.01))
    base.update(overrides)
    return ExperimentConfig(**base)


def energy_defaults(**overrides) -> ExperimentConfig:
    base = dict(problem="nonsmooth", k=[1, 2], r=[1], mesh=(16, 16, 1, 0.01), taus=[1e-2, 5e-3])
    base.update(overrides)
    return ExperimentConfig(**base)


# Full-scale setups (about 6e4 degrees of freedom per step and more); slow.
PRESETS = {
    "tau-full": dict(problem="exact2", k=[1, 2, 3, 4], r=[2], mesh=(40, 40, 1, 0.01),
                     taus=[0.2 / 2**i for i in range(1, 8)]),
    "h-full": dict(problem="exact1", k=[2], r=[1, 2, 3, 4], tau=1e-3, n_cells=[5, 10, 20, 40],
                   mesh=(40, 40, 1, 0.01)),
    "energy-full": dict(problem="nonsmooth", k=[1, 2], r=[1], mesh=(40, 40, 1, 0.01),
                        taus=[1e-2, 1e-3, 1e-4]),
}


@dataclass
class ConvergenceRow:
    param: str
    value: int
    step: float
    h1_error: float
    l2_error: float
    eoc: float | None
    wall_time: float
    iterations: int

    def __post_init__(self):
        if not (self.h1_error >= 0 and self.l2_error >= 0):
            raise ValueError("errors must be non-negative")


def eoc(e_prev: float, e: float, step_prev: float, step: float) -> float:
    """Experimental order ``log(e_prev / e) / log(step_prev / step)``."""
    return math.log(e_prev / e) / math.log(step_prev / step)


def with_eoc(rows: list[ConvergenceRow]) -> list[ConvergenceRow]:
    """Fill ``eoc`` from adjacent rows sharing ``(param, value)``."""
    out = []
    for i, row in enumerate(rows):
        prev = rows[i - 1] if i else None
        if prev is not None and (prev.param, prev.value) == (row.param, row.value):
            row = replace(row, eoc=eoc(prev.h1_error, row.h1_error, prev.step, row.step))
        else:
            row = replace(row, eoc=None)
        out.append(row)
    return out


def manufactured_run(
    problem: ProblemSpec,
    space: FiniteElementSpace,
    k: int,
    tau: float,
    t_final: float,
    tol: float = 1e-10,
    method: str = "direct",
) -> Trajectory:
    """BDF-k run to ``t_final`` from interpolated exact starting values."""
    n_total = steps_for(tau, t_final)
    if n_total < k - 1:
        raise ValueError(f"order {k} needs {k - 1} starting steps, more than {n_total}")
    scheme = BdfScheme.of_order(k)
    initial = [interpolate(space, lambda x, t=i * tau: problem.exact(x, t)) for i in range(k)]
    H = _nodal_field(space, problem)
    return run_trajectory(scheme, space, initial, H, tau, n_total - k + 1, problem.alpha, tol, method=method)


def _nodal_field(space: FiniteElementSpace, problem: ProblemSpec):
    def H(t: float) -> NodalField:
        return interpolate(space, lambda x: problem.H(x, t))

    return H


def _final_errors(space, traj: Trajectory, problem: ProblemSpec, t: float) -> tuple[float, float]:
    return error_norms(space, traj.final, lambda x: problem.exact(x, t), lambda x: problem.exact_grad(x, t))


def _check_residuals(traj: Trajectory, tol: float, context: dict) -> None:
    worst = max(traj.constraint_residuals, default=0.0)
    if worst > 10 * tol:
        raise ExperimentError(context, RuntimeError(f"constraint residual {worst:.3e} exceeds 10*tol"))


def run_convergence_tau(config: ExperimentConfig) -> list[ConvergenceRow]:
    """Temporal sweep: H1 error at ``t_final`` for every ``k`` and ``tau``.

    Step sizes for which the ``k``-th starting value would lie beyond
    ``t_final`` are skipped.
    """
    problem = get_problem(config.problem, alpha=config.alpha, t_final=config.t_final)
    if not problem.manufactured:
        raise ValueError(f"problem {config.problem!r} has no exact solution")
    nx, ny, nz, L = config.mesh
    rows = []
    for r in config.r:
        space = FiniteElementSpace(build_box_mesh(nx, ny, nz, L), r)
        for k in config.k:
            for tau in config.taus:
                if steps_for(tau, config.t_final) < k:
                    continue
                ctx = {"k": k, "tau": tau, "r": r}
                try:
                    traj = manufactured_run(problem, space, k, tau, config.t_final, config.tol, config.method)
                except StepFailure as exc:
                    raise ExperimentError(ctx, exc) from exc
                _check_residuals(traj, config.tol, ctx)
                l2, h1 = _final_errors(space, traj, problem, config.t_final)
                rows.append(ConvergenceRow("k", k, tau, h1, l2, None, traj.wall_time, sum(traj.iterations)))
                log.info("k=%d tau=%.4g h1=%.6e", k, tau, h1)
    return with_eoc(rows)


def run_convergence_h(config: ExperimentConfig) -> list[ConvergenceRow]:
    """Spatial sweep on one-layer meshes ``n x n x 1`` of thickness ``mesh[3]``."""
    problem = get_problem(config.problem, alpha=config.alpha, t_final=config.t_final)
    if not problem.manufactured:
        raise ValueError(f"problem {config.problem!r} has no exact solution")
    L = config.mesh[3]
    nz = config.mesh[2]
    rows = []
    for k in config.k:
        for r in config.r:
            for n in config.n_cells:
                ctx = {"k": k, "r": r, "h": 1.0 / n}
                space = FiniteElementSpace(build_box_mesh(n, n, nz, L), r)
                try:
                    traj = manufactured_run(problem, space, k, config.tau, config.t_final, config.tol, config.method)
                except StepFailure as exc:
                    raise ExperimentError(ctx, exc) from exc
                _check_residuals(traj, config.tol, ctx)
                l2, h1 = _final_errors(space, traj, problem, config.t_final)
                rows.append(ConvergenceRow("r", r, 1.0 / n, h1, l2, None, traj.wall_time, sum(traj.iterations)))
                log.info("r=%d h=1/%d h1=%.6e", r, n, h1)
    return with_eoc(rows)


@dataclass
class EnergyRow:
    k: int
    tau: float
    n: int
    t: float
    grad_norm: float
    unit_deviation_nodes: float
    unit_deviation: float
    normality_l2: float
    margin: float | None
    rhs: float | None


def bootstrap_run(
    problem: ProblemSpec,
    space: FiniteElementSpace,
    k: int,
    tau: float,
    n_total: int,
    tol: float = 1e-10,
    method: str = "direct",
) -> Trajectory:
    """Run to level ``n_total`` from a single initial value.

    For ``k >= 2`` the starting values ``m^1..m^{k-1}`` come from BDF1
    steps of size ``tau``; their diagnostics are those of the BDF1 run.
    """
    H = _nodal_field(space, problem)
    m0 = interpolate(space, problem.initial)
    if k == 1 or n_total == 0:
        return run_trajectory(BdfScheme.of_order(1), space, [m0], H, tau, n_total, problem.alpha, tol, method=method)
    n_boot = min(k - 1, n_total)
    boot = run_trajectory(
        BdfScheme.of_order(1), space, [m0], H, tau, n_boot, problem.alpha, tol, method=method, keep_fields=True
    )
    if n_boot < k - 1:
        return boot
    traj = run_trajectory(
        BdfScheme.of_order(k), space, boot.fields, H, tau, n_total - k + 1, problem.alpha, tol, method=method
    )
    traj.wall_time += boot.wall_time
    return traj


def energy_trajectory(
    config: ExperimentConfig, k: int, tau: float, n_total: int | None = None
) -> tuple[Trajectory, FiniteElementSpace]:
    """Nonsmooth-data run on ``config.mesh`` with degree ``config.r[0]``."""
    problem = get_problem(config.problem, alpha=config.alpha, t_final=config.t_final)
    nx, ny, nz, L = config.mesh
    space = FiniteElementSpace(build_box_mesh(nx, ny, nz, L), config.r[0])
    if n_total is None:
        n_total = steps_for(tau, config.t_final)
    try:
        traj = bootstrap_run(problem, space, k, tau, n_total, config.tol, config.method)
    except StepFailure as exc:
        raise ExperimentError({"k": k, "tau": tau}, exc) from exc
    _check_residuals(traj, config.tol, {"k": k, "tau": tau})
    return traj, space


def run_energy_decay(config: ExperimentConfig, n_steps: int | None = None) -> list[EnergyRow]:
    """Energy, unit-length deviation and energy-inequality margin per time level.

    ``n_steps`` overrides the number of steps (``0`` gives the initial level
    only). Margins are reported for ``k <= 2`` at levels ``n >= k``.
    """
    rows = []
    for k in config.k:
        for tau in config.taus:
            traj, _ = energy_trajectory(config, k, tau, n_steps)
            margins, rhs = _margins(traj, k, config.alpha, tau)
            for n, t in enumerate(traj.times):
                j = n - k
                rows.append(
                    EnergyRow(
                        k, tau, n, t, traj.grad_norms[n], traj.nodal_deviation[n],
                        traj.unit_deviation[n], traj.normality_l2[n],
                        margins[j] if 0 <= j < len(margins) else None,
                        rhs[j] if 0 <= j < len(rhs) else None,
                    )
                )
    return rows


def _margins(traj: Trajectory, k: int, alpha: float, tau: float) -> tuple[list[float], list[float]]:
    if k > 2 or len(traj.times) <= k:
        return [], []
    return discrete_energy_report(traj, k, alpha, tau), energy_rhs(traj, k, alpha, tau)


# --- CSV -----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(rows: Sequence, timings: bool = False) -> str:
    """Serialise dataclass rows; ``wall_time`` is dropped unless ``timings``."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    names = [f.name for f in fields(rows[0]) if timings or f.name != "wall_time"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in rows:
        w.writerow([_fmt(getattr(row, n)) for n in names])
    return buf.getvalue()


def write_csv(rows: Sequence, path: str | Path, timings: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv(rows, timings))
    return path


def read_csv(path_or_text: str | Path) -> list[dict[str, str]]:
    """Parse a CSV file (or CSV text containing a newline) into row dicts."""
    text = str(path_or_text)
    if "\n" not in text:
        text = Path(text).read_text()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ValueError("CSV has no header")
    rows = list(reader)
    for i, row in enumerate(rows):
        if None in row or any(v is None for v in row.values()):
            raise ValueError(f"malformed CSV row {i + 2}")
    return rows


# --- SVG plots -----------------------------------------------------------

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
WIDTH, HEIGHT, MARGIN = 480, 360, 50


def _series(rows: list[dict[str, str]], kind: str) -> tuple[dict, bool]:
    """Group rows into ``{label: (xs, ys, slope)}`` and say whether axes are log."""
    groups: dict[str, tuple[list[float], list[float], float | None]] = {}
    try:
        if kind == "convergence":
            for row in rows:
                key = f"{row['param']}={row['value']}"
                xs, ys, _ = groups.setdefault(key, ([], [], None))
                xs.append(float(row["step"]))
                ys.append(float(row["h1_error"]))
                slope = float(row["value"])
                groups[key] = (xs, ys, slope)
            log_axes = True
        elif kind == "energy":
            for row in rows:
                key = f"k={row['k']} tau={float(row['tau']):g}"
                xs, ys, _ = groups.setdefault(key, ([], [], None))
                xs.append(float(row["t"]))
                ys.append(float(row["grad_norm"]))
            log_axes = False
        else:
            raise ValueError(f"unknown plot kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"CSV lacks column {exc.args[0]!r} for a {kind} plot") from None
    except (TypeError, ValueError) as exc:
        if "plot kind" in str(exc):
            raise
        raise ValueError(f"malformed CSV value: {exc}") from None
    return groups, log_axes


def emit_plot(csv_source: str | Path, kind: str, out_path: str | Path) -> Path:
    """Render a convergence (log-log, dashed slope guides) or energy (linear) SVG."""
    rows = read_csv(csv_source)
    if not rows:
        raise ValueError("CSV contains no data rows")
    groups, log_axes = _series(rows, kind)
    tf = np.log10 if log_axes else (lambda a: np.asarray(a, dtype=float))
    all_x = np.concatenate([tf(np.array(g[0])) for g in groups.values()])
    all_y = np.concatenate([tf(np.array(g[1])) for g in groups.values()])
    if not (np.all(np.isfinite(all_x)) and np.all(np.isfinite(all_y))):
        raise ValueError("plot data must be finite (and positive on log axes)")
    x0, x1 = all_x.min(), all_x.max()
    y0, y1 = all_y.min(), all_y.max()
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x, y):
        return (
            MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN),
            HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN),
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>',
    ]
    xlabel = "log10 step" if log_axes else "t"
    ylabel = "log10 H1 error" if log_axes else "energy"
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="12" y="{HEIGHT / 2}" font-size="12" transform="rotate(-90 12 {HEIGHT / 2})" text-anchor="middle">{ylabel}</text>')
    for i, (label, (xs, ys, slope)) in enumerate(groups.items()):
        color = PALETTE[i % len(PALETTE)]
        X, Y = tf(np.array(xs)), tf(np.array(ys))
        pts = " ".join("{:.2f},{:.2f}".format(*px(x, y)) for x, y in zip(X, Y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if log_axes and slope is not None and len(X) >= 2:
            gy = Y[0] + slope * (X - X[0]) - 0.3
            gpts = " ".join("{:.2f},{:.2f}".format(*px(x, y)) for x, y in zip(X, gy))
            parts.append(
                f'<polyline class="guide" fill="none" stroke="{color}" stroke-dasharray="5,4" points="{gpts}"/>'
            )
        parts.append(
            f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * (i + 1)}" font-size="10" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(parts) + "\n")
    return out_path


def last_eocs(rows: Iterable[ConvergenceRow]) -> dict[int, list[float]]:
    """EOC values per ``value`` (k or r) in row order."""
    out: dict[int, list[float]] = {}
    for row in rows:
        if row.eoc is not None:
            out.setdefault(row.value, []).append(row.eoc)
    return out

