"""Command line entry point: ``python -m llgbdf <command> [options]``.

Commands read an optional JSON config (``--config``) whose keys mirror
:class:`~llgbdf.experiments.ExperimentConfig`; explicit flags override it.
The exit status is 0 only if every internal check of the command passed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import experiments as ex
from .fem import FiniteElementSpace, NodalField, l2_norm
from .mesh import build_box_mesh
from .stability import alpha_threshold, energy_constants, g_matrix, stability_table, verify_g_inequality
from .tangent import project_tangent, projection_error, tangent_residual

DEFAULTS: dict[str, Callable[..., ex.ExperimentConfig]] = {
    "converge-tau": ex.tau_defaults,
    "converge-h": ex.h_defaults,
    "energy": ex.energy_defaults,
    "stability-report": ex.ExperimentConfig,
    "projection-test": lambda **kw: ex.ExperimentConfig(**{"r": [1, 2], "n_cells": [2, 4, 8], **kw}),
}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llgbdf", description="Linearly implicit BDF tangent-plane LLG experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
        p.add_argument("--preset", choices=sorted(ex.PRESETS), help="full-scale parameter set")
        p.add_argument("--problem")
        p.add_argument("--k", type=_ints, help="comma-separated BDF orders")
        p.add_argument("--r", type=_ints, help="comma-separated polynomial degrees")
        p.add_argument("--mesh", nargs=4, metavar=("NX", "NY", "NZ", "L"))
        p.add_argument("--taus", type=_floats, help="comma-separated step sizes")
        p.add_argument("--tau", type=float)
        p.add_argument("--n-cells", type=_ints, dest="n_cells", help="comma-separated cells per unit length")
        p.add_argument("--t-final", type=float, dest="t_final")
        p.add_argument("--alpha", type=float)
        p.add_argument("--tol", type=float)
        p.add_argument("--method", choices=["direct", "gmres", "dense"])
        p.add_argument("--output", help="CSV output path")
        p.add_argument("--plot", help="SVG output path")
        p.add_argument("--seed", type=int)
        p.add_argument("--timings", action="store_true", default=None, help="add wall times to the CSV")
    return parser


OVERRIDES = ("problem", "k", "r", "mesh", "taus", "tau", "n_cells", "t_final", "alpha", "tol",
             "method", "output", "plot", "seed", "timings")


def make_config(args: argparse.Namespace) -> ex.ExperimentConfig:
    data: dict = {}
    if args.preset:
        data.update(ex.PRESETS[args.preset])
    if args.config is not None:
        data.update(json.loads(args.config.read_text()))
    for name in OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    unknown = set(data) - set(ex.ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return DEFAULTS[args.command](**data)


class Checks:
    """Collects named pass/fail results and prints them."""

    def __init__(self):
        self.results: list[tuple[str, bool, str]] = []

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.results.append((name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}{': ' + detail if detail else ''}")

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.results)


def _emit(rows, cfg: ex.ExperimentConfig, kind: str | None) -> None:
    text = ex.to_csv(rows, cfg.timings)
    if cfg.output:
        ex.write_csv(rows, cfg.output, cfg.timings)
        print(f"wrote {cfg.output}")
    else:
        sys.stdout.write(text)
    if cfg.plot and kind:
        ex.emit_plot(text, kind, cfg.plot)
        print(f"wrote {cfg.plot}")


def _convergence_summary(rows, checks: Checks, label: str) -> None:
    for row in rows:
        eoc = "" if row.eoc is None else f"{row.eoc:.3f}"
        print(f"{row.param}={row.value} {label}={row.step:.6g} h1={row.h1_error:.6e} eoc={eoc} time={row.wall_time:.2f}s")
    checks.add("errors finite", all(np.isfinite(r.h1_error) for r in rows))


def cmd_converge_tau(cfg: ex.ExperimentConfig, checks: Checks) -> None:
    rows = ex.run_convergence_tau(cfg)
    _convergence_summary(rows, checks, "tau")
    _emit(rows, cfg, "convergence")


def cmd_converge_h(cfg: ex.ExperimentConfig, checks: Checks) -> None:
    rows = ex.run_convergence_h(cfg)
    _convergence_summary(rows, checks, "h")
    _emit(rows, cfg, "convergence")


def cmd_energy(cfg: ex.ExperimentConfig, checks: Checks) -> None:
    rows = ex.run_energy_decay(cfg)
    for k in cfg.k:
        for tau in cfg.taus:
            sel = [r for r in rows if r.k == k and r.tau == tau]
            margins = [r.margin for r in sel if r.margin is not None]
            print(
                f"k={k} tau={tau:g} energy {sel[0].grad_norm:.6g} -> {sel[-1].grad_norm:.6g}, "
                f"max |1-|m|^2| = {max(r.unit_deviation_nodes for r in sel):.3e}"
            )
            if margins:
                rhs = [r.rhs for r in sel if r.rhs is not None]
                worst = min(m / s for m, s in zip(margins, rhs))
                checks.add(f"energy inequality k={k} tau={tau:g}", worst >= -1e-6, f"min margin/RHS {worst:.3e}")
    _emit(rows, cfg, "energy")


def cmd_stability_report(cfg: ex.ExperimentConfig, checks: Checks) -> None:
    rows = stability_table()
    print("k  eta_k   eta_optimal   alpha_k  min Re delta/(1-eta z)  positive")
    for row in rows:
        print(
            f"{row['k']}  {row['eta']:.4f}  {row['eta_optimal']:.8f}  {row['alpha']:.4f}  "
            f"{row['min_boundary']: .3e}  {row['positive']}"
        )
    expected = {3: 0.0913, 4: 0.4041, 5: 4.4348}
    checks.add("alpha thresholds", all(alpha_threshold(k) == v for k, v in expected.items()))
    g_lo, g_hi = energy_constants(2)
    checks.add("G(2) eigenvalues", abs(g_lo - (3 - 2 * 2**0.5) / 4) < 1e-12 and abs(g_hi - (3 + 2 * 2**0.5) / 4) < 1e-12)
    for k in (1, 2):
        v = verify_g_inequality(k, G=g_matrix(k), rng=cfg.seed)
        print(f"G-inequality k={k}: max violation {v:.3e}")
    if cfg.output:
        Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
        with open(cfg.output, "w") as fh:
            fh.write("k,eta,eta_optimal,alpha,min_boundary,positive\n")
            for row in rows:
                fh.write(",".join(ex._fmt(row[c]) for c in ("k", "eta", "eta_optimal", "alpha", "min_boundary", "positive")) + "\n")
        print(f"wrote {cfg.output}")


def _smooth_m(x):
    a, b = np.pi * x[:, 0], np.pi * x[:, 1]
    return np.column_stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)])


def _smooth_v(x):
    return np.column_stack([np.cos(2 * x[:, 1]), x[:, 0] ** 2, np.sin(x[:, 0] + x[:, 1])])


def cmd_projection_test(cfg: ex.ExperimentConfig, checks: Checks) -> None:
    rng = np.random.default_rng(cfg.seed)
    space = FiniteElementSpace(build_box_mesh(2, 2, 1, 1.0), max(cfg.r))
    m = NodalField(space, rng.standard_normal((space.n_dofs, 3)))
    v = NodalField(space, rng.standard_normal((space.n_dofs, 3)))
    w = NodalField(space, rng.standard_normal((space.n_dofs, 3)))
    pv = project_tangent(space, m, v, cfg.tol)
    ppv = project_tangent(space, m, pv, cfg.tol)
    pw = project_tangent(space, m, w, cfg.tol)
    M = space.mass_matrix
    inner = lambda a, b: float(np.sum(a.values * (M @ b.values)))  # noqa: E731
    checks.add("idempotence", l2_norm(space, ppv.values - pv.values) <= 1e-8)
    checks.add("self-adjointness", abs(inner(pv, w) - inner(v, pw)) <= 1e-9)
    checks.add("stability", l2_norm(space, pv.values) <= l2_norm(space, v.values) + 1e-9)
    checks.add("tangent residual", tangent_residual(space, m, pv) <= 10 * cfg.tol)
    rows = []
    for r in cfg.r:
        for n in cfg.n_cells:
            sp_n = FiniteElementSpace(build_box_mesh(n, n, n, 1.0), r)
            e = projection_error(sp_n, _smooth_m, _smooth_v)
            rows.append(ex.ConvergenceRow("r", r, 1.0 / n, e, e, None, 0.0, 1))
    rows = ex.with_eoc(rows)
    for row in rows:
        eoc = "" if row.eoc is None else f"{row.eoc:.3f}"
        print(f"r={row.value} h={row.step:.4g} |(P_h-P)v|={row.l2_error:.6e} eoc={eoc}")
    _emit(rows, cfg, "convergence")


COMMANDS = {
    "converge-tau": cmd_converge_tau,
    "converge-h": cmd_converge_h,
    "energy": cmd_energy,
    "stability-report": cmd_stability_report,
    "projection-test": cmd_projection_test,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    checks = Checks()
    try:
        COMMANDS[args.command](cfg, checks)
    except (ex.ExperimentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if checks.ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
