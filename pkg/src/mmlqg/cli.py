"""Command-line front-end: solve, compare, check and simulate a model config.

Every command writes CSV files into ``--out`` and a short summary on stdout.
Exit status is 0 on success (or PASS), 1 on FAIL or numerical blow-up and
2 on a bad config or bad arguments.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import equivalence, nce, prob, sim
from .model import ConfigError, Model, TimeGrid, load_model, validate
from .nce import PicardDivergence
from .odeint import IntegrationError
from .sim import SimulationError

FLOAT_FMT = "%.17g"

COMMANDS = ("solve-nce", "solve-prob", "compare", "reduce-check", "simulate", "deviate")


class UsageError(ValueError):
    pass


def matrix_columns(name: str, shape: tuple[int, ...]) -> list[str]:
    """Header names for the row-major entries of a per-node block, 1-based."""
    if len(shape) == 1:
        return [f"{name}_{i + 1}" for i in range(shape[0])]
    return [f"{name}_{i + 1}_{j + 1}" for i in range(shape[0]) for j in range(shape[1])]


def write_csv(path: Path, columns: list[str], rows: np.ndarray, int_columns: int = 0) -> None:
    """Fixed-format CSV: 17 significant digits, '.' separator, '\\n' endings."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != len(columns):
        raise ValueError(f"{path.name}: {rows.shape[1] if rows.ndim == 2 else '?'} values "
                         f"for {len(columns)} columns")
    fmt = ["%d"] * int_columns + [FLOAT_FMT] * (len(columns) - int_columns)
    with open(path, "w", newline="\n") as fh:
        np.savetxt(fh, rows, fmt=fmt, delimiter=",", header=",".join(columns),
                   comments="", newline="\n")


def node_table(times: np.ndarray, blocks: list[tuple[str, np.ndarray]]):
    cols = ["t"]
    parts = [times[:, None]]
    for name, arr in blocks:
        cols += matrix_columns(name, arr.shape[1:])
        parts.append(arr.reshape(arr.shape[0], -1))
    return cols, np.hstack(parts)


def _parse_deltas(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--deltas: not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise UsageError("--deltas: empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmlqg", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", required=True, help="YAML or JSON model config")
    p.add_argument("--steps", type=int, default=10_000, help="RK4 steps on [0, T]")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--tol", type=float, default=None,
                   help="pass tolerance (default 1e-6 for compare, 1e-8 for reduce-check)")
    p.add_argument("--n", type=int, default=100, help="number of minor agents")
    p.add_argument("--dt", type=float, default=None, help="simulation step (default T/2000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1, help="Monte Carlo replications")
    p.add_argument("--c", type=float, default=1.0, help="initial minor state variance scale")
    p.add_argument("--deltas", default="-0.2,-0.1,0.1,0.2",
                   help="comma-separated gain perturbations for deviate; write --deltas=-0.1,0.1 "
                        "when the list starts with a minus sign")
    p.add_argument("--method", choices=("joint", "picard"), default="joint",
                   help="NCE solver mode")
    p.add_argument("--mean-field", choices=("ode", "empirical"), default="ode",
                   help="mean field seen by the controls in simulations")
    return p


def _sim_config(args, model: Model) -> sim.SimConfig:
    try:
        cfg = sim.SimConfig(N=args.n, dt=args.dt, seed=args.seed, replications=args.reps,
                            init_cov_scale=args.c, mean_field=args.mean_field)
        cfg.steps(model.T)
        return cfg
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _equilibrium(model: Model, grid: TimeGrid, method: str):
    sol = nce.solve(model, grid, method=method)
    return sol, nce.assemble_laws(model, sol)


def cmd_solve_nce(model, grid, args, out: Path) -> int:
    sol = nce.solve(model, grid, method=args.method)
    cols, rows = node_table(grid.nodes, [
        ("Pi0", sol.Pi0), ("Pi11", sol.Pi11), ("Pi12bar", sol.Pi12bar), ("s0", sol.s0),
        ("s1", sol.s1), ("Abar", sol.Abar), ("Gbar", sol.Gbar), ("mbar", sol.mbar)])
    write_csv(out / "nce_gains.csv", cols, rows)
    extra = f" picard_iterations={sol.iterations}" if args.method == "picard" else ""
    print(f"solve-nce K={grid.K} method={args.method}{extra} -> {out / 'nce_gains.csv'}")
    return 0


def cmd_solve_prob(model, grid, args, out: Path) -> int:
    sol = prob.solve(model, grid)
    cols, rows = node_table(grid.nodes, [
        ("K", sol.K), ("S", sol.S), ("Sbb", sol.Sbb), ("k", sol.k), ("sbar", sol.sbar)])
    write_csv(out / "cw_gains.csv", cols, rows)
    print(f"solve-prob K={grid.K} -> {out / 'cw_gains.csv'}")
    return 0


def cmd_compare(model, grid, args, out: Path) -> int:
    tol = 1e-6 if args.tol is None else args.tol
    rep = equivalence.compare(model, grid, tol=tol, seed=args.seed)
    names = ("dK", "dS", "dSbb", "dk", "dsbar")
    cols = ["t"] + list(names)
    rows = np.column_stack([grid.nodes] + [rep.per_node[k] for k in names])
    write_csv(out / "equivalence.csv", cols, rows)
    detail = " ".join(f"{k}={v:.3e}" for k, v in rep.discrepancies.items())
    print(f"{'PASS' if rep.passed else 'FAIL'} tol={tol:g} {detail}")
    return 0 if rep.passed else 1


def cmd_reduce_check(model, grid, args, out: Path) -> int:
    tol = 1e-8 if args.tol is None else args.tol
    rep = equivalence.check_theorem1(model, grid, tol=tol, seed=args.seed)
    rows = np.column_stack([grid.nodes, rep.per_node["d_row"], rep.per_node["d_s"]])
    write_csv(out / "reduction.csv", ["t", "d_row", "d_s"], rows)
    print(f"{'PASS' if rep.passed else 'FAIL'} tol={tol:g} d_row={rep.d_row:.3e} "
          f"d_s={rep.d_s:.3e} identity_tol={rep.identity_tol:g} "
          f"ric12={rep.identity_ric12:.3e} ric3={rep.identity_ric3:.3e} "
          f"off={rep.identity_off:.3e}")
    return 0 if rep.passed else 1


def cmd_simulate(model, grid, args, out: Path) -> int:
    cfg = _sim_config(args, model)
    _, laws = _equilibrium(model, grid, args.method)
    res = sim.simulate(model, laws, cfg)
    n = model.dims.n
    cols = (["t"] + matrix_columns("x0", (n,)) + matrix_columns("xN", (n,))
            + matrix_columns("xbar", (n,)))
    write_csv(out / "paths.csv", cols,
              np.column_stack([res.times, res.x0[0], res.xN[0], res.xbar[0]]))
    R, N = res.J.shape
    rep_idx = np.repeat(np.arange(R), N + 1)
    agent = np.tile(np.arange(N + 1), R)
    cost = np.column_stack([res.J0, res.J]).ravel()
    write_csv(out / "costs.csv", ["replication", "agent", "cost"],
              np.column_stack([rep_idx, agent, cost]), int_columns=2)
    lo, hi = res.gap_ci95
    print(f"simulate N={cfg.N} reps={cfg.replications} mean_gap={res.mean_gap:.6g} "
          f"ci95=[{lo:.6g}, {hi:.6g}] mean_J0={res.J0.mean():.6g} mean_J={res.J.mean():.6g}")
    return 0


def cmd_deviate(model, grid, args, out: Path) -> int:
    cfg = _sim_config(args, model)
    deltas = _parse_deltas(args.deltas)
    _, laws = _equilibrium(model, grid, args.method)
    table = sim.deviation_test(model, laws, cfg, deltas)
    write_csv(out / "deviation.csv", ["delta", "mean_cost_change"],
              np.array(table.rows(), dtype=float).reshape(-1, 2))
    print(f"deviate N={cfg.N} reps={cfg.replications} J1_baseline={table.J1_baseline:.6g} "
          f"most_negative_change={table.most_negative:.6g}")
    return 0


HANDLERS = {
    "solve-nce": cmd_solve_nce,
    "solve-prob": cmd_solve_prob,
    "compare": cmd_compare,
    "reduce-check": cmd_reduce_check,
    "simulate": cmd_simulate,
    "deviate": cmd_deviate,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        model = load_model(args.model)
        report = validate(model)
        if not report.ok:
            raise ConfigError("model", "; ".join(report.violations))
        if args.steps < 1:
            raise UsageError("--steps must be positive")
        grid = TimeGrid(model.T, args.steps)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](model, grid, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, PicardDivergence, SimulationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
