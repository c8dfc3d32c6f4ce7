"""Finite-population Monte Carlo under given feedback laws.

Euler-Maruyama paths for the major agent and ``N`` minor agents with the
empirical average ``x^(N)`` entering dynamics and costs. Minor and major
controls read the mean field from the ODE path ``xbar`` driven by the
realised major state (or, in ``"empirical"`` mode, from ``x^(N)``).

Each replication and each agent draws from its own Philox stream keyed by
``(seed, replication, agent)``: agent 0 is the major agent, minors are
``1..N``. Results do not depend on worker count or scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import FeedbackLaw, Model
from .nce import NceSolution


class SimulationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class SimConfig:
    N: int = 100
    dt: float | None = None  # defaults to T / 2000
    seed: int = 0
    replications: int = 1
    init_cov_scale: float = 1.0
    mean_field: str = "ode"
    workers: int | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ValueError(f"replications must be a positive integer, got {self.replications}")
        if self.init_cov_scale < 0:
            raise ValueError("init_cov_scale must be nonnegative")
        if self.mean_field not in ("ode", "empirical"):
            raise ValueError(f"mean_field must be 'ode' or 'empirical', got {self.mean_field!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    def steps(self, T: float) -> int:
        if self.dt is None:
            return 2000
        s = T / self.dt
        if self.dt <= 0 or abs(s - round(s)) > 1e-9 * max(1.0, s):
            raise ValueError(f"dt={self.dt} does not divide T={T}")
        return int(round(s))

    def worker_count(self) -> int:
        cap = os.environ.get("MMLQG_THREADS")
        want = self.workers if self.workers is not None else min(4, os.cpu_count() or 1)
        if cap:
            want = min(want, max(1, int(cap)))
        return max(1, min(want, self.replications))


@dataclass
class SimResult:
    """Paths are ``(replications, nodes, n)``; costs ``J`` are ``(replications, N)``."""

    times: np.ndarray
    x0: np.ndarray
    xN: np.ndarray
    xbar: np.ndarray
    J0: np.ndarray
    J: np.ndarray
    gap: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gap = np.linalg.norm(self.xN - self.xbar, axis=2).max(axis=1)

    @property
    def mean_gap(self) -> float:
        return float(self.gap.mean())

    @property
    def gap_ci95(self) -> tuple[float, float]:
        m = self.gap.mean()
        if self.gap.size < 2:
            return (m, m)
        half = 1.96 * self.gap.std(ddof=1) / np.sqrt(self.gap.size)
        return (float(m - half), float(m + half))


def law_meanfield_coefficients(model: Model, minor: FeedbackLaw, times: np.ndarray):
    """Mean-field drift ``(Abar, Gbar, mbar)`` produced when all minors use ``minor``."""
    l0, l1, l2, l3 = minor.gains_at(times)
    B = model.B
    Abar = model.A + model.F + B @ (l1 + l3)
    Gbar = model.G + B @ l2
    mbar = l0 @ B.T
    return Abar, Gbar, mbar


def _interp_nodes(grid, values, times):
    s = times / grid.h
    near = np.rint(s)
    s = np.where(np.abs(s - near) <= 1e-9, near, s)
    k = np.clip(np.floor(s).astype(int), 0, grid.K - 1)
    w = (s - k).reshape((-1,) + (1,) * (values.ndim - 1))
    return np.where(w == 0.0, values[k], (1.0 - w) * values[k] + w * values[k + 1])


def meanfield_path(model: Model, nce: NceSolution, x0_path: np.ndarray, times: np.ndarray,
                   xi: np.ndarray | None = None) -> np.ndarray:
    """Forward-Euler ``xbar`` on ``times`` driven by the major path ``x0_path``."""
    times = np.asarray(times, dtype=float)
    x0_path = np.asarray(x0_path, dtype=float)
    if x0_path.shape[0] != times.size:
        raise ValueError("x0 path and time grid differ in length")
    dt = np.diff(times)
    if times[0] != 0.0 or abs(times[-1] - nce.grid.T) > 1e-12 or np.ptp(dt) > 1e-9 * dt[0]:
        raise ValueError("simulation grid must be uniform on [0, T]")
    if not nce.has_offsets:
        raise ValueError("mean-field offset needs a solution with offsets")
    Abar = _interp_nodes(nce.grid, nce.Abar, times)
    Gbar = _interp_nodes(nce.grid, nce.Gbar, times)
    mbar = _interp_nodes(nce.grid, nce.mbar, times)
    out = np.empty_like(x0_path)
    out[0] = model.xi if xi is None else xi
    for k in range(times.size - 1):
        out[k + 1] = out[k] + (Abar[k] @ out[k] + Gbar[k] @ x0_path[k] + mbar[k]) * dt[k]
    return out


def _stream(seed: int, rep: int, agent: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(rep, agent))))


class _Context:
    def __init__(self, model: Model, laws, cfg: SimConfig, deviation=None):
        major, minor = laws
        if major.role != "major" or minor.role != "minor":
            raise ValueError("laws must be (major, minor)")
        if abs(major.grid.T - model.T) > 1e-12 or abs(minor.grid.T - model.T) > 1e-12:
            raise ValueError("law grids do not cover the model horizon")
        self.model = model
        self.cfg = cfg
        self.S = cfg.steps(model.T)
        self.dt = model.T / self.S
        self.times = np.arange(self.S + 1) * self.dt
        self.times[-1] = model.T
        self.major = major.gains_at(self.times)
        self.minor = minor.gains_at(self.times)
        self.Abar, self.Gbar, self.mbar = law_meanfield_coefficients(model, minor, self.times)
        self.deviation = None if deviation is None else np.asarray(deviation, dtype=float)
        n, m = model.dims.n, model.dims.m
        self.E = np.eye(m, n)

    def noise(self, rep: int):
        """Initial minor states and scaled Wiener increments for one replication."""
        md, cfg = self.model.dims, self.cfg
        S, sq = self.S, np.sqrt(self.dt)
        g0 = _stream(cfg.seed, rep, 0)
        dW0 = g0.standard_normal((S, md.r)) * sq
        X0 = np.empty((cfg.N, md.n))
        dW = np.empty((cfg.N, S, md.r))
        c = np.sqrt(cfg.init_cov_scale)
        for i in range(cfg.N):
            z = _stream(cfg.seed, rep, i + 1).standard_normal(md.n + S * md.r)
            X0[i] = self.model.xi + c * z[:md.n]
            dW[i] = z[md.n:].reshape(S, md.r) * sq
        return X0, dW0, dW

    def chunks(self) -> list[list[int]]:
        # keep the pre-drawn noise of one chunk around 10^7 doubles
        per = max(1, int(1e7 // (self.cfg.N * self.S * max(self.model.dims.n, self.model.dims.r))))
        reps = list(range(self.cfg.replications))
        return [reps[i:i + per] for i in range(0, len(reps), per)]

    def run(self, reps: list[int]):
        """Simulate a batch of replications; arrays lead with (replication, variant)."""
        m = self.model
        S, dt = self.S, self.dt
        n = m.dims.n
        deltas = self.deviation if self.deviation is not None else np.zeros(1)
        V, R, N = deltas.size, len(reps), self.cfg.N
        draws = [self.noise(r) for r in reps]
        X_init = np.stack([d[0] for d in draws])                      # (R, N, n)
        n0 = np.stack([d[1] for d in draws]) @ m.sigma0.T              # (R, S, n)
        nX = np.stack([d[2] for d in draws]) @ m.sigma.T               # (R, N, S, n)
        del draws
        l00, l10, l20 = self.major
        l0, l1, l2, l3 = self.minor
        empirical = self.cfg.mean_field == "empirical"

        x0 = np.broadcast_to(m.x0_init, (R, V, n)).copy()
        X = np.broadcast_to(X_init[:, None], (R, V, N, n)).copy()
        xbar = np.broadcast_to(m.xi, (R, V, n)).copy()
        px0 = np.empty((R, V, S + 1, n))
        pxN = np.empty_like(px0)
        pxb = np.empty_like(px0)
        J0 = np.zeros((R, V))
        J = np.zeros((R, V, N))
        dev = deltas[None, :, None]
        deviating = bool(np.any(deltas != 0.0))
        for k in range(S + 1):
            xN = X.mean(axis=2)
            mf = xN if empirical else xbar
            px0[:, :, k], pxN[:, :, k], pxb[:, :, k] = x0, xN, xbar
            u0 = l00[k] + x0 @ l10[k].T + mf @ l20[k].T
            U = l0[k] + X @ l1[k].T + (x0 @ l2[k].T + mf @ l3[k].T)[:, :, None, :]
            if deviating:
                U[:, :, 0, :] += dev * (X[:, :, 0, :] @ self.E.T)
            e0 = x0 - xN @ m.H0.T - m.eta0
            e = X - (x0 @ m.H.T + xN @ m.Hhat.T + m.eta)[:, :, None, :]
            w = 0.5 * dt if k in (0, S) else dt
            J0 += 0.5 * w * (np.einsum("...i,ij,...j->...", e0, m.Q0, e0)
                             + np.einsum("...i,ij,...j->...", u0, m.R0, u0))
            J += 0.5 * w * (np.einsum("...i,ij,...j->...", e, m.Q, e)
                            + np.einsum("...i,ij,...j->...", U, m.R, U))
            if k == S:
                break
            x0_next = x0 + (x0 @ m.A0.T + xN @ m.F0.T + u0 @ m.B0.T) * dt + n0[:, None, k]
            X = (X + (X @ m.A.T + (xN @ m.F.T + x0 @ m.G.T)[:, :, None, :] + U @ m.B.T) * dt
                 + nX[:, None, :, k])
            xbar = xbar + (xbar @ self.Abar[k].T + x0 @ self.Gbar[k].T + self.mbar[k]) * dt
            x0 = x0_next
            if not np.isfinite(X.sum() + x0.sum()):
                raise SimulationError(f"non-finite state at step {k + 1} (replications {reps})")
        return px0, pxN, pxb, J0, J


def _run_all(ctx: _Context):
    """Concatenate chunk results along the replication axis, in replication order."""
    chunks = ctx.chunks()
    workers = min(ctx.cfg.worker_count(), len(chunks))
    if workers == 1:
        out = [ctx.run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(ctx.run, chunks))
    return [np.concatenate([o[i] for o in out]) for i in range(5)]


def simulate(model: Model, laws: tuple[FeedbackLaw, FeedbackLaw], cfg: SimConfig) -> SimResult:
    ctx = _Context(model, laws, cfg)
    x0, xN, xbar, J0, J = _run_all(ctx)
    return SimResult(times=ctx.times, x0=x0[:, 0], xN=xN[:, 0], xbar=xbar[:, 0],
                     J0=J0[:, 0], J=J[:, 0])


@dataclass
class DeviationTable:
    """Agent 1 switches its own-state gain to ``l1 + delta * I``; everybody else stays put.

    ``change[j]`` is the replication mean of ``J_1(delta_j) - J_1(0)`` under
    common random numbers.
    """

    deltas: np.ndarray
    change: np.ndarray
    per_replication: np.ndarray
    J1_baseline: float

    @property
    def most_negative(self) -> float:
        return float(min(0.0, self.change.min()))

    def rows(self):
        return list(zip(self.deltas.tolist(), self.change.tolist()))


def deviation_test(model: Model, laws, cfg: SimConfig, perturbations) -> DeviationTable:
    deltas = np.asarray(list(perturbations), dtype=float)
    batch = np.concatenate([[0.0], deltas])
    ctx = _Context(model, laws, cfg, deviation=batch)
    J1 = _run_all(ctx)[4][:, :, 0]  # (reps, 1 + len(deltas))
    diff = J1[:, 1:] - J1[:, :1]
    return DeviationTable(deltas, diff.mean(axis=0), diff, float(J1[:, 0].mean()))
