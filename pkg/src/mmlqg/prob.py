"""Probabilistic (stochastic maximum principle) consistency equations.

The equations are written in the adjoint-ansatz convention of the
probabilistic formulation: costs carry no factor 1/2, so its weights are
half of ours (``Q0cw = Q0 / 2`` and so on), the tracking weight on the mean
field is called ``H1``, and the major extended state is ordered
``[xbar; x0]``. :class:`CwParameters` performs that translation once, and
every ``2 * R`` below is literally twice a translated weight.

Three printed terms are dimensionally or structurally inconsistent with the
rest of the system and are implemented in their consistent form: the
quadratic term of the ``K`` equation uses ``Bbar0`` on both sides, the
drift of the ``k`` equation is the transpose of the closed-loop ``L``
matrix, and the mean-field offset term of the ``sbar`` equation uses
``Bbar`` (the minor input matrix), as the ``k`` equation does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FeedbackLaw, Model, TimeGrid
from .odeint import (BlockLayout, HalfGridSeries, OdeField, OdeTrajectory,
                     field_at_nodes, integrate_backward)


@dataclass(frozen=True)
class CwParameters:
    L0: np.ndarray
    L: np.ndarray
    D0: np.ndarray
    D: np.ndarray
    Q0: np.ndarray
    Q: np.ndarray
    R0: np.ndarray
    R: np.ndarray
    H1: np.ndarray

    @classmethod
    def from_model(cls, model: Model) -> "CwParameters":
        return cls(L0=model.A0, L=model.A, D0=model.sigma0, D=model.sigma,
                   Q0=model.Q0 / 2.0, Q=model.Q / 2.0, R0=model.R0 / 2.0,
                   R=model.R / 2.0, H1=model.Hhat)


@dataclass(frozen=True)
class CwSystem:
    """Constant pieces of the major extended system in ``[xbar; x0]`` order."""

    Bbar: np.ndarray
    Bbar0: np.ndarray
    Fbb0: np.ndarray
    f0: np.ndarray
    params: CwParameters

    @classmethod
    def from_model(cls, model: Model) -> "CwSystem":
        p = CwParameters.from_model(model)
        n, m = model.dims.n, model.dims.m
        H0, Q0, eta0 = model.H0, p.Q0, model.eta0
        Fbb0 = np.block([[H0.T @ Q0 @ H0, -H0.T @ Q0], [-Q0 @ H0, Q0]])
        f0 = np.concatenate([H0.T @ Q0 @ eta0, -Q0 @ eta0])
        return cls(np.vstack([model.B, np.zeros((n, m))]),
                   np.vstack([np.zeros((n, m)), model.B0]), Fbb0, f0, p)

    def Lbb(self, model: Model, S: np.ndarray) -> np.ndarray:
        p = self.params
        top_left = p.L + model.F - model.B @ np.linalg.solve(2.0 * p.R, model.B.T) @ S
        return np.block([[top_left, model.G], [model.F0, p.L0]])


@dataclass(frozen=True)
class ProbSolution:
    grid: TimeGrid
    K: np.ndarray
    S: np.ndarray
    Sbb: np.ndarray
    k: np.ndarray | None = None
    sbar: np.ndarray | None = None

    @property
    def has_offsets(self) -> bool:
        return self.k is not None


class _Coeffs:
    def __init__(self, model: Model):
        sysm = CwSystem.from_model(model)
        p = sysm.params
        n = model.dims.n
        self.n = n
        self.model = model
        self.sys = sysm
        self.L = p.L
        self.Lt = p.L.T.copy()
        self.Brb = model.B @ np.linalg.solve(2.0 * p.R, model.B.T)  # B (2R)^-1 B'
        self.Bbar_rb = sysm.Bbar @ np.linalg.solve(2.0 * p.R, model.B.T)  # Bbar (2R)^-1 B'
        self.B0_rb = sysm.Bbar0 @ np.linalg.solve(2.0 * p.R0, sysm.Bbar0.T)
        self.two_F0 = 2.0 * sysm.Fbb0
        self.two_f0 = 2.0 * sysm.f0
        self.two_Q = 2.0 * p.Q
        self.two_Q_eta = 2.0 * p.Q @ model.eta
        self.src_Sbb_const = np.hstack([-2.0 * p.Q @ p.H1, -2.0 * p.Q @ model.H])
        self.LFG = np.block([[p.L + model.F, model.G], [model.F0, p.L0]])

    def closed_loop(self, S, Sbb):
        """``Lbb - Bbar (2R)^-1 B' Sbb`` for the current ``S`` and ``Sbb``."""
        n = self.n
        Lc = self.LFG.copy()
        Lc[:n, :n] -= self.Brb @ S
        Lc[:n, :] -= self.Brb @ Sbb
        return Lc


def gain_layout(n: int) -> BlockLayout:
    return BlockLayout((("K", 2 * n, 2 * n), ("Sbb", n, 2 * n), ("S", n, n)))


def offset_layout(n: int) -> BlockLayout:
    return BlockLayout((("k", 2 * n, None), ("sbar", n, None)))


def gain_field(model: Model) -> OdeField:
    c = _Coeffs(model)
    layout = gain_layout(model.dims.n)
    F, G = model.F, model.G

    def fn(t, y):
        b = layout.unpack(y)
        K, Sbb, S = b["K"], b["Sbb"], b["S"]
        Lc = c.closed_loop(S, Sbb)
        rK = K @ Lc - K @ c.B0_rb @ K + Lc.T @ K + c.two_F0
        rSbb = (Sbb @ Lc - Sbb @ c.B0_rb @ K + (c.Lt - S @ c.Brb) @ Sbb
                + np.hstack([S @ F, S @ G]) + c.src_Sbb_const)
        rS = S @ c.L + c.Lt @ S - S @ c.Brb @ S + c.two_Q
        return -np.concatenate((rK.ravel(), rSbb.ravel(), rS.ravel()))

    return OdeField(fn, layout)


def solve_cw_gains(model: Model, grid: TimeGrid) -> ProbSolution:
    """``K``, ``Sbb`` and ``S`` by one stacked backward pass, all zero at ``T``."""
    field = gain_field(model)
    traj = integrate_backward(field, field.layout.zeros(), grid, symmetrize=("K", "S"))
    return ProbSolution(grid, traj.block("K").copy(), traj.block("S").copy(),
                        traj.block("Sbb").copy())


def solve_cw_offsets(model: Model, gains: ProbSolution, grid: TimeGrid | None = None):
    grid = grid or gains.grid
    if grid != gains.grid:
        raise ValueError("offsets must be solved on the grid of the gains")
    c = _Coeffs(model)
    n = model.dims.n
    glay = gain_layout(n)
    K1 = grid.K + 1
    gtraj = OdeTrajectory(grid, glay, np.concatenate(
        [gains.K.reshape(K1, -1), gains.Sbb.reshape(K1, -1), gains.S.reshape(K1, -1)], axis=1))
    dg = field_at_nodes(gain_field(model), gtraj)
    half = {name: HalfGridSeries.from_nodes(grid, gtraj.block(name), glay.view(dg, name))
            for name in glay.names}
    layout = offset_layout(n)

    def fn(t, y):
        j = half["K"].index(t)
        K, Sbb, S = half["K"].values[j], half["Sbb"].values[j], half["S"].values[j]
        b = layout.unpack(y)
        k, sbar = b["k"], b["sbar"]
        Lc = c.closed_loop(S, Sbb)
        rk = Lc.T @ k - K @ (c.B0_rb @ k) - K @ (c.Bbar_rb @ sbar) + c.two_f0
        rs = (c.Lt @ sbar - S @ (c.Brb @ sbar) - Sbb @ (c.B0_rb @ k)
              - Sbb @ (c.Bbar_rb @ sbar) - c.two_Q_eta)
        return -np.concatenate((rk, rs))

    traj = integrate_backward(OdeField(fn, layout), layout.zeros(), grid)
    return traj.block("k").copy(), traj.block("sbar").copy()


def solve(model: Model, grid: TimeGrid) -> ProbSolution:
    g = solve_cw_gains(model, grid)
    k, sbar = solve_cw_offsets(model, g, grid)
    return ProbSolution(grid, g.K, g.S, g.Sbb, k, sbar)


def eval_adjoint(sol: ProbSolution, node: int, xbar, x0, xi):
    """Adjoint ansatz values at a node: ``(K [xbar; x0] + k, Sbb [xbar; x0] + S xi + sbar)``."""
    z = np.concatenate([np.asarray(xbar, float), np.asarray(x0, float)])
    major = sol.K[node] @ z + sol.k[node]
    minor = sol.Sbb[node] @ z + sol.S[node] @ np.asarray(xi, float) + sol.sbar[node]
    return major, minor


def assemble_cw_laws(model: Model, sol: ProbSolution) -> tuple[FeedbackLaw, FeedbackLaw]:
    """Feedback laws from the adjoint ansatz.

    The minor adjoint enters with a minus sign, ``alpha = -(2R)^-1 B' Y``,
    the descent direction of the minor cost. With the printed plus sign the
    scalar law would push states away from their targets.
    """
    if not sol.has_offsets:
        raise ValueError("solution has no offsets; solve them first")
    p = CwParameters.from_model(model)
    n = model.dims.n
    M0 = np.linalg.solve(2.0 * p.R0, model.B0.T)
    M1 = np.linalg.solve(2.0 * p.R, model.B.T)
    major = FeedbackLaw(
        "major", sol.grid,
        l0=-(sol.k[:, n:] @ M0.T),
        l1=-(M0 @ sol.K[:, n:, n:]),
        l2=-(M0 @ sol.K[:, n:, :n]),
    )
    minor = FeedbackLaw(
        "minor", sol.grid,
        l0=-(sol.sbar @ M1.T),
        l1=-(M1 @ sol.S),
        l2=-(M1 @ sol.Sbb[:, :, n:]),
        l3=-(M1 @ sol.Sbb[:, :, :n]),
    )
    return major, minor
