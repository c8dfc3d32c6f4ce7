"""Nash certainty equivalence: consistency equations and equilibrium laws.

The reduced system is integrated as one stacked backward pass: the
mean-field coefficients ``Abar``, ``Gbar`` and ``mbar`` are algebraic in the
current Riccati and offset blocks, so they are rebuilt at every RK4 stage.
A Picard mode that freezes those coefficients between sweeps is provided as
an independent check of the stacked pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FeedbackLaw, Model, TimeGrid
from .odeint import (BlockLayout, HalfGridSeries, OdeField, OdeTrajectory,
                     field_at_nodes, integrate_backward)


class PicardDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtendedMajorSystem:
    """Major state extended by the mean field, ``X0 = [x0; xbar]``."""

    Abb0: np.ndarray
    Bbb0: np.ndarray
    Mbb0: np.ndarray
    Sigma0: np.ndarray
    Qbb0: np.ndarray
    etabar0: np.ndarray


@dataclass(frozen=True)
class ExtendedMinorSystem:
    """Minor state extended by the major state and the mean field, ``[x_i; x0; xbar]``."""

    Abb: np.ndarray
    Bbb: np.ndarray
    Mbb: np.ndarray
    Sigma: np.ndarray
    Qbb: np.ndarray
    etabar: np.ndarray


def extended_major(model: Model, Abar, Gbar, mbar) -> ExtendedMajorSystem:
    n, m, r = model.dims.n, model.dims.m, model.dims.r
    Abb0 = np.block([[model.A0, model.F0], [Gbar, Abar]])
    Bbb0 = np.vstack([model.B0, np.zeros((n, m))])
    Mbb0 = np.concatenate([np.zeros(n), mbar])
    Sigma0 = np.vstack([model.sigma0, np.zeros((n, r))])
    L = np.hstack([np.eye(n), -model.H0])
    return ExtendedMajorSystem(Abb0, Bbb0, Mbb0, Sigma0, L.T @ model.Q0 @ L, L.T @ model.Q0 @ model.eta0)


def extended_minor(model: Model, major: ExtendedMajorSystem, Pi0, s0) -> ExtendedMinorSystem:
    n, m, r = model.dims.n, model.dims.m, model.dims.r
    S0 = major.Bbb0 @ np.linalg.solve(model.R0, major.Bbb0.T)
    Abb = np.block([[model.A, np.hstack([model.G, model.F])],
                    [np.zeros((2 * n, n)), major.Abb0 - S0 @ Pi0]])
    Bbb = np.vstack([model.B, np.zeros((2 * n, m))])
    Mbb = np.concatenate([np.zeros(n), major.Mbb0 - S0 @ s0])
    Sigma = np.block([[model.sigma, np.zeros((n, r))], [np.zeros((2 * n, r)), major.Sigma0]])
    L = np.hstack([np.eye(n), -model.H, -model.Hhat])
    return ExtendedMinorSystem(Abb, Bbb, Mbb, Sigma, L.T @ model.Q @ L, L.T @ model.Q @ model.eta)


class _Coeffs:
    """Time-constant products shared by every field evaluation."""

    def __init__(self, model: Model):
        n = model.dims.n
        self.n = n
        self.model = model
        self.W = model.B @ np.linalg.solve(model.R, model.B.T)
        ext = extended_major(model, np.zeros((n, n)), np.zeros((n, n)), np.zeros(n))
        self.S0 = ext.Bbb0 @ np.linalg.solve(model.R0, ext.Bbb0.T)
        self.Qbb0 = ext.Qbb0
        self.etabar0 = ext.etabar0
        self.GF = np.hstack([model.G, model.F])
        self.QHH = model.Q @ np.hstack([model.H, model.Hhat])
        self.Qeta = model.Q @ model.eta
        self.AF = model.A + model.F
        self.At = model.A.T.copy()
        mino = extended_minor(model, ext, np.zeros((2 * n, 2 * n)), np.zeros(2 * n))
        self.Qbb = mino.Qbb
        self.etabar = mino.etabar
        self.Wbb = np.zeros((3 * n, 3 * n))
        self.Wbb[:n, :n] = self.W

    def abar_gbar(self, Pi11, Pi12bar):
        n = self.n
        Abar = self.AF - self.W @ (Pi11 + Pi12bar[..., n:])
        Gbar = self.model.G - self.W @ Pi12bar[..., :n]
        return Abar, Gbar

    def mbar(self, s1):
        return -(s1 @ self.W.T)

    def abb0(self, Abar, Gbar):
        n = self.n
        out = np.empty((2 * n, 2 * n))
        out[:n, :n] = self.model.A0
        out[:n, n:] = self.model.F0
        out[n:, :n] = Gbar
        out[n:, n:] = Abar
        return out


def gain_layout(n: int) -> BlockLayout:
    return BlockLayout((("Pi0", 2 * n, 2 * n), ("Pi12bar", n, 2 * n), ("Pi11", n, n)))


def offset_layout(n: int) -> BlockLayout:
    return BlockLayout((("s0", 2 * n, None), ("s1", n, None)))


def full_layout(n: int) -> BlockLayout:
    return BlockLayout((("Pi0", 2 * n, 2 * n), ("Pi", 3 * n, 3 * n),
                        ("s0", 2 * n, None), ("s", 3 * n, None)))


@dataclass(frozen=True)
class NceSolution:
    """Node-indexed trajectories of the reduced consistency system.

    ``Pi12bar`` holds ``[Pi12, Pi13]``: the minor gain blocks acting on the
    major state and on the mean field. Offsets are ``None`` for a gain-only
    solve.
    """

    grid: TimeGrid
    Pi0: np.ndarray
    Pi11: np.ndarray
    Pi12bar: np.ndarray
    Abar: np.ndarray
    Gbar: np.ndarray
    s0: np.ndarray | None = None
    s1: np.ndarray | None = None
    mbar: np.ndarray | None = None
    iterations: int = 0

    @property
    def has_offsets(self) -> bool:
        return self.s0 is not None

    def with_offsets(self, s0, s1, mbar) -> "NceSolution":
        return NceSolution(self.grid, self.Pi0, self.Pi11, self.Pi12bar, self.Abar,
                           self.Gbar, s0, s1, mbar, self.iterations)


@dataclass(frozen=True)
class FullNceSolution:
    """Un-reduced minor Riccati ``Pi`` (3n x 3n) and offset ``s`` (3n)."""

    grid: TimeGrid
    Pi0: np.ndarray
    Pi: np.ndarray
    s0: np.ndarray
    s: np.ndarray


def _pi11_rhs(c: _Coeffs, Pi11):
    A = c.model.A
    return Pi11 @ A + c.At @ Pi11 - Pi11 @ c.W @ Pi11 + c.model.Q


def solve_pi11(model: Model, grid: TimeGrid) -> np.ndarray:
    """Standalone minor Riccati, ``Pi11(T) = 0``; returns ``(K+1, n, n)``."""
    c = _Coeffs(model)
    n = model.dims.n
    layout = BlockLayout((("Pi11", n, n),))

    def fn(t, y):
        return -_pi11_rhs(c, y.reshape(n, n)).ravel()

    traj = integrate_backward(OdeField(fn, layout), layout.zeros(), grid, symmetrize=("Pi11",))
    return traj.block("Pi11")


def _gain_rhs(c: _Coeffs, Pi0, Pi12bar, Pi11, Abb0):
    """Right-hand sides of ``-dPi0/dt``, ``-dPi12bar/dt``, ``-dPi11/dt``."""
    Pi0S0 = Pi0 @ c.S0
    rPi0 = Pi0 @ Abb0 + Abb0.T @ Pi0 - Pi0S0 @ Pi0 + c.Qbb0
    Acl0 = Abb0 - c.S0 @ Pi0
    rP12 = (Pi11 @ c.GF + c.At @ Pi12bar + Pi12bar @ Acl0
            - Pi11 @ c.W @ Pi12bar - c.QHH)
    return rPi0, rP12, _pi11_rhs(c, Pi11)


def gain_field(model: Model) -> OdeField:
    c = _Coeffs(model)
    layout = gain_layout(model.dims.n)

    def fn(t, y):
        b = layout.unpack(y)
        Abar, Gbar = c.abar_gbar(b["Pi11"], b["Pi12bar"])
        r0, r12, r11 = _gain_rhs(c, b["Pi0"], b["Pi12bar"], b["Pi11"], c.abb0(Abar, Gbar))
        return -np.concatenate((r0.ravel(), r12.ravel(), r11.ravel()))

    return OdeField(fn, layout)


def _offset_rhs(c: _Coeffs, Pi0, Pi12bar, Pi11, Abb0, s0, s1):
    mbar = c.mbar(s1)
    n = c.n
    Mbb0 = np.concatenate((np.zeros(n), mbar))
    r0 = Abb0.T @ s0 - Pi0 @ (c.S0 @ s0) + Pi0 @ Mbb0 - c.etabar0
    r1 = c.At @ s1 - Pi11 @ (c.W @ s1) - c.Qeta + Pi12bar @ (Mbb0 - c.S0 @ s0)
    return r0, r1


def _gains_from_trajectory(traj: OdeTrajectory, c: _Coeffs) -> NceSolution:
    Pi0 = traj.block("Pi0").copy()
    Pi11 = traj.block("Pi11").copy()
    Pi12bar = traj.block("Pi12bar").copy()
    Abar, Gbar = c.abar_gbar(Pi11, Pi12bar)
    return NceSolution(traj.grid, Pi0, Pi11, Pi12bar, Abar, Gbar)


def solve_reduced(model: Model, grid: TimeGrid) -> NceSolution:
    """Gain part of the reduced system in one stacked backward pass."""
    c = _Coeffs(model)
    field = gain_field(model)
    traj = integrate_backward(field, field.layout.zeros(), grid, symmetrize=("Pi0", "Pi11"))
    return _gains_from_trajectory(traj, c)


def _gain_half_grid(model: Model, gains: NceSolution) -> dict[str, HalfGridSeries]:
    layout = gain_layout(model.dims.n)
    values = np.concatenate([gains.Pi0.reshape(gains.grid.K + 1, -1),
                             gains.Pi12bar.reshape(gains.grid.K + 1, -1),
                             gains.Pi11.reshape(gains.grid.K + 1, -1)], axis=1)
    traj = OdeTrajectory(gains.grid, layout, values)
    dvalues = field_at_nodes(gain_field(model), traj)
    return {name: HalfGridSeries.from_nodes(gains.grid, traj.block(name),
                                            layout.view(dvalues, name))
            for name in layout.names}


def solve_offsets(model: Model, gains: NceSolution, grid: TimeGrid | None = None):
    """Offsets ``s0``, ``s1`` and ``mbar`` for already solved gains.

    Gain values at step midpoints come from Hermite interpolation with the
    gain field's own derivatives, so the offsets keep RK4 accuracy.
    """
    grid = grid or gains.grid
    if grid != gains.grid:
        raise ValueError("offsets must be solved on the grid of the gains")
    c = _Coeffs(model)
    half = _gain_half_grid(model, gains)
    layout = offset_layout(model.dims.n)

    def fn(t, y):
        j = half["Pi0"].index(t)
        Pi0, Pi12bar, Pi11 = half["Pi0"].values[j], half["Pi12bar"].values[j], half["Pi11"].values[j]
        Abar, Gbar = c.abar_gbar(Pi11, Pi12bar)
        b = layout.unpack(y)
        r0, r1 = _offset_rhs(c, Pi0, Pi12bar, Pi11, c.abb0(Abar, Gbar), b["s0"], b["s1"])
        return -np.concatenate((r0, r1))

    traj = integrate_backward(OdeField(fn, layout), layout.zeros(), grid)
    s0 = traj.block("s0").copy()
    s1 = traj.block("s1").copy()
    return s0, s1, c.mbar(s1)


def solve(model: Model, grid: TimeGrid, method: str = "joint", **picard) -> NceSolution:
    """Gains and offsets of the reduced system.

    ``method="joint"`` runs the stacked passes; ``method="picard"`` iterates
    with frozen mean-field coefficients (see :func:`solve_picard`).
    """
    if method == "picard":
        return solve_picard(model, grid, **picard)
    if method != "joint":
        raise ValueError(f"unknown method {method!r}")
    gains = solve_reduced(model, grid)
    return gains.with_offsets(*solve_offsets(model, gains, grid))


def solve_picard(model: Model, grid: TimeGrid, tol: float = 1e-10,
                 max_iter: int = 200) -> NceSolution:
    """Fixed-point iteration on the mean-field coefficients.

    Each sweep freezes ``Abar``, ``Gbar``, ``mbar`` (on nodes and midpoints),
    solves every Riccati and offset equation of the reduced system as
    decoupled linear-quadratic problems, then rebuilds the coefficients from
    the result. Stops once the sup-change of the coefficients is ``<= tol``.
    """
    c = _Coeffs(model)
    n = model.dims.n
    K = grid.K
    layout = BlockLayout(gain_layout(n).blocks + offset_layout(n).blocks)
    Abar = np.broadcast_to(c.AF, (2 * K + 1, n, n)).copy()
    Gbar = np.broadcast_to(model.G, (2 * K + 1, n, n)).copy()
    mbar = np.zeros((2 * K + 1, n))
    half = HalfGridSeries(grid, np.empty(2 * K + 1))

    def fn(t, y):
        j = half.index(t)
        b = layout.unpack(y)
        Abb0 = c.abb0(Abar[j], Gbar[j])
        r0, r12, r11 = _gain_rhs(c, b["Pi0"], b["Pi12bar"], b["Pi11"], Abb0)
        Mbb0 = np.concatenate((np.zeros(n), mbar[j]))
        s0, s1 = b["s0"], b["s1"]
        q0 = Abb0.T @ s0 - b["Pi0"] @ (c.S0 @ s0) + b["Pi0"] @ Mbb0 - c.etabar0
        q1 = c.At @ s1 - b["Pi11"] @ (c.W @ s1) - c.Qeta + b["Pi12bar"] @ (Mbb0 - c.S0 @ s0)
        return -np.concatenate((r0.ravel(), r12.ravel(), r11.ravel(), q0, q1))

    field = OdeField(fn, layout)
    for it in range(1, max_iter + 1):
        traj = integrate_backward(field, layout.zeros(), grid, symmetrize=("Pi0", "Pi11"))
        d = field_at_nodes(field, traj)
        Pi11, Pi12bar, s1 = traj.block("Pi11"), traj.block("Pi12bar"), traj.block("s1")
        dPi11, dPi12bar, ds1 = (layout.view(d, k) for k in ("Pi11", "Pi12bar", "s1"))
        A_new, G_new = c.abar_gbar(Pi11, Pi12bar)
        dA = -(c.W @ (dPi11 + dPi12bar[..., n:]))
        dG = -(c.W @ dPi12bar[..., :n])
        A_new = HalfGridSeries.from_nodes(grid, A_new, dA).values
        G_new = HalfGridSeries.from_nodes(grid, G_new, dG).values
        m_new = HalfGridSeries.from_nodes(grid, c.mbar(s1), c.mbar(ds1)).values
        change = max(np.max(np.abs(A_new - Abar)), np.max(np.abs(G_new - Gbar)),
                     np.max(np.abs(m_new - mbar)))
        if not np.isfinite(change):
            raise PicardDivergence(f"non-finite coefficients after sweep {it}")
        Abar[...], Gbar[...], mbar[...] = A_new, G_new, m_new
        if change <= tol:
            break
    else:
        raise PicardDivergence(f"no convergence in {max_iter} sweeps (last change {change:.3g})")
    # final pass with the converged coefficients
    traj = integrate_backward(field, layout.zeros(), grid, symmetrize=("Pi0", "Pi11"))
    gains = _gains_from_trajectory(traj, c)
    s0 = traj.block("s0").copy()
    s1 = traj.block("s1").copy()
    sol = gains.with_offsets(s0, s1, c.mbar(s1))
    return NceSolution(sol.grid, sol.Pi0, sol.Pi11, sol.Pi12bar, sol.Abar, sol.Gbar,
                       sol.s0, sol.s1, sol.mbar, iterations=it)


def full_field(model: Model) -> OdeField:
    c = _Coeffs(model)
    n = model.dims.n
    layout = full_layout(n)
    GF = c.GF

    def fn(t, y):
        b = layout.unpack(y)
        Pi0, Pi, s0, s = b["Pi0"], b["Pi"], b["s0"], b["s"]
        Abar, Gbar = c.abar_gbar(Pi[:n, :n], Pi[:n, n:])
        mbar = c.mbar(s[:n])
        Abb0 = c.abb0(Abar, Gbar)
        Abb = np.zeros((3 * n, 3 * n))
        Abb[:n, :n] = model.A
        Abb[:n, n:] = GF
        Abb[n:, n:] = Abb0 - c.S0 @ Pi0
        Mbb0 = np.concatenate((np.zeros(n), mbar))
        Mbb = np.concatenate((np.zeros(n), Mbb0 - c.S0 @ s0))
        rPi0 = Pi0 @ Abb0 + Abb0.T @ Pi0 - Pi0 @ c.S0 @ Pi0 + c.Qbb0
        rPi = Pi @ Abb + Abb.T @ Pi - Pi @ c.Wbb @ Pi + c.Qbb
        rs0 = Abb0.T @ s0 - Pi0 @ (c.S0 @ s0) + Pi0 @ Mbb0 - c.etabar0
        rs = Abb.T @ s - Pi @ (c.Wbb @ s) + Pi @ Mbb - c.etabar
        return -np.concatenate((rPi0.ravel(), rPi.ravel(), rs0, rs))

    return OdeField(fn, layout)


def solve_full(model: Model, grid: TimeGrid) -> FullNceSolution:
    """Un-reduced minor system jointly with the major one; for reduction checks."""
    field = full_field(model)
    # Pi is a symmetric Riccati solution as a whole
    traj = integrate_backward(field, field.layout.zeros(), grid, symmetrize=("Pi0", "Pi"))
    return FullNceSolution(grid, traj.block("Pi0").copy(), traj.block("Pi").copy(),
                           traj.block("s0").copy(), traj.block("s").copy())


def assemble_laws(model: Model, sol: NceSolution) -> tuple[FeedbackLaw, FeedbackLaw]:
    """Major and minor feedback laws; only first block rows enter."""
    if not sol.has_offsets:
        raise ValueError("solution has no offsets; solve them first")
    n = model.dims.n
    K0 = np.linalg.solve(model.R0, model.B0.T)
    K1 = np.linalg.solve(model.R, model.B.T)
    major = FeedbackLaw(
        "major", sol.grid,
        l0=-(sol.s0[:, :n] @ K0.T),
        l1=-(K0 @ sol.Pi0[:, :n, :n]),
        l2=-(K0 @ sol.Pi0[:, :n, n:]),
    )
    minor = FeedbackLaw(
        "minor", sol.grid,
        l0=-(sol.s1 @ K1.T),
        l1=-(K1 @ sol.Pi11),
        l2=-(K1 @ sol.Pi12bar[:, :, :n]),
        l3=-(K1 @ sol.Pi12bar[:, :, n:]),
    )
    return major, minor
