"""Node-by-node comparison of the two equilibrium characterisations.

The probabilistic formulation orders the major extended state as
``[xbar; x0]`` while the certainty-equivalence one uses ``[x0; xbar]``; the
block permutation ``J = [[0, I], [I, 0]]`` maps one to the other:

    K = J' Pi0 J,   S = Pi11,   Sbb = Pi12bar J,   k = J s0,   sbar = s1.

Vectors are permuted by left multiplication.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nce, prob
from .model import FeedbackLaw, Model, TimeGrid, eval_feedback


@dataclass(frozen=True)
class InterchangeOperator:
    n: int

    @property
    def matrix(self) -> np.ndarray:
        n = self.n
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = np.eye(n)
        J[n:, :n] = np.eye(n)
        return J

    def _check(self, M: np.ndarray, axes: int) -> None:
        if M.shape[-axes:] != (2 * self.n,) * axes:
            raise ValueError(f"expected trailing shape {(2 * self.n,) * axes}, got {M.shape}")

    def conjugate(self, M: np.ndarray) -> np.ndarray:
        """``J' M J``: swaps both block rows and block columns. Broadcasts over leading axes."""
        M = np.asarray(M)
        self._check(M, 2)
        n = self.n
        idx = np.r_[n:2 * n, 0:n]
        return M[..., idx, :][..., :, idx]

    def right(self, M: np.ndarray) -> np.ndarray:
        """``M J``: swaps the two column blocks."""
        M = np.asarray(M)
        if M.shape[-1] != 2 * self.n:
            raise ValueError(f"expected {2 * self.n} columns, got {M.shape[-1]}")
        n = self.n
        return M[..., np.r_[n:2 * n, 0:n]]

    def left(self, v: np.ndarray) -> np.ndarray:
        """``J v`` for vectors (or stacks of vectors along leading axes)."""
        v = np.asarray(v)
        self._check(v, 1)
        n = self.n
        return v[..., np.r_[n:2 * n, 0:n]]


def conjugate(J: InterchangeOperator, M: np.ndarray) -> np.ndarray:
    return J.conjugate(M)


def _sup(a: np.ndarray) -> np.ndarray:
    """Per-node max-abs entry."""
    a = np.abs(a)
    return a.reshape(a.shape[0], -1).max(axis=1)


@dataclass
class EquivalenceReport:
    """Sup-norm (max-abs entry over nodes) of every correspondence gap."""

    tol: float
    dK: float
    dS: float
    dSbb: float
    dk: float
    dsbar: float
    d_major_law: float
    d_minor_law: float
    per_node: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    times: np.ndarray | None = field(repr=False, default=None)

    @property
    def discrepancies(self) -> dict[str, float]:
        return {"dK": self.dK, "dS": self.dS, "dSbb": self.dSbb, "dk": self.dk,
                "dsbar": self.dsbar, "d_major_law": self.d_major_law,
                "d_minor_law": self.d_minor_law}

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.discrepancies.values())


def _law_gap(model: Model, laws_a, laws_b, grid: TimeGrid, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    n = model.dims.n
    major_a, minor_a = laws_a
    major_b, minor_b = laws_b
    d_major = d_minor = 0.0
    for _ in range(samples):
        t = rng.uniform(0.0, grid.T)
        x0, xbar, xi = rng.standard_normal((3, n))
        ua = eval_feedback(major_a, t, x0, x_bar=xbar)
        ub = eval_feedback(major_b, t, x0, x_bar=xbar)
        d_major = max(d_major, float(np.max(np.abs(ua - ub))))
        va = eval_feedback(minor_a, t, xi, x0, xbar)
        vb = eval_feedback(minor_b, t, xi, x0, xbar)
        d_minor = max(d_minor, float(np.max(np.abs(va - vb))))
    return d_major, d_minor


def check_theorem2(model: Model, nce_sol: nce.NceSolution, prob_sol: prob.ProbSolution,
                   tol: float = 1e-6, samples: int = 100, seed: int = 0) -> EquivalenceReport:
    """Compare both solutions through ``J`` and both pairs of feedback laws.

    Laws are evaluated at ``samples`` pseudo-random ``(t, x0, xbar, x_i)``.
    """
    if nce_sol.grid != prob_sol.grid:
        raise ValueError("solutions live on different grids")
    if not (nce_sol.has_offsets and prob_sol.has_offsets):
        raise ValueError("both solutions need offsets")
    J = InterchangeOperator(model.dims.n)
    per_node = {
        "dK": _sup(prob_sol.K - J.conjugate(nce_sol.Pi0)),
        "dS": _sup(prob_sol.S - nce_sol.Pi11),
        "dSbb": _sup(prob_sol.Sbb - J.right(nce_sol.Pi12bar)),
        "dk": _sup(prob_sol.k - J.left(nce_sol.s0)),
        "dsbar": _sup(prob_sol.sbar - nce_sol.s1),
    }
    d_major, d_minor = _law_gap(model, nce.assemble_laws(model, nce_sol),
                                prob.assemble_cw_laws(model, prob_sol), nce_sol.grid,
                                samples, seed)
    return EquivalenceReport(
        tol=tol, d_major_law=d_major, d_minor_law=d_minor, per_node=per_node,
        times=nce_sol.grid.nodes, **{k: float(v.max()) for k, v in per_node.items()})


def compare(model: Model, grid: TimeGrid, tol: float = 1e-6, samples: int = 100,
            seed: int = 0) -> EquivalenceReport:
    return check_theorem2(model, nce.solve(model, grid), prob.solve(model, grid),
                          tol=tol, samples=samples, seed=seed)


@dataclass
class ReductionReport:
    """Gap between the un-reduced minor system and the reduced equations.

    ``d_row`` compares the first block row of ``Pi`` with ``[Pi11, Pi12bar]``,
    ``d_s`` the first ``n`` entries of ``s`` with ``s1``. The ``identity_*``
    entries are the largest residuals of the block-multiplication identities
    at the sampled nodes.
    """

    tol: float
    d_row: float
    d_s: float
    identity_tol: float
    identity_ric12: float
    identity_ric3: float
    identity_off: float
    sampled_nodes: tuple[int, ...] = ()
    per_node: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    times: np.ndarray | None = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return (self.d_row <= self.tol and self.d_s <= self.tol
                and max(self.identity_ric12, self.identity_ric3, self.identity_off)
                <= self.identity_tol)


def block_identity_residuals(model: Model, full: nce.FullNceSolution, node: int) -> dict[str, float]:
    """Residuals of the block forms of the un-reduced Riccati and offset terms.

    Each product is formed once by full multiplication and once from the
    block formulas; returns the max-abs differences.
    """
    n = model.dims.n
    c = nce._Coeffs(model)
    Pi0, Pi, s0, s = full.Pi0[node], full.Pi[node], full.s0[node], full.s[node]
    Pi11, Pi12bar = Pi[:n, :n], Pi[:n, n:]
    Pi21bar, Pi22bar = Pi[n:, :n], Pi[n:, n:]
    s1 = s[:n]
    Abar, Gbar = c.abar_gbar(Pi11, Pi12bar)
    major = nce.extended_major(model, Abar, Gbar, c.mbar(s1))
    minor = nce.extended_minor(model, major, Pi0, s0)
    Acl0 = minor.Abb[n:, n:]
    GF = np.hstack([model.G, model.F])
    Rinv = np.linalg.inv(model.R)

    E1 = GF.T @ Pi11 + Acl0.T @ Pi21bar
    E2 = GF.T @ Pi12bar + Acl0.T @ Pi22bar
    PiA = np.block([[Pi11 @ model.A, E1.T], [Pi21bar @ model.A, E2.T]])
    AtPi = np.block([[model.A.T @ Pi11, model.A.T @ Pi12bar], [E1, E2]])
    ric12 = max(np.max(np.abs(Pi @ minor.Abb - PiA)), np.max(np.abs(minor.Abb.T @ Pi - AtPi)))

    # only the first block row of the quadratic term is used by the reduction
    W = model.B @ Rinv @ model.B.T
    quad = Pi @ minor.Bbb @ Rinv @ minor.Bbb.T @ Pi
    quad_row = np.hstack([Pi11 @ W @ Pi11, Pi11 @ W @ Pi12bar])
    Qbb_blocks = np.block([
        [model.Q, -model.Q @ np.hstack([model.H, model.Hhat])],
        [-np.hstack([model.H, model.Hhat]).T @ model.Q,
         np.hstack([model.H, model.Hhat]).T @ model.Q @ np.hstack([model.H, model.Hhat])]])
    ric3 = max(np.max(np.abs(quad[:n] - quad_row)), np.max(np.abs(minor.Qbb - Qbb_blocks)))

    lin = Pi @ minor.Bbb @ Rinv @ minor.Bbb.T @ s
    HH = np.hstack([model.H, model.Hhat])
    etabar_blocks = np.concatenate([model.Q @ model.eta, -HH.T @ model.Q @ model.eta])
    drift = minor.Mbb[n:]
    PiM_blocks = np.concatenate([Pi12bar @ drift, Pi22bar @ drift])
    off = max(np.max(np.abs(lin[:n] - Pi11 @ W @ s1)),
              np.max(np.abs(minor.etabar - etabar_blocks)),
              np.max(np.abs(Pi @ minor.Mbb - PiM_blocks)))
    return {"ric12": float(ric12), "ric3": float(ric3), "off": float(off)}


def check_theorem1(model: Model, grid: TimeGrid, tol: float = 1e-8, identity_tol: float = 1e-12,
                   nodes: int = 10, seed: int = 0,
                   reduced: nce.NceSolution | None = None) -> ReductionReport:
    """Run the un-reduced and reduced solves and compare first block rows."""
    full = nce.solve_full(model, grid)
    red = reduced if reduced is not None else nce.solve(model, grid)
    n = model.dims.n
    row = np.concatenate([red.Pi11, red.Pi12bar], axis=2)
    per_node = {"d_row": _sup(full.Pi[:, :n, :] - row), "d_s": _sup(full.s[:, :n] - red.s1)}
    rng = np.random.default_rng(seed)
    picks = tuple(int(k) for k in np.sort(rng.choice(grid.K + 1, size=min(nodes, grid.K + 1),
                                                     replace=False)))
    worst = {"ric12": 0.0, "ric3": 0.0, "off": 0.0}
    for k in picks:
        for name, v in block_identity_residuals(model, full, k).items():
            worst[name] = max(worst[name], v)
    return ReductionReport(tol=tol, d_row=float(per_node["d_row"].max()),
                           d_s=float(per_node["d_s"].max()), identity_tol=identity_tol,
                           identity_ric12=worst["ric12"], identity_ric3=worst["ric3"],
                           identity_off=worst["off"], sampled_nodes=picks,
                           per_node=per_node, times=grid.nodes)
