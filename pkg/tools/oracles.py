"""Reference values for the test suite from an independent integrator.

Re-derives the reduced consistency system directly in matrix form and
integrates it with scipy's adaptive DOP853 at tight tolerances. Nothing
from ``mmlqg`` is imported, so agreement with the fixed-step package
solver is a genuine two-route check. Needs scipy (``pip install scipy``).

    python tools/oracles.py
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp


def scalar(**kw):
    base = dict(a0=0.0, f0=0.0, b0=1.0, a=0.0, f=0.0, g=0.0, b=1.0, q0=1.0, r0=1.0,
                q=1.0, r=1.0, h0=0.0, h=0.0, hh=0.0, eta0=0.0, eta=0.0, T=1.0)
    base.update(kw)
    return {k: (np.atleast_2d(v) if k not in ("eta0", "eta", "T") else
                (np.atleast_1d(v) if k != "T" else v)) for k, v in base.items()}


def reduced_rhs(p):
    n = p["a"].shape[0]
    W = p["b"] @ np.linalg.inv(p["r"]) @ p["b"].T
    S0 = np.zeros((2 * n, 2 * n))
    S0[:n, :n] = p["b0"] @ np.linalg.inv(p["r0"]) @ p["b0"].T
    L0 = np.hstack([np.eye(n), -p["h0"]])
    Qbb0 = L0.T @ p["q0"] @ L0
    eb0 = L0.T @ p["q0"] @ p["eta0"]
    sizes = [4 * n * n, 2 * n * n, n * n, 2 * n, n]
    cuts = np.cumsum(sizes)[:-1]

    def split(y):
        P0, P12, P11, s0, s1 = np.split(y, cuts)
        return P0.reshape(2 * n, 2 * n), P12.reshape(n, 2 * n), P11.reshape(n, n), s0, s1

    def rhs(t, y):
        P0, P12, P11, s0, s1 = split(y)
        Abar = p["a"] + p["f"] - W @ P11 - W @ P12[:, n:]
        Gbar = p["g"] - W @ P12[:, :n]
        mbar = -W @ s1
        A0 = np.block([[p["a0"], p["f0"]], [Gbar, Abar]])
        M0 = np.concatenate([np.zeros(n), mbar])
        dP0 = -(P0 @ A0 + A0.T @ P0 - P0 @ S0 @ P0 + Qbb0)
        dP11 = -(P11 @ p["a"] + p["a"].T @ P11 - P11 @ W @ P11 + p["q"])
        dP12 = -(P11 @ np.hstack([p["g"], p["f"]]) + p["a"].T @ P12 + P12 @ (A0 - S0 @ P0)
                 - P11 @ W @ P12 - p["q"] @ np.hstack([p["h"], p["hh"]]))
        ds0 = -((A0 - S0 @ P0).T @ s0 + P0 @ M0 - eb0)
        ds1 = -((p["a"] - W @ P11).T @ s1 - p["q"] @ p["eta"] + P12 @ (M0 - S0 @ s0))
        return np.concatenate([dP0.ravel(), dP12.ravel(), dP11.ravel(), ds0, ds1])

    size = sum(sizes)
    return rhs, split, size


def solve_reduced_at(p, times):
    rhs, split, size = reduced_rhs(p)
    sol = solve_ivp(rhs, (p["T"], 0.0), np.zeros(size), method="DOP853", rtol=1e-13,
                    atol=1e-14, t_eval=sorted(times, reverse=True))
    return {t: split(sol.y[:, i]) for i, t in enumerate(sol.t)}


def main():
    np.set_printoptions(precision=17)
    cases = {
        "coupled_g1": scalar(g=1.0),
        "coupled_g1_eta": scalar(g=1.0, eta=1.0, eta0=0.5),
        "coupled_mixed": scalar(a0=0.3, f0=-0.4, a=-0.2, f=0.5, g=0.7, h0=0.6, h=-0.3, hh=0.4,
                                eta0=0.8, eta=-0.6, q0=1.5, r0=0.7, q=0.9, r=1.3),
        "m1_eta1": scalar(eta=1.0),
        "m1_eta0_1": scalar(eta0=1.0),
    }
    for name, p in cases.items():
        for t, (P0, P12, P11, s0, s1) in solve_reduced_at(p, [0.0, 0.5]).items():
            print(f"{name} t={t}")
            print("  Pi0 =", repr(P0.ravel()))
            print("  Pi12bar =", repr(P12.ravel()))
            print("  Pi11 =", repr(P11.ravel()))
            print("  s0 =", repr(s0))
            print("  s1 =", repr(s1))


if __name__ == "__main__":
    main()
