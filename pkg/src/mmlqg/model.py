"""Problem data for the major-minor LQG game, time grids and affine feedback laws."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

SYM_TOL = 1e-12
PSD_TOL = -1e-10
PD_TOL = 1e-12

# config key -> (Model attribute, kind, shape spec in terms of n, m, r)
CONFIG_KEYS: dict[str, tuple[str, str, tuple[str, ...]]] = {
    "a0": ("A0", "matrix", ("n", "n")),
    "f0": ("F0", "matrix", ("n", "n")),
    "b0": ("B0", "matrix", ("n", "m")),
    "sigma0": ("sigma0", "matrix", ("n", "r")),
    "a": ("A", "matrix", ("n", "n")),
    "f": ("F", "matrix", ("n", "n")),
    "g": ("G", "matrix", ("n", "n")),
    "b": ("B", "matrix", ("n", "m")),
    "sigma": ("sigma", "matrix", ("n", "r")),
    "q0": ("Q0", "matrix", ("n", "n")),
    "r0": ("R0", "matrix", ("m", "m")),
    "q": ("Q", "matrix", ("n", "n")),
    "r": ("R", "matrix", ("m", "m")),
    "h0": ("H0", "matrix", ("n", "n")),
    "h": ("H", "matrix", ("n", "n")),
    "h_hat": ("Hhat", "matrix", ("n", "n")),
    "eta0": ("eta0", "vector", ("n",)),
    "eta": ("eta", "vector", ("n",)),
    "xi": ("xi", "vector", ("n",)),
    "x0_init": ("x0_init", "vector", ("n",)),
}
OPTIONAL_KEYS = frozenset({"xi", "x0_init"})  # default to zero vectors


class ConfigError(ValueError):
    """Raised when a model config cannot be parsed; ``key`` names the culprit."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class FeedbackError(ValueError):
    pass


@dataclass(frozen=True)
class Dims:
    n: int
    m: int
    r: int

    def violations(self) -> list[str]:
        out = []
        for name in ("n", "m", "r"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                out.append(f"dims.{name} must be a positive integer, got {v!r}")
        return out


def _frozen(x: Any, ndim: int) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if ndim == 2:
        arr = np.atleast_2d(arr)
    else:
        arr = np.atleast_1d(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Model:
    """Constant system and cost data of the game.

    Matrices follow the finite-population dynamics: ``A0, F0, B0, sigma0`` for
    the major agent, ``A, F, G, B, sigma`` for each minor agent, quadratic cost
    weights ``Q0, R0, Q, R`` and tracking couplings ``H0, H, Hhat`` with
    offsets ``eta0, eta``. ``xi`` is the common mean of the minor initial
    states and ``x0_init`` the major initial state.
    """

    dims: Dims
    A0: np.ndarray
    F0: np.ndarray
    B0: np.ndarray
    sigma0: np.ndarray
    A: np.ndarray
    F: np.ndarray
    G: np.ndarray
    B: np.ndarray
    sigma: np.ndarray
    Q0: np.ndarray
    R0: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    H0: np.ndarray
    H: np.ndarray
    Hhat: np.ndarray
    eta0: np.ndarray
    eta: np.ndarray
    T: float = 1.0
    xi: np.ndarray | None = None
    x0_init: np.ndarray | None = None

    def __post_init__(self):
        n = self.dims.n
        for key, (attr, kind, _) in CONFIG_KEYS.items():
            val = getattr(self, attr)
            if val is None:
                val = np.zeros(n)
            object.__setattr__(self, attr, _frozen(val, 2 if kind == "matrix" else 1))
        object.__setattr__(self, "T", float(self.T))

    def replace(self, **changes) -> "Model":
        kwargs = {attr: getattr(self, attr) for attr, _, _ in CONFIG_KEYS.values()}
        kwargs.update(dims=self.dims, T=self.T)
        kwargs.update(changes)
        return Model(**kwargs)

    def to_config(self) -> dict:
        out: dict[str, Any] = {"dims": {"n": self.dims.n, "m": self.dims.m, "r": self.dims.r}}
        for key, (attr, _, _) in CONFIG_KEYS.items():
            out[key] = getattr(self, attr).tolist()
        out["t_horizon"] = self.T
        return out


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"step count must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))

    @property
    def h(self) -> float:
        return self.T / self.K

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.h

    def node(self, k: int) -> float:
        # exact end points, no accumulated rounding
        return self.T if k == self.K else k * self.h


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _shape(spec: tuple[str, ...], dims: Dims) -> tuple[int, ...]:
    return tuple(getattr(dims, s) for s in spec)


def validate(model: Model) -> ValidationReport:
    """Check every structural and convexity requirement; never raises."""
    out = model.dims.violations()
    if out:
        return ValidationReport(tuple(out))
    for key, (attr, _, spec) in CONFIG_KEYS.items():
        want = _shape(spec, model.dims)
        got = getattr(model, attr).shape
        if got != want:
            out.append(f"{key} has shape {got}, expected {want}")
    if not (np.isfinite(model.T) and model.T > 0):
        out.append(f"t_horizon must be positive, got {model.T}")
    for key, (attr, _, _) in CONFIG_KEYS.items():
        if not np.all(np.isfinite(getattr(model, attr))):
            out.append(f"{key} has non-finite entries")
    for key, attr, definite in (("q0", "Q0", False), ("q", "Q", False),
                                ("r0", "R0", True), ("r", "R", True)):
        M = getattr(model, attr)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.all(np.isfinite(M)):
            continue
        label = attr
        if np.max(np.abs(M - M.T), initial=0.0) > SYM_TOL:
            out.append(f"{label} not symmetric")
            continue
        lam = np.linalg.eigvalsh(M).min()
        if definite and lam <= PD_TOL:
            out.append(f"{label} not positive definite (min eigenvalue {lam:.3g})")
        elif not definite and lam < PSD_TOL:
            out.append(f"{label} not PSD (min eigenvalue {lam:.3g})")
    return ValidationReport(tuple(out))


def model_from_config(cfg: Mapping[str, Any]) -> Model:
    if not isinstance(cfg, Mapping):
        raise ConfigError("<root>", "config must be a mapping")
    if "dims" not in cfg:
        raise ConfigError("dims", "missing required key")
    d = cfg["dims"]
    try:
        dims = Dims(int(d["n"]), int(d["m"]), int(d["r"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("dims", f"needs integer n, m, r ({exc})") from None
    kwargs: dict[str, Any] = {"dims": dims}
    for key, (attr, kind, spec) in CONFIG_KEYS.items():
        if key not in cfg:
            if key in OPTIONAL_KEYS:
                continue
            raise ConfigError(key, "missing required key")
        try:
            arr = _frozen(cfg[key], 2 if kind == "matrix" else 1)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"not a numeric {kind} ({exc})") from None
        want = _shape(spec, dims)
        if arr.shape != want:
            raise ConfigError(key, f"shape {arr.shape}, expected {want}")
        kwargs[attr] = arr
    if "t_horizon" not in cfg:
        raise ConfigError("t_horizon", "missing required key")
    try:
        kwargs["T"] = float(cfg["t_horizon"])
    except (TypeError, ValueError):
        raise ConfigError("t_horizon", "not a number") from None
    unknown = set(cfg) - set(CONFIG_KEYS) - {"dims", "t_horizon"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    return Model(**kwargs)


def load_model(path: str | Path) -> Model:
    """Read a YAML (or JSON) model config. Matrices are lists of rows."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"unparseable config ({exc})") from None
    return model_from_config(cfg)


def dump_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(model.to_config(), sort_keys=False))


def scalar_baseline(**changes) -> Model:
    """The scalar reference model: unit weights, no coupling, no offsets.

    Idiosyncratic and common noise both have unit intensity so simulations
    are non-degenerate; the Riccati and offset solutions do not depend on it.
    """
    one, zero = [[1.0]], [[0.0]]
    kwargs = dict(
        dims=Dims(1, 1, 1),
        A0=zero, F0=zero, B0=one, sigma0=one,
        A=zero, F=zero, G=zero, B=one, sigma=one,
        Q0=one, R0=one, Q=one, R=one,
        H0=zero, H=zero, Hhat=zero,
        eta0=[0.0], eta=[0.0], T=1.0, xi=[0.0], x0_init=[0.0],
    )
    kwargs.update(changes)
    return Model(**kwargs)


def zero_cost_model(n: int = 2, m: int = 1, r: int = 1, seed: int = 0) -> Model:
    """Random dynamics with Q0 = Q = 0 and zero offsets: the equilibrium is u = 0."""
    base = random_model(seed, n=n, m=m, r=r)
    z = np.zeros((n, n))
    return base.replace(Q0=z, Q=z, eta0=np.zeros(n), eta=np.zeros(n))


def random_model(seed: int, n: int = 2, m: int = 1, r: int = 1, T: float = 1.0) -> Model:
    """Seeded valid model with every coupling entry drawn from U[-1, 1]."""
    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-1.0, 1.0, size=shape)

    def psd(k):
        M = u(k, k)
        return M @ M.T / k

    def pd(k):
        M = u(k, k)
        return M @ M.T / k + 0.5 * np.eye(k)

    return Model(
        dims=Dims(n, m, r),
        A0=u(n, n), F0=u(n, n), B0=u(n, m), sigma0=u(n, r),
        A=u(n, n), F=u(n, n), G=u(n, n), B=u(n, m), sigma=u(n, r),
        Q0=psd(n), R0=pd(m), Q=psd(n), R=pd(m),
        H0=u(n, n), H=u(n, n), Hhat=u(n, n),
        eta0=u(n), eta=u(n), T=T, xi=u(n), x0_init=u(n),
    )


# n, m for the seeded acceptance suite
SUITE_DIMS = ((1, 1), (2, 1), (3, 1), (1, 2), (2, 2), (3, 2), (2, 1), (3, 1), (2, 2), (3, 2))


def suite_models() -> list[Model]:
    return [random_model(seed, n=n, m=m) for seed, (n, m) in enumerate(SUITE_DIMS)]


@dataclass(frozen=True)
class FeedbackLaw:
    """Affine Markov feedback on a time grid.

    Major: ``u = l0 + l1 x0 + l2 xbar``. Minor:
    ``u = l0 + l1 x_i + l2 x0 + l3 xbar``. Gain arrays carry the node index
    first, so ``l1[k]`` is the ``m x n`` gain at ``grid.node(k)``.
    """

    role: str
    grid: TimeGrid
    l0: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    l3: np.ndarray | None = None
    _stack: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.role not in ("major", "minor"):
            raise FeedbackError(f"role must be 'major' or 'minor', got {self.role!r}")
        if (self.role == "minor") != (self.l3 is not None):
            raise FeedbackError("minor laws need four gain grids, major laws exactly three")
        nodes = self.grid.K + 1
        for name in ("l0", "l1", "l2", "l3"):
            g = getattr(self, name)
            if g is None:
                continue
            g = np.array(g, dtype=float)
            if g.shape[0] != nodes:
                raise FeedbackError(f"{name} has {g.shape[0]} nodes, grid has {nodes}")
            g.setflags(write=False)
            object.__setattr__(self, name, g)

    @property
    def gains(self) -> tuple[np.ndarray, ...]:
        return tuple(g for g in (self.l0, self.l1, self.l2, self.l3) if g is not None)

    def gains_at(self, t: float | np.ndarray) -> tuple[np.ndarray, ...]:
        """Gains linearly interpolated at ``t`` (scalar or array of times)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.grid.T):
            raise FeedbackError(f"time outside [0, {self.grid.T}]")
        s = t_arr / self.grid.h
        near = np.rint(s)
        # node times may not divide exactly in floating point
        s = np.where(np.abs(s - near) <= 1e-9, near, s)
        k = np.clip(np.floor(s).astype(int), 0, self.grid.K - 1)
        w = s - k
        out = []
        for g in self.gains:
            lo, hi = g[k], g[k + 1]
            ww = np.reshape(w, w.shape + (1,) * (g.ndim - 1))
            val = np.where(ww == 0.0, lo, np.where(ww == 1.0, hi, (1.0 - ww) * lo + ww * hi))
            out.append(val)
        return tuple(out)


def eval_feedback(law: FeedbackLaw, t: float, x_self, x_major=None, x_bar=None) -> np.ndarray:
    """Evaluate the affine control at time ``t``.

    For a major law ``x_self`` is the major state; for a minor law it is the
    agent's own state and ``x_major`` is required.
    """
    if law.role == "minor" and x_major is None:
        raise FeedbackError("minor feedback needs the major state")
    if law.role == "major" and x_major is not None:
        raise FeedbackError("major feedback takes no separate major state")
    if x_bar is None:
        raise FeedbackError("mean-field state is required")
    gains = law.gains_at(float(t))
    x_self = np.asarray(x_self, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    if law.role == "major":
        l0, l1, l2 = gains
        return l0 + l1 @ x_self + l2 @ x_bar
    l0, l1, l2, l3 = gains
    return l0 + l1 @ x_self + l2 @ np.asarray(x_major, dtype=float) + l3 @ x_bar
