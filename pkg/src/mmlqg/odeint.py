"""Fixed-step classical RK4 for stacked matrix/vector states.

All solvers share one uniform grid so trajectories from different methods
can be compared node by node without interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .model import TimeGrid


class IntegrationError(FloatingPointError):
    """A stage produced a non-finite value (typically Riccati blow-up)."""

    def __init__(self, node: int, t: float, block: str):
        super().__init__(f"non-finite value in block {block!r} at node {node} (t={t:.6g})")
        self.node = node
        self.t = t
        self.block = block


@dataclass(frozen=True)
class BlockLayout:
    """Named blocks stacked into one flat state, in order.

    Each entry is ``(name, rows, cols)``; ``cols=None`` marks a vector.
    """

    blocks: tuple[tuple[str, int, int | None], ...]
    _slices: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        slices, start = {}, 0
        for name, rows, cols in self.blocks:
            size = rows * (1 if cols is None else cols)
            slices[name] = (slice(start, start + size), (rows,) if cols is None else (rows, cols))
            start += size
        object.__setattr__(self, "_slices", slices)
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def size(self) -> int:
        return sum(s.stop - s.start for s, _ in self._slices.values())

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b[0] for b in self.blocks)

    def shape(self, name: str) -> tuple[int, ...]:
        return self._slices[name][1]

    def pack(self, blocks: Mapping[str, np.ndarray]) -> np.ndarray:
        out = np.empty(self.size)
        for name, (sl, shape) in self._slices.items():
            arr = np.asarray(blocks[name], dtype=float)
            if arr.shape != shape:
                raise ValueError(f"block {name!r} has shape {arr.shape}, expected {shape}")
            out[sl] = arr.ravel()
        return out

    def unpack(self, y: np.ndarray) -> dict[str, np.ndarray]:
        """Views into ``y`` (row-major), one per block."""
        return {name: y[sl].reshape(shape) for name, (sl, shape) in self._slices.items()}

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def block_of(self, index: int) -> str:
        for name, (sl, _) in self._slices.items():
            if sl.start <= index < sl.stop:
                return name
        raise IndexError(index)

    def view(self, values: np.ndarray, name: str) -> np.ndarray:
        """Block ``name`` of every row of a ``(nodes, size)`` array."""
        sl, shape = self._slices[name]
        return values[:, sl].reshape((values.shape[0],) + shape)


@dataclass(frozen=True)
class OdeField:
    fn: Callable[[float, np.ndarray], np.ndarray]
    layout: BlockLayout

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.fn(t, y)


@dataclass(frozen=True)
class OdeTrajectory:
    grid: TimeGrid
    layout: BlockLayout
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.K + 1, self.layout.size):
            raise ValueError("trajectory does not match grid and layout")

    def block(self, name: str) -> np.ndarray:
        return self.layout.view(self.values, name)

    def at(self, k: int) -> dict[str, np.ndarray]:
        return self.layout.unpack(self.values[k])


def _check(k: np.ndarray, layout: BlockLayout, node: int, t: float) -> None:
    if not np.all(np.isfinite(k)):
        bad = int(np.flatnonzero(~np.isfinite(k))[0])
        raise IntegrationError(node, t, layout.block_of(bad))


def _symmetrizer(layout: BlockLayout, names: Iterable[str]):
    names = tuple(names)
    for name in names:
        if name not in layout.names:
            raise ValueError(f"no block named {name!r}")
        shape = layout.shape(name)
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"cannot symmetrize non-square block {name!r}")

    def apply(y: np.ndarray) -> None:
        blocks = layout.unpack(y)
        for name in names:
            M = blocks[name]
            M[...] = 0.5 * (M + M.T)

    return apply


def _integrate(field: OdeField, y0, grid: TimeGrid, backward: bool, symmetrize) -> OdeTrajectory:
    layout = field.layout
    if isinstance(y0, Mapping):
        y = layout.pack(y0)
    else:
        y = np.array(y0, dtype=float).ravel()
        if y.shape != (layout.size,):
            raise ValueError(f"state has size {y.size}, layout expects {layout.size}")
    sym = _symmetrizer(layout, symmetrize) if symmetrize else None
    fn = field.fn
    K = grid.K
    values = np.empty((K + 1, layout.size))
    h = -grid.h if backward else grid.h
    order = range(K, 0, -1) if backward else range(0, K)
    values[K if backward else 0] = y
    for k in order:
        t = grid.node(k)
        tm = t + 0.5 * h
        tn = grid.node(k - 1 if backward else k + 1)
        k1 = fn(t, y)
        k2 = fn(tm, y + (0.5 * h) * k1)
        k3 = fn(tm, y + (0.5 * h) * k2)
        k4 = fn(tn, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if sym is not None:
            sym(y)
        nxt = k - 1 if backward else k + 1
        # a non-finite stage always poisons the step result
        if not np.isfinite(y.sum()):
            _check(y, layout, nxt, tn)
        values[nxt] = y
    return OdeTrajectory(grid, layout, values)


def integrate_backward(field: OdeField, terminal, grid: TimeGrid,
                       symmetrize: Iterable[str] = ()) -> OdeTrajectory:
    """RK4 from ``t_K = T`` down to ``t_0 = 0`` starting at ``terminal``.

    ``field`` returns ``dY/dt``. Blocks named in ``symmetrize`` are replaced
    by their symmetric part after each full step.
    """
    return _integrate(field, terminal, grid, True, symmetrize)


def integrate_forward(field: OdeField, initial, grid: TimeGrid,
                      symmetrize: Iterable[str] = ()) -> OdeTrajectory:
    return _integrate(field, initial, grid, False, symmetrize)


def field_at_nodes(field: OdeField, traj: OdeTrajectory) -> np.ndarray:
    """``dY/dt`` evaluated on every stored node."""
    grid = traj.grid
    return np.stack([field.fn(grid.node(k), traj.values[k]) for k in range(grid.K + 1)])


@dataclass(frozen=True)
class HalfGridSeries:
    """Values on nodes and step midpoints, i.e. the RK4 stage times.

    Built from node values and node derivatives by cubic Hermite
    interpolation, which is fourth-order accurate at midpoints and keeps
    frozen coefficients from degrading an RK4 pass.
    """

    grid: TimeGrid
    values: np.ndarray  # shape (2K + 1, ...)

    @classmethod
    def from_nodes(cls, grid: TimeGrid, y: np.ndarray, dy: np.ndarray) -> "HalfGridSeries":
        y = np.asarray(y, dtype=float)
        dy = np.asarray(dy, dtype=float)
        out = np.empty((2 * grid.K + 1,) + y.shape[1:])
        out[0::2] = y
        out[1::2] = 0.5 * (y[:-1] + y[1:]) + (grid.h / 8.0) * (dy[:-1] - dy[1:])
        return cls(grid, out)

    def index(self, t: float) -> int:
        j = int(round(2.0 * t / self.grid.h))
        if abs(2.0 * t / self.grid.h - j) > 1e-6 or not 0 <= j <= 2 * self.grid.K:
            raise ValueError(f"t={t} is not a node or step midpoint of the grid")
        return j

    def at(self, t: float) -> np.ndarray:
        return self.values[self.index(t)]
