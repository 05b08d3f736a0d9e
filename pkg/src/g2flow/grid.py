"""Periodic lattice on the flat 7-torus with reduced active dimensions.

Fields vary only along a configurable subset of the seven coordinate
directions; derivatives along the inactive directions vanish identically.
Tensor fields are stored structure-of-arrays: component indices first,
grid axes last, so a rank-R field over a k-dimensional active grid has
shape (7,)*R + (n,)*k.

Central finite differences (order 2 or 4) keep discrete integration by
parts exact on the periodic lattice, which the gradient-flow energy
identities rely on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "partial",
    "grad_scalar",
    "grad_vector",
    "div2",
    "laplacian",
    "integrate",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"G2FL"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Periodic rectangular lattice with period ``length`` per direction.

    Only ``active_dims`` (a subset of 0..6) carry grid axes; the total
    7-torus volume is length**7 regardless of how many are active.
    """

    length: float
    n: int
    active_dims: tuple[int, ...] = (0, 1)
    stencil_order: int = 2

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("grid period must be positive")
        if self.n <= 0 or self.n % 2 != 0:
            raise ValueError("points per dimension must be a positive even integer")
        dims = tuple(sorted(set(int(d) for d in self.active_dims)))
        if not dims or any(d < 0 or d > 6 for d in dims):
            raise ValueError("active_dims must be a nonempty subset of 0..6")
        object.__setattr__(self, "active_dims", dims)
        if self.stencil_order not in (2, 4):
            raise ValueError("stencil_order must be 2 or 4")
        if self.stencil_order == 4 and self.n < 6:
            raise ValueError("order-4 stencils need at least 6 points per dimension")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def k(self) -> int:
        return len(self.active_dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.k

    @property
    def cell_weight(self) -> float:
        # quadrature weight per grid point: h per active dim, full period
        # per inactive dim
        return self.h ** self.k * self.length ** (7 - self.k)

    def axis_of(self, dim: int, ndim_total: int) -> int:
        """Array axis carrying direction ``dim`` in a field with ``ndim_total`` axes."""
        return ndim_total - self.k + self.active_dims.index(dim)

    def coordinate(self, dim: int) -> np.ndarray:
        """Coordinate values along an active direction, broadcast to grid shape."""
        x = np.arange(self.n) * self.h
        if dim not in self.active_dims:
            raise ValueError(f"direction {dim} is inactive")
        pos = self.active_dims.index(dim)
        shape = [1] * self.k
        shape[pos] = self.n
        return np.broadcast_to(x.reshape(shape), self.shape)

    def lifted_displacement(self, dim: int, center_index: int) -> np.ndarray:
        """Periodic displacement x - x0 along ``dim``, lifted to (-L/2, L/2]."""
        idx = (np.arange(self.n) - center_index) % self.n
        d = idx * self.h
        d = np.where(d > self.length / 2, d - self.length, d)
        pos = self.active_dims.index(dim)
        shape = [1] * self.k
        shape[pos] = self.n
        return np.broadcast_to(d.reshape(shape), self.shape)

    def zeros(self, rank: int) -> np.ndarray:
        return np.zeros((7,) * rank + self.shape)


def partial(grid: Grid, arr: np.ndarray, dim: int) -> np.ndarray:
    """Central difference along ``dim``; zero when the direction is inactive."""
    if dim not in grid.active_dims:
        return np.zeros_like(arr)
    ax = grid.axis_of(dim, arr.ndim)
    h = grid.h
    if grid.stencil_order == 2:
        return (np.roll(arr, -1, axis=ax) - np.roll(arr, 1, axis=ax)) / (2.0 * h)
    return (
        -np.roll(arr, -2, axis=ax)
        + 8.0 * np.roll(arr, -1, axis=ax)
        - 8.0 * np.roll(arr, 1, axis=ax)
        + np.roll(arr, 2, axis=ax)
    ) / (12.0 * h)


def laplacian(grid: Grid, arr: np.ndarray) -> np.ndarray:
    """Compact central Laplacian, summed over active directions."""
    h2 = grid.h * grid.h
    out = np.zeros_like(arr, dtype=float)
    for dim in grid.active_dims:
        ax = grid.axis_of(dim, arr.ndim)
        if grid.stencil_order == 2:
            out += (np.roll(arr, -1, axis=ax) - 2.0 * arr + np.roll(arr, 1, axis=ax)) / h2
        else:
            out += (
                -np.roll(arr, -2, axis=ax)
                + 16.0 * np.roll(arr, -1, axis=ax)
                - 30.0 * arr
                + 16.0 * np.roll(arr, 1, axis=ax)
                - np.roll(arr, 2, axis=ax)
            ) / (12.0 * h2)
    return out


def grad_scalar(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Gradient of a scalar field as a rank-1 field (7, *grid)."""
    out = np.zeros((7,) + u.shape)
    for dim in grid.active_dims:
        out[dim] = partial(grid, u, dim)
    return out


def grad_vector(grid: Grid, x: np.ndarray) -> np.ndarray:
    """(grad X)_pq = d_p X_q as a rank-2 field (7, 7, *grid)."""
    out = np.zeros((7,) + x.shape)
    for dim in grid.active_dims:
        out[dim] = partial(grid, x, dim)
    return out


def div2(grid: Grid, t: np.ndarray) -> np.ndarray:
    """First-slot divergence (Div T)_q = d_p T_pq of a rank-2 field."""
    out = np.zeros(t.shape[1:])
    for dim in grid.active_dims:
        out += partial(grid, t[dim], dim)
    return out


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Volume integral of a scalar field over the full 7-torus."""
    return float(np.sum(f)) * grid.cell_weight


def save_checkpoint(path, grid: Grid, f: np.ndarray, x: np.ndarray) -> None:
    """Write a bit-exact state checkpoint.

    Layout: magic "G2FL", version u32, N u32, L float64, active-dims
    bitmask u8, stencil order u8, then f then X as little-endian float64
    in row-major order (X component-major).
    """
    bitmask = 0
    for d in grid.active_dims:
        bitmask |= 1 << d
    header = CHECKPOINT_MAGIC + struct.pack(
        "<IIdBB", CHECKPOINT_VERSION, grid.n, grid.length, bitmask, grid.stencil_order
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Grid, np.ndarray, np.ndarray]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a state checkpoint (magic {magic!r})")
        version, n = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (length,) = struct.unpack("<d", fh.read(8))
        bitmask, order = struct.unpack("<BB", fh.read(2))
        dims = tuple(d for d in range(7) if bitmask & (1 << d))
        grid = Grid(length=length, n=n, active_dims=dims, stencil_order=order)
        npts = n ** grid.k
        raw = fh.read(8 * npts)
        f = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
        raw = fh.read(8 * 7 * npts)
        x = np.frombuffer(raw, dtype="<f8").reshape((7,) + grid.shape).copy()
    return grid, f, x
