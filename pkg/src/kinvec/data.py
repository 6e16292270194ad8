"""Initial data for transport experiments.

Analytic data classes expose a vectorised ``__call__(xs, vs)`` taking lists of
broadcastable coordinate arrays, plus an analytic ``sup_v``.  Separable data
also exposes per-axis one-dimensional factors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import DistributionField, PhaseGrid, SUPPORT_TOL
from .validation import check_dimension, check_finite_array, check_positive


class InitialData:
    """Base class: an analytic phase-space function f0(x, v)."""

    dim: int

    def __call__(self, xs, vs):
        raise NotImplementedError

    def sup_v(self, xs):
        """sup over v of |f0(x, v)|, or ``None`` when unavailable."""
        return None

    def factors(self):
        """Per-axis 1D data whose product is this datum, or ``None``."""
        return None

    def sample(self, grid: PhaseGrid, check_support: bool = True, tol: float = SUPPORT_TOL):
        if grid.dim != self.dim:
            raise ValueError(f"data has dimension {self.dim}, grid has {grid.dim}")
        f = grid.sample(self, 0.0)
        if check_support:
            f.check_support(tol)
        return f

    def scaled(self, c):
        raise NotImplementedError


def _vec(value, dim, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (dim,)).copy()
    return tuple(float(a) for a in check_finite_array(arr, name))


@dataclass(frozen=True)
class GaussianData(InitialData):
    """A exp(-|x - c|^2 / r^2 - |v - u|^2 / s^2).

    ``amplitude=None`` normalises the total mass to 1, which for unit widths
    gives pi^-n exp(-|x|^2 - |v|^2).
    """

    dim: int
    center: tuple = 0.0
    width_x: float = 1.0
    width_v: float = 1.0
    amplitude: float | None = None
    velocity_center: tuple = 0.0

    def __post_init__(self):
        check_dimension(self.dim)
        object.__setattr__(self, "center", _vec(self.center, self.dim, "center"))
        object.__setattr__(
            self, "velocity_center", _vec(self.velocity_center, self.dim, "velocity_center")
        )
        check_positive(self.width_x, "width_x")
        check_positive(self.width_v, "width_v")
        if self.amplitude is None:
            a = (np.pi * self.width_x * self.width_v) ** (-self.dim)
            object.__setattr__(self, "amplitude", float(a))
        else:
            check_positive(self.amplitude, "amplitude", strict=False)
            object.__setattr__(self, "amplitude", float(self.amplitude))

    @property
    def mass(self) -> float:
        return self.amplitude * (np.pi * self.width_x * self.width_v) ** self.dim

    def __call__(self, xs, vs):
        r2 = sum((x - c) ** 2 for x, c in zip(xs, self.center))
        s2 = sum((v - u) ** 2 for v, u in zip(vs, self.velocity_center))
        return self.amplitude * np.exp(-r2 / self.width_x**2 - s2 / self.width_v**2)

    def sup_v(self, xs):
        r2 = sum((x - c) ** 2 for x, c in zip(xs, self.center))
        return self.amplitude * np.exp(-r2 / self.width_x**2)

    def factors(self):
        return tuple(
            GaussianData(
                1,
                self.center[i],
                self.width_x,
                self.width_v,
                self.amplitude if i == 0 else 1.0,
                self.velocity_center[i],
            )
            for i in range(self.dim)
        )

    def scaled(self, c):
        return GaussianData(
            self.dim, self.center, self.width_x, self.width_v, c * self.amplitude, self.velocity_center
        )

    def density(self, t, xs):
        """Closed-form velocity average of the free evolution at time t."""
        r2, s2 = self.width_x**2, self.width_v**2
        spread = r2 + s2 * t * t
        shifted = [x - c - u * t for x, c, u in zip(xs, self.center, self.velocity_center)]
        d2 = sum(y * y for y in shifted)
        pref = self.amplitude * (np.pi * s2 * r2 / spread) ** (self.dim / 2)
        return pref * np.exp(-d2 / spread)


@dataclass(frozen=True)
class BoxData(InitialData):
    """Indicator of the box |x_i - c_i| <= a, |v_i| <= b, times ``amplitude``."""

    dim: int
    half_width_x: float = 0.5
    half_width_v: float = 0.5
    amplitude: float = 1.0
    center: tuple = 0.0

    def __post_init__(self):
        check_dimension(self.dim)
        check_positive(self.half_width_x, "half_width_x")
        check_positive(self.half_width_v, "half_width_v")
        check_positive(self.amplitude, "amplitude", strict=False)
        object.__setattr__(self, "center", _vec(self.center, self.dim, "center"))

    def _x_ind(self, xs):
        out = 1.0
        for x, c in zip(xs, self.center):
            out = out * (np.abs(x - c) <= self.half_width_x)
        return out

    def __call__(self, xs, vs):
        out = self.amplitude * self._x_ind(xs)
        for v in vs:
            out = out * (np.abs(v) <= self.half_width_v)
        return out

    def sup_v(self, xs):
        return self.amplitude * self._x_ind(xs)

    def factors(self):
        return tuple(
            BoxData(1, self.half_width_x, self.half_width_v, self.amplitude if i == 0 else 1.0, self.center[i])
            for i in range(self.dim)
        )

    def scaled(self, c):
        return BoxData(self.dim, self.half_width_x, self.half_width_v, c * self.amplitude, self.center)


@dataclass(frozen=True)
class ZeroData(InitialData):
    """f0 = 0."""

    dim: int

    def __post_init__(self):
        check_dimension(self.dim)

    def __call__(self, xs, vs):
        return 0.0 * (sum(xs) + sum(vs))

    def sup_v(self, xs):
        return 0.0 * sum(xs)

    def scaled(self, c):
        return self


def load_table(path, grid: PhaseGrid) -> DistributionField:
    """Read f0 from a CSV with a ``value`` column in row-major grid order.

    Optional coordinate columns (x1.., v1..) are checked against the grid nodes.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"table {path} does not exist")
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "value" not in rows[0]:
        raise ValueError(f"table {path} needs a 'value' column")
    if len(rows) != grid.size:
        raise ValueError(f"table {path} has {len(rows)} rows, grid has {grid.size} nodes")
    values = np.array([float(r["value"]) for r in rows]).reshape(grid.shape)
    names = [f"x{i + 1}" for i in range(grid.dim)] + [f"v{i + 1}" for i in range(grid.dim)]
    coords = grid.coordinates()[0] + grid.coordinates()[1]
    for name, c in zip(names, coords):
        if name in rows[0]:
            col = np.array([float(r[name]) for r in rows]).reshape(grid.shape)
            if not np.allclose(col, np.broadcast_to(c, grid.shape), atol=1e-9):
                raise ValueError(f"table column {name} does not match the grid nodes")
    return DistributionField(grid, 0.0, values)


def write_table(path, f: DistributionField) -> None:
    """Write ``f`` in the format read by :func:`load_table`."""
    grid = f.grid
    xs, vs = grid.coordinates()
    cols = [np.broadcast_to(c, grid.shape).ravel() for c in xs + vs]
    names = [f"x{i + 1}" for i in range(grid.dim)] + [f"v{i + 1}" for i in range(grid.dim)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["value"])
        for row in zip(*cols, f.values.ravel()):
            w.writerow([repr(float(a)) for a in row])
