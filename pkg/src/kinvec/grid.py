"""Phase-space grids, sampled fields, quadrature, stencils and interpolation.

Arrays on a :class:`PhaseGrid` have shape ``x_shape + v_shape`` (all position
axes first, then all velocity axes).  Spatial arrays have shape ``x_shape``.
Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .validation import check_dimension, check_finite_array, check_int

#: Default bound on |f| over the outermost grid layer at t = 0.
SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class AxisSpec:
    """A uniform 1-D axis ``min + h * k`` for ``k = 0 .. points - 1``."""

    min: float
    max: float
    points: int

    def __post_init__(self):
        check_int(self.points, "points", minimum=4)
        if not (np.isfinite(self.min) and np.isfinite(self.max)) or self.max <= self.min:
            raise ValueError(f"axis needs finite min < max, got [{self.min}, {self.max}]")
        object.__setattr__(self, "min", float(self.min))
        object.__setattr__(self, "max", float(self.max))

    @property
    def h(self) -> float:
        return (self.max - self.min) / (self.points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.points)

    def weights(self) -> np.ndarray:
        """Composite trapezoid weights."""
        w = np.full(self.points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def refined(self, factor: int = 2) -> "AxisSpec":
        """Same extent, spacing divided by ``factor``."""
        return AxisSpec(self.min, self.max, factor * (self.points - 1) + 1)


def _as_axes(axes, dim):
    axes = tuple(a if isinstance(a, AxisSpec) else AxisSpec(*a) for a in axes)
    if len(axes) != dim:
        raise ValueError(f"expected {dim} axes, got {len(axes)}")
    return axes


@dataclass(frozen=True)
class SpatialGrid:
    """The x-projection of a phase grid: n uniform position axes."""

    axes: tuple

    def __post_init__(self):
        object.__setattr__(self, "axes", _as_axes(self.axes, len(self.axes)))
        check_dimension(len(self.axes))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.points for a in self.axes)

    @property
    def spacing(self) -> tuple:
        return tuple(a.h for a in self.axes)

    def coordinates(self) -> list:
        """Broadcastable coordinate arrays, one per axis."""
        return _broadcast_nodes(self.axes, self.dim)

    def weights(self) -> np.ndarray:
        return _tensor_weights(self.axes)

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(tuple(a.refined(factor) for a in self.axes))

    @classmethod
    def cube(cls, dim, half_width, points):
        return cls(tuple(AxisSpec(-half_width, half_width, points) for _ in range(dim)))


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform tensor grid over (x, v) in R^n x R^n, n in {1, 2, 3}."""

    dim: int
    x_axes: tuple
    v_axes: tuple

    def __post_init__(self):
        check_dimension(self.dim)
        object.__setattr__(self, "x_axes", _as_axes(self.x_axes, self.dim))
        object.__setattr__(self, "v_axes", _as_axes(self.v_axes, self.dim))

    @classmethod
    def uniform(cls, dim, x_range, v_range, x_points, v_points):
        """Same axis in every direction: ``x_range=(a, b)``, ``v_range=(c, d)``."""
        xa = AxisSpec(x_range[0], x_range[1], x_points)
        va = AxisSpec(v_range[0], v_range[1], v_points)
        return cls(dim, (xa,) * dim, (va,) * dim)

    @property
    def axes(self) -> tuple:
        return self.x_axes + self.v_axes

    @property
    def shape(self) -> tuple:
        return tuple(a.points for a in self.axes)

    @property
    def x_shape(self) -> tuple:
        return self.shape[: self.dim]

    @property
    def v_shape(self) -> tuple:
        return self.shape[self.dim :]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spatial(self) -> SpatialGrid:
        return SpatialGrid(self.x_axes)

    def coordinates(self) -> tuple:
        """Broadcastable ``(xs, vs)``: two lists of n arrays with 2n dims each."""
        c = _broadcast_nodes(self.axes, 2 * self.dim)
        return c[: self.dim], c[self.dim :]

    def weights(self) -> np.ndarray:
        return _tensor_weights(self.axes)

    def refined(self, factor: int = 2) -> "PhaseGrid":
        return PhaseGrid(
            self.dim,
            tuple(a.refined(factor) for a in self.x_axes),
            tuple(a.refined(factor) for a in self.v_axes),
        )

    def axis_index(self, axis) -> int:
        """Map ``'x1'``, ``'v2'``, ... (or an int) to a position in ``axes``."""
        return _axis_index(axis, self.dim, allow_v=True)

    def sample(self, func, time=0.0) -> "DistributionField":
        """Sample ``func(xs, vs)`` (broadcastable coordinate lists) on the grid."""
        xs, vs = self.coordinates()
        vals = np.broadcast_to(np.asarray(func(xs, vs), dtype=float), self.shape)
        return DistributionField(self, float(time), np.array(vals))


def _broadcast_nodes(axes, ndim):
    out = []
    for k, a in enumerate(axes):
        shape = [1] * ndim
        shape[k] = a.points
        out.append(a.nodes.reshape(shape))
    return out


def _tensor_weights(axes):
    w = np.ones(())
    for a in axes:
        w = np.multiply.outer(w, a.weights())
    return w


def _axis_index(axis, dim, allow_v):
    if isinstance(axis, (int, np.integer)):
        idx = int(axis)
        limit = 2 * dim if allow_v else dim
        if not 0 <= idx < limit:
            raise ValueError(f"axis index {idx} out of range")
        return idx
    if isinstance(axis, str) and len(axis) >= 2 and axis[0] in "xv" and axis[1:].isdigit():
        i = int(axis[1:])
        if not 1 <= i <= dim:
            raise ValueError(f"axis {axis!r} out of range for dimension {dim}")
        if axis[0] == "v":
            if not allow_v:
                raise ValueError("velocity axes are not available on a spatial field")
            return dim + i - 1
        return i - 1
    raise ValueError(f"unrecognised axis {axis!r}")


@dataclass(frozen=True)
class DistributionField:
    """A sampled phase-space function f(t, x, v)."""

    grid: PhaseGrid
    time: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = check_finite_array(self.values, "values", self.grid.shape).view()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "time", float(self.time))

    def with_values(self, values, time=None) -> "DistributionField":
        return DistributionField(self.grid, self.time if time is None else time, values)

    def boundary_max(self) -> float:
        """Largest |f| over the outermost layer of every axis."""
        return _boundary_max(self.values)

    def check_support(self, tol=SUPPORT_TOL) -> None:
        """Enforce the compact-support convention on the box boundary."""
        b = self.boundary_max()
        if b >= tol:
            raise ValueError(f"|f| = {b:.3e} on the grid boundary exceeds support_tol = {tol:.1e}")

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpatialField:
    """Sampled scalar (one component) or vector (n components) function of x."""

    grid: SpatialGrid
    time: float
    components: tuple = field(repr=False)

    def __post_init__(self):
        comps = self.components
        if isinstance(comps, np.ndarray) and comps.shape == self.grid.shape:
            comps = (comps,)
        comps = tuple(check_finite_array(c, "component", self.grid.shape).view() for c in comps)
        if len(comps) not in {1, self.grid.dim}:
            raise ValueError(f"component count must be 1 or {self.grid.dim}, got {len(comps)}")
        for c in comps:
            c.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "time", float(self.time))

    @property
    def values(self) -> np.ndarray:
        """The single component of a scalar field."""
        if len(self.components) != 1:
            raise ValueError("values is only defined for scalar fields")
        return self.components[0]

    def with_values(self, values, time=None) -> "SpatialField":
        return SpatialField(self.grid, self.time if time is None else time, values)

    def __add__(self, other):
        return SpatialField(
            self.grid, self.time, tuple(a + b for a, b in zip(self.components, other.components))
        )

    def __sub__(self, other):
        return SpatialField(
            self.grid, self.time, tuple(a - b for a, b in zip(self.components, other.components))
        )

    def __mul__(self, c):
        return SpatialField(self.grid, self.time, tuple(a * float(c) for a in self.components))

    __rmul__ = __mul__


def _boundary_max(arr):
    b = 0.0
    for ax in range(arr.ndim):
        for k in (0, -1):
            b = max(b, float(np.max(np.abs(np.take(arr, k, axis=ax)))))
    return b


# ---------------------------------------------------------------- quadrature


def velocity_average(f: DistributionField) -> SpatialField:
    """rho(f)(x) = integral of f over v, composite trapezoid on the v-axes."""
    g = f.grid
    out = f.values
    for a in reversed(g.v_axes):
        out = np.tensordot(out, a.weights(), axes=([out.ndim - 1], [0]))
    return SpatialField(g.spatial, f.time, out)


def velocity_average_array(values: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Array form of :func:`velocity_average` for arbitrary ``x_shape + v_shape`` data."""
    out = values
    for a in reversed(grid.v_axes):
        out = np.tensordot(out, a.weights(), axes=([out.ndim - 1], [0]))
    return out


def integrate_x(values: np.ndarray, grid: SpatialGrid) -> float:
    """Trapezoid integral of a spatial array."""
    return float(np.sum(values * grid.weights()))


def integrate_xv(values: np.ndarray, grid: PhaseGrid) -> float:
    """Trapezoid integral over all of phase space."""
    return float(np.sum(velocity_average_array(values, grid) * grid.spatial.weights()))


def velocity_weight(grid: PhaseGrid, exponent: float) -> np.ndarray:
    """(1 + |v|^2)^exponent, broadcastable against phase-space arrays."""
    _, vs = grid.coordinates()
    v2 = sum(v * v for v in vs)
    return (1.0 + v2) ** exponent


def lp_norm_xv(f, p: float = 1.0, q: float = 0.0) -> float:
    """(integral of (1+|v|^2)^(q p / 2) |f|^p dx dv)^(1/p).

    With ``p = 1 + delta`` and ``q = delta (delta + n) / (1 + delta)`` this is the
    weighted L^(1+delta) part of the E_{N,delta} norm.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    vals = np.abs(f.values)
    if q != 0:
        vals = vals * velocity_weight(f.grid, 0.5 * q)
    integral = integrate_xv(vals**p if p != 1 else vals, f.grid)
    return integral ** (1.0 / p)


# ---------------------------------------------------------------- stencils

_C4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_B0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_B1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def diff4(arr: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order first derivative along ``axis`` with one-sided edge stencils."""
    a = np.moveaxis(np.asarray(arr, dtype=float), axis, -1)
    n = a.shape[-1]
    if n < 5:
        raise ValueError(f"finite differences need >= 5 points along the axis, got {n}")
    out = np.empty_like(a)
    out[..., 2:-2] = (a[..., :-4] - 8.0 * a[..., 1:-3] + 8.0 * a[..., 3:-1] - a[..., 4:]) / 12.0
    s0 = a[..., :5]
    out[..., 0] = s0 @ _B0
    out[..., 1] = s0 @ _B1
    s1 = a[..., -5:][..., ::-1]
    out[..., -1] = -(s1 @ _B0)
    out[..., -2] = -(s1 @ _B1)
    return np.moveaxis(out / h, -1, axis)


def partial(f, axis):
    """Fourth-order partial derivative of a sampled field.

    ``axis`` is ``'x1'..'xn'``, ``'v1'..'vn'`` (distribution fields only) or an
    integer position.  Vector spatial fields are differentiated per component.
    """
    if isinstance(f, DistributionField):
        k = f.grid.axis_index(axis)
        return f.with_values(diff4(f.values, f.grid.axes[k].h, k))
    if isinstance(f, SpatialField):
        k = _axis_index(axis, f.grid.dim, allow_v=False)
        h = f.grid.axes[k].h
        return SpatialField(f.grid, f.time, tuple(diff4(c, h, k) for c in f.components))
    raise TypeError(f"cannot differentiate {type(f).__name__}")


# ---------------------------------------------------------------- interpolation


def cubic_stencil(axis: AxisSpec, coord):
    """Base index, 4 Lagrange weights and inside-mask for cubic interpolation.

    The 4-point stencil is clamped to the grid so polynomials of degree <= 3 are
    reproduced exactly everywhere in ``[min, max]``.
    """
    coord = np.asarray(coord, dtype=float)
    u = (coord - axis.min) / axis.h
    inside = (coord >= axis.min - 1e-12 * axis.h) & (coord <= axis.max + 1e-12 * axis.h)
    base = np.clip(np.floor(u).astype(np.int64) - 1, 0, axis.points - 4)
    s = u - base
    w = np.stack(
        [
            -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
            s * (s - 2.0) * (s - 3.0) / 2.0,
            -s * (s - 1.0) * (s - 3.0) / 2.0,
            s * (s - 1.0) * (s - 2.0) / 6.0,
        ],
        axis=-1,
    )
    return base, w, inside


def tensor_gather(values: np.ndarray, spec: Sequence):
    """Evaluate a tensor-product interpolant at M points.

    ``spec`` has one entry per array axis: either an int array of shape (M,)
    (fixed node index) or a ``(base, weights)`` pair from :func:`cubic_stencil`.
    """
    interp = [k for k, s in enumerate(spec) if isinstance(s, tuple)]
    first = spec[interp[0]][0] if interp else spec[0]
    out = np.zeros(np.shape(first))
    for offs in itertools.product(range(4), repeat=len(interp)):
        idx = list(spec)
        wt = 1.0
        for k, m in zip(interp, offs):
            base, w = spec[k]
            idx[k] = base + m
            wt = wt * w[..., m]
        out += wt * values[tuple(idx)]
    return out


def interpolate_points(f: DistributionField, points) -> np.ndarray:
    """Tensor cubic interpolation at an (M, 2n) array of phase-space points.

    Points outside the grid box evaluate to 0 (compact-support convention).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    axes = f.grid.axes
    if pts.shape[1] != len(axes):
        raise ValueError(f"points must have {len(axes)} coordinates")
    spec, inside = [], np.ones(pts.shape[0], dtype=bool)
    for k, a in enumerate(axes):
        base, w, ins = cubic_stencil(a, pts[:, k])
        spec.append((base, w))
        inside &= ins
    return np.where(inside, tensor_gather(f.values, spec), 0.0)


def interpolate(f: DistributionField, point) -> float:
    """Cubic interpolant of ``f`` at a single phase-space point (0 outside the box)."""
    return float(interpolate_points(f, np.asarray(point, dtype=float)[None, :])[0])


def interpolate_spatial(values: np.ndarray, grid: SpatialGrid, points) -> np.ndarray:
    """Cubic interpolation of a spatial array at (M, n) points; 0 outside the box."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    spec, inside = [], np.ones(pts.shape[0], dtype=bool)
    for k, a in enumerate(grid.axes):
        base, w, ins = cubic_stencil(a, pts[:, k])
        spec.append((base, w))
        inside &= ins
    return np.where(inside, tensor_gather(values, spec), 0.0)
