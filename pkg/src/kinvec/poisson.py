"""Free-space Poisson solves with the sign convention Delta = -sum_i d_i^2.

The default method convolves with the Green function truncated at the box
diameter R.  The truncated kernel has a closed-form, smooth Fourier transform,
so a zero-padded FFT of period at least L + R gives the free-space potential
to spectral accuracy:

* n = 3:  G = 1/(4 pi |x|),       G_R^(k) = 2 sin^2(kR/2) / k^2
* n = 2:  G = -log|x| / (2 pi),   G_R^(k) = (1 - J0(kR)) / k^2 - R log R J1(kR) / k
* n = 1:  G = -|x| / 2,           G_R^(k) = (1 - cos kR) / k^2 - R sin(kR) / k

A direct kernel convolution on a doubled grid (cell-averaged central value) is
kept as ``method="kernel"``; it is second-order accurate.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import integrate, special
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .fields import (
    Flavor,
    OperatorWord,
    apply_field_jet,
    apply_word_jet,
    laplacian_constant,
    pushdown_constant,
)
from .grid import (
    DistributionField,
    SpatialField,
    SpatialGrid,
    diff4,
    integrate_x,
    velocity_average_array,
    velocity_weight,
)
from .threads import num_threads
from .validation import check_delta

BOUNDARY_TOL = 1e-8
METHODS = ("spectral", "kernel")


class BoundaryMassError(ValueError):
    """The source does not decay to the box boundary."""


@dataclass(frozen=True)
class PoissonResult:
    """Potential, its gradient and the source it was solved from."""

    phi: SpatialField
    grad_phi: SpatialField
    source: SpatialField
    method: str = "spectral"

    @property
    def grid(self) -> SpatialGrid:
        return self.phi.grid


# ------------------------------------------------------------------ kernels


def truncated_kernel_hat(k, radius: float, dim: int) -> np.ndarray:
    """Fourier transform of the Green function restricted to |x| <= radius."""
    k = np.asarray(k, dtype=float)
    R = float(radius)
    out = np.empty_like(k)
    zero = k == 0
    kk = np.where(zero, 1.0, k)
    if dim == 3:
        out[:] = 2.0 * np.sin(0.5 * kk * R) ** 2 / kk**2
        out[zero] = 0.5 * R * R
    elif dim == 2:
        out[:] = (1.0 - special.j0(kk * R)) / kk**2 - R * np.log(R) * special.j1(kk * R) / kk
        out[zero] = 0.25 * R * R - 0.5 * R * R * np.log(R)
    elif dim == 1:
        out[:] = (1.0 - np.cos(kk * R)) / kk**2 - R * np.sin(kk * R) / kk
        out[zero] = -0.5 * R * R
    else:
        raise ValueError(f"unsupported dimension {dim}")
    return out


def green_function(r, dim: int) -> np.ndarray:
    """Free-space Green function of -sum d_i^2 at distance r > 0."""
    r = np.asarray(r, dtype=float)
    if dim == 3:
        return 1.0 / (4.0 * np.pi * r)
    if dim == 2:
        return -np.log(r) / (2.0 * np.pi)
    if dim == 1:
        return -0.5 * r
    raise ValueError(f"unsupported dimension {dim}")


@functools.lru_cache(maxsize=None)
def _unit_cell_average(dim: int) -> float:
    """Mean over the centred unit cell of 1/|u| (n=3) or log|u| (n=2)."""
    if dim == 3:
        # inner z-integral of 1/r in closed form: asinh(1/2 / rho)
        val, _ = integrate.dblquad(
            lambda y, x: np.arcsinh(0.5 / np.hypot(x, y)), 0, 0.5, 0, 0.5, epsabs=1e-13
        )
        return 8.0 * val
    if dim == 2:
        val, _ = integrate.dblquad(
            lambda y, x: 0.5 * np.log(x * x + y * y), 0, 0.5, 0, 0.5, epsabs=1e-13
        )
        return 4.0 * val
    raise ValueError(dim)


def _cell_averaged_center(h: float, dim: int) -> float:
    if dim == 3:
        return _unit_cell_average(3) / (4.0 * np.pi * h)
    if dim == 2:
        return -(np.log(h) + _unit_cell_average(2)) / (2.0 * np.pi)
    return -h / 8.0


@dataclass(frozen=True)
class _Plan:
    shape: tuple
    kernel_hat: np.ndarray
    wavenumbers: tuple


@functools.lru_cache(maxsize=8)
def _spectral_plan(grid: SpatialGrid) -> _Plan:
    n = grid.dim
    sides = [a.max - a.min for a in grid.axes]
    R = float(np.sqrt(sum(s * s for s in sides)))
    shape = []
    for a, s in zip(grid.axes, sides):
        need = int(np.ceil((s + R) / a.h)) + 1
        shape.append(sfft.next_fast_len(need, real=True))
    ks = []
    for k, (a, m) in enumerate(zip(grid.axes, shape)):
        freq = sfft.rfftfreq(m, a.h) if k == n - 1 else sfft.fftfreq(m, a.h)
        kv = 2.0 * np.pi * freq
        sh = [1] * n
        sh[k] = kv.size
        ks.append(kv.reshape(sh))
    kmag = np.sqrt(sum(k * k for k in ks))
    return _Plan(tuple(shape), truncated_kernel_hat(kmag, R, n), tuple(ks))


@functools.lru_cache(maxsize=8)
def _kernel_plan(grid: SpatialGrid):
    n = grid.dim
    shape = tuple(sfft.next_fast_len(2 * a.points - 1, real=True) for a in grid.axes)
    offs = []
    for k, (a, m) in enumerate(zip(grid.axes, shape)):
        idx = np.arange(m)
        d = np.where(idx < a.points, idx, idx - m) * a.h
        sh = [1] * n
        sh[k] = m
        offs.append(d.reshape(sh))
    r = np.sqrt(sum(d * d for d in offs))
    with np.errstate(divide="ignore"):
        g = green_function(np.where(r == 0, 1.0, r), n)
    h = float(np.prod(grid.spacing)) ** (1.0 / n)
    g = np.where(r == 0, _cell_averaged_center(h, n), g)
    return shape, sfft.rfftn(g, workers=num_threads())


# ------------------------------------------------------------------- solving


def _check_source(source: SpatialField, tol: float):
    if len(source.components) != 1:
        raise ValueError("the Poisson source must be a scalar field")
    vals = source.components[0]
    peak = float(np.max(np.abs(vals))) if vals.size else 0.0
    if peak == 0.0:
        return vals
    edge = 0.0
    for ax in range(vals.ndim):
        for k in (0, -1):
            edge = max(edge, float(np.max(np.abs(np.take(vals, k, axis=ax)))))
    if edge > tol * peak:
        raise BoundaryMassError(
            f"source reaches the box boundary ({edge:.3e} > {tol:.1e} x peak); enlarge the box"
        )
    return vals


def solve(source: SpatialField, method: str = "spectral", boundary_tol: float = BOUNDARY_TOL) -> PoissonResult:
    """Solve -sum d_i^2 phi = source on R^n for a source supported in the box."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    vals = _check_source(source, boundary_tol)
    grid = source.grid
    n = grid.dim
    workers = num_threads()
    inner = tuple(slice(0, a.points) for a in grid.axes)
    if method == "spectral":
        plan = _spectral_plan(grid)
        rho_hat = sfft.rfftn(vals, s=plan.shape, workers=workers)
        prod = plan.kernel_hat * rho_hat
        phi = sfft.irfftn(prod, s=plan.shape, workers=workers)[inner]
        grads = tuple(
            sfft.irfftn(1j * k * prod, s=plan.shape, workers=workers)[inner] for k in plan.wavenumbers
        )
    else:
        shape, g_hat = _kernel_plan(grid)
        cell = float(np.prod(grid.spacing))
        phi = cell * sfft.irfftn(g_hat * sfft.rfftn(vals, s=shape, workers=workers), s=shape, workers=workers)[inner]
        grads = tuple(diff4(phi, a.h, k) for k, a in enumerate(grid.axes))
    t = source.time
    return PoissonResult(
        SpatialField(grid, t, phi),
        SpatialField(grid, t, grads if n > 1 else (grads[0],)),
        source,
        method,
    )


def spectral_laplacian_residual(source: SpatialField) -> float:
    """max|(-Delta phi) - source| / max|source| with the spectral Laplacian.

    Evaluates k^2 G_R^(k) rho^(k) on the padded grid, i.e. the spectral
    -Laplacian applied to the computed potential.
    """
    vals = _check_source(source, BOUNDARY_TOL)
    peak = float(np.max(np.abs(vals)))
    if peak == 0.0:
        return 0.0
    plan = _spectral_plan(source.grid)
    k2 = sum(k * k for k in plan.wavenumbers)
    rho_hat = sfft.rfftn(vals, s=plan.shape, workers=num_threads())
    lap = sfft.irfftn(k2 * plan.kernel_hat * rho_hat, s=plan.shape, workers=num_threads())
    inner = tuple(slice(0, a.points) for a in source.grid.axes)
    return float(np.max(np.abs(lap[inner] - vals)) / peak)


def stencil_laplacian(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """-sum_i d_i^2 with nested fourth-order first-derivative stencils."""
    return -sum(diff4(diff4(values, a.h, k), a.h, k) for k, a in enumerate(grid.axes))


def stencil_laplacian_residual(result: PoissonResult, margin: int = 4) -> float:
    """Interior max|(-Delta phi) - source| / max|source| with 4th-order stencils."""
    vals = result.source.components[0]
    peak = float(np.max(np.abs(vals)))
    if peak == 0.0:
        return 0.0
    lap = stencil_laplacian(result.phi.values, result.grid)
    inner = tuple(slice(margin, -margin) for _ in range(result.grid.dim))
    return float(np.max(np.abs(lap - vals)[inner]) / peak)


# ---------------------------------------------------------- commuted sources


def _scalar_jet(field, jet):
    base = field.components[0] if isinstance(field, SpatialField) else np.asarray(field)
    return [base] + [j.components[0] if isinstance(j, SpatialField) else np.asarray(j) for j in (jet or ())]


def macro_word_jet(word: OperatorWord, rho: SpatialField, rho_time_derivatives=()) -> np.ndarray:
    """Z^a applied to a spatial field (time derivatives supplied when needed)."""
    _check_macro(word, rho.grid.dim)
    jet = _scalar_jet(rho, rho_time_derivatives)
    if word.time_derivative_count >= len(jet):
        raise ValueError("word contains d/dt: supply time derivatives of the density")
    return apply_word_jet(word, jet, rho.grid, rho.time)[0]


def _check_macro(word, dim):
    for z in word:
        if z.flavor is not Flavor.MACRO or z.dim != dim:
            raise ValueError("expected a macroscopic word of matching dimension")


def commuted_source(rho, word: OperatorWord, rho_time_derivatives=()) -> SpatialField:
    """Source of the equation solved by Z^a phi when Delta phi = rho.

    Uses Delta Z = (Z + d_Z) Delta with d_Z = 2 for both scalings, so the
    source is (Z_1 + d_1) ... (Z_m + d_m) rho.  ``rho`` may be a density or a
    distribution (its velocity average is taken).
    """
    if isinstance(rho, DistributionField):
        rho = SpatialField(rho.grid.spatial, rho.time, velocity_average_array(rho.values, rho.grid))
    _check_macro(word, rho.grid.dim)
    jet = _scalar_jet(rho, rho_time_derivatives)
    if word.time_derivative_count >= len(jet):
        raise ValueError("word contains d/dt: supply time derivatives of the density")
    for z in reversed(word.letters):
        zj = apply_field_jet(z, jet, rho.grid, rho.time)
        d = laplacian_constant(z)
        jet = [a + d * b for a, b in zip(zj, jet)]
    return rho.with_values(jet[0])


def pushdown_density(f: DistributionField, word: OperatorWord) -> np.ndarray:
    """Z^a rho(f) evaluated as rho((Z_1 + c_1) ... (Z_m + c_m) f) with micro fields.

    Restricted to words without d/dt (they would need time derivatives of f).
    """
    _check_macro(word, f.grid.dim)
    if word.time_derivative_count:
        raise ValueError("pushdown evaluation needs words without d/dt")
    g = f.values
    for z in reversed(word.letters):
        g = apply_field_jet(z.micro, [g], f.grid, f.time)[0] + pushdown_constant(z) * g
    return velocity_average_array(g, f.grid)


# ------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class EllipticReport:
    """L^p norms of Z^a rho(f) and the weighted bound controlling them."""

    p: float
    direct: float
    pushdown: float
    holder_bound: float
    within_hypothesis: bool

    @property
    def flag(self) -> str:
        return "ok" if self.within_hypothesis else "outside theorem hypothesis"


def chi_inverse_integral(dim: int, delta: float) -> float:
    """Integral over R^n of (1 + |v|^2)^(-(delta + n)/2)."""
    return float(np.pi ** (dim / 2) * special.gamma(delta / 2) / special.gamma((dim + delta) / 2))


def elliptic_lp_diagnostic(f: DistributionField, word: OperatorWord, delta: float) -> EllipticReport:
    """||Z^a rho(f)||_{L^p}, p = 1 + delta, with its weighted Holder bound.

    ``direct`` differentiates rho(f) with macroscopic stencils; ``pushdown``
    forms rho((Z+c) f) with microscopic stencils.  The bound is
    (int chi^-1 dv)^(delta/(1+delta)) ||(1+|v|^2)^(delta(delta+n)/(2(1+delta))) g||_{L^p}
    with g = (Z_1 + c_1) ... f.
    """
    delta = check_delta(delta)
    n = f.grid.dim
    ok = n >= 3
    if ok and not delta < (n - 2) / (n + 2):
        raise ValueError(f"delta must lie in (0, {(n - 2) / (n + 2):.4g}) in dimension {n}")
    p = 1.0 + delta
    sg = f.grid.spatial
    rho = SpatialField(sg, f.time, velocity_average_array(f.values, f.grid))
    direct_vals = macro_word_jet(word, rho)
    push_vals = pushdown_density(f, word)
    g = f.values
    for z in reversed(word.letters):
        g = apply_field_jet(z.micro, [g], f.grid, f.time)[0] + pushdown_constant(z) * g
    w = velocity_weight(f.grid, delta * (delta + n) / 2.0)
    weighted = float(integrate_x(velocity_average_array(w * np.abs(g) ** p, f.grid), sg)) ** (1 / p)
    bound = chi_inverse_integral(n, delta) ** (delta / (1 + delta)) * weighted

    def lp(a):
        return float(integrate_x(np.abs(a) ** p, sg)) ** (1 / p)

    return EllipticReport(p, lp(direct_vals), lp(push_vals), bound, ok)


def _density_of(item) -> SpatialField:
    if isinstance(item, DistributionField):
        return SpatialField(item.grid.spatial, item.time, velocity_average_array(item.values, item.grid))
    if isinstance(item, SpatialField):
        return item
    raise TypeError(f"expected a DistributionField or SpatialField, got {type(item).__name__}")


def gradient_l2_norm(rho: SpatialField, word: OperatorWord = OperatorWord(), method="spectral") -> float:
    """||grad Z^a phi||_{L^2(R^n)} for Delta phi = rho.

    In n = 3 the energy identity ||grad psi||^2 = int psi (Delta psi) gives the
    whole-space norm from box data.  In n < 3 the gradient is integrated over
    the box.
    """
    src = commuted_source(rho, word)
    res = solve(src, method)
    if rho.grid.dim == 3:
        return float(np.sqrt(max(integrate_x(res.phi.values * src.values, rho.grid), 0.0)))
    g2 = sum(c * c for c in res.grad_phi.components)
    return float(np.sqrt(integrate_x(g2, rho.grid)))


def l2_gradient_decay(series, word: OperatorWord = OperatorWord(), method="spectral") -> np.ndarray:
    """Rows (t, ||grad Z^a phi(t)||_{L^2}) for a time series of densities or distributions."""
    rows = []
    for item in series:
        rho = _density_of(item)
        rows.append([rho.time, gradient_l2_norm(rho, word, method)])
    return np.array(rows).reshape(-1, 2)


def pointwise_field_decay(series, word: OperatorWord = OperatorWord(), method="spectral") -> np.ndarray:
    """Rows (t, sup_x |grad Z^a phi| (1 + t + |x|)^(n/2) t^((n-2)/2))."""
    rows = []
    for item in series:
        rho = _density_of(item)
        n = rho.grid.dim
        t = rho.time
        res = solve(commuted_source(rho, word), method)
        mag = np.sqrt(sum(c * c for c in res.grad_phi.components))
        r = np.sqrt(sum(x * x for x in rho.grid.coordinates()))
        norm = mag * (1.0 + t + r) ** (n / 2)
        tw = t ** ((n - 2) / 2) if t > 0 else (1.0 if n == 2 else 0.0)
        rows.append([t, float(np.max(norm)) * tw])
    return np.array(rows).reshape(-1, 2)


# ------------------------------------------------------------ estimator API


class FreeSpacePoissonSolver(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` prepares the kernel for a grid, ``transform`` solves.

    ``transform`` maps a density array (grid shape) to the potential array.
    """

    def __init__(self, method: str = "spectral", boundary_tol: float = BOUNDARY_TOL):
        self.method = method
        self.boundary_tol = boundary_tol

    def fit(self, X, y=None):
        grid = X.grid if isinstance(X, SpatialField) else X
        if not isinstance(grid, SpatialGrid):
            raise TypeError("fit expects a SpatialGrid or SpatialField")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "spectral":
            _spectral_plan(grid)
        else:
            _kernel_plan(grid)
        self.grid_ = grid
        self.n_dim_ = grid.dim
        return self

    def solve(self, rho) -> PoissonResult:
        check_is_fitted(self, "grid_")
        src = rho if isinstance(rho, SpatialField) else SpatialField(self.grid_, 0.0, np.asarray(rho))
        if src.grid != self.grid_:
            raise ValueError("density grid differs from the fitted grid")
        return solve(src, self.method, self.boundary_tol)

    def transform(self, X):
        return self.solve(X).phi.values

    def gradient(self, X) -> np.ndarray:
        """Gradient components stacked on a leading axis."""
        return np.stack(self.solve(X).grad_phi.components)
