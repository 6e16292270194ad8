"""Exact solutions of the free transport equation T f = 0.

The solution is f(t, x, v) = f0(x - v t, v).  Velocity averages are formed by
quadrature along the characteristics instead of on a sheared Eulerian grid:

* for t < 1,  rho(t, x) = sum_v w_v g0(x - v t, v)       (interpolate in x),
* for t >= 1, rho(t, x) = t^-n sum_y w_y g0(y, (x - y)/t)  (interpolate in v),

where ``g0`` is the initial datum (or a commuted field at t = 0) and the sums
run over the nodes of the initial grid.  The second form keeps the integrand
resolved however sheared f(t) becomes.  Analytic data are evaluated directly,
and separable data reduce to products of one-dimensional problems.
"""

from __future__ import annotations

import itertools
import warnings
from functools import reduce

import numpy as np
from scipy.optimize import minimize

from .data import InitialData
from .fields import (
    Flavor,
    FieldId,
    Kind,
    OperatorWord,
    apply_field_jet,
    apply_word_jet,
    catalogue,
    free_time_jet,
)
from .grid import (
    DistributionField,
    PhaseGrid,
    SpatialField,
    SpatialGrid,
    cubic_stencil,
    diff4,
    integrate_x,
    integrate_xv,
    interpolate_points,
    tensor_gather,
)
from .validation import check_finite_array, check_int

N_MAX = 4
LATTICE_POINTS = {1: 201, 2: 31, 3: 15}
_CHUNK = 200_000


class SupportWarning(UserWarning):
    """The maximiser of a diagnostic sits on the edge of its sampling box."""


def _flat_nodes(axes):
    """(N, k) node coordinates, (N,) trapezoid weights and per-axis index arrays."""
    idx = np.indices(tuple(a.points for a in axes)).reshape(len(axes), -1)
    coords = np.stack([a.nodes[i] for a, i in zip(axes, idx)], axis=1)
    w = reduce(np.multiply, [a.weights()[i] for a, i in zip(axes, idx)])
    return coords, w, list(idx)


def _inside(axes, coords):
    ok = np.ones(coords.shape[:-1], dtype=bool)
    for k, a in enumerate(axes):
        c = coords[..., k]
        ok &= (c >= a.min - 1e-12 * a.h) & (c <= a.max + 1e-12 * a.h)
    return ok


class FreeSolution:
    """Free evolution of an initial phase-space field.

    Parameters
    ----------
    initial : DistributionField
        f0 sampled at t = 0.
    data : InitialData, optional
        Analytic form of f0.  When given, velocity averages of f itself use
        exact point values instead of interpolation.
    """

    def __init__(self, initial: DistributionField, data: InitialData | None = None):
        if initial.time != 0.0:
            raise ValueError("initial data must be stamped t = 0")
        if data is not None and data.dim != initial.grid.dim:
            raise ValueError("analytic data and grid dimensions differ")
        self.initial = initial
        self.data = data
        self._cache = {}
        self._factors = None
        parts = data.factors() if data is not None else None
        if parts is not None and initial.grid.dim > 1:
            g = initial.grid
            self._factors = tuple(
                FreeSolution.from_data(p, PhaseGrid(1, (g.x_axes[i],), (g.v_axes[i],)), check=False)
                for i, p in enumerate(parts)
            )

    @classmethod
    def from_data(cls, data: InitialData, grid: PhaseGrid, check: bool = True):
        return cls(data.sample(grid, check_support=check), data)

    @property
    def grid(self) -> PhaseGrid:
        return self.initial.grid

    @property
    def dim(self) -> int:
        return self.grid.dim

    # -------------------------------------------------------------- fields

    def _check_word(self, word: OperatorWord, max_length=N_MAX):
        if len(word) > max_length:
            raise ValueError(f"words longer than {max_length} are not supported")
        for z in word:
            if z.flavor is not Flavor.MICRO or z.dim != self.dim:
                raise ValueError("expected a microscopic word of matching dimension")
        need = 5 + 2 * len(word)
        if min(a.points for a in self.grid.axes) < need:
            raise ValueError(f"grid too coarse for a word of length {len(word)}")

    def commuted_initial(self, word: OperatorWord = OperatorWord(), max_length: int = N_MAX):
        """Z^a f at t = 0 on the initial grid.

        Transporting the result along characteristics gives Z^a f(t) for every
        word, since [T, Z] is 0 or T.  Time derivatives come from the equation.
        """
        word = OperatorWord(tuple(word))
        if not len(word):
            return self.initial
        self._check_word(word, max_length)
        if word not in self._cache:
            jet = free_time_jet(self.initial, 1 + word.time_derivative_count)
            vals = apply_word_jet(word, jet, self.grid, 0.0)[0]
            self._cache[word] = self.initial.with_values(vals)
        return self._cache[word]

    def evaluate_points(self, t, points, word: OperatorWord = OperatorWord()) -> np.ndarray:
        """Z^a f(t) at an (M, 2n) array of phase-space points; 0 off the initial box."""
        t = _check_time(t)
        pts = np.array(np.atleast_2d(points), dtype=float)
        n = self.dim
        pts[:, :n] -= t * pts[:, n:]
        return interpolate_points(self.commuted_initial(word), pts)

    def evaluate(self, t, x, v) -> float:
        """f(t, x, v) = f0(x - v t, v)."""
        pt = np.concatenate([np.atleast_1d(x), np.atleast_1d(v)]).astype(float)
        if pt.size != 2 * self.dim:
            raise ValueError(f"x and v need {self.dim} components each")
        return float(self.evaluate_points(t, pt[None, :])[0])

    def sample(self, t, grid: PhaseGrid | None = None, word=OperatorWord()) -> DistributionField:
        """Eulerian sample of Z^a f(t) on ``grid`` (default: the initial grid)."""
        grid = grid or self.grid
        xs, vs = grid.coordinates()
        pts = np.stack([np.broadcast_to(c, grid.shape).ravel() for c in xs + vs], axis=1)
        vals = self.evaluate_points(t, pts, word).reshape(grid.shape)
        return DistributionField(grid, float(t), vals)

    def l1_norm(self, word: OperatorWord = OperatorWord(), t: float = 0.0) -> float:
        """||Z^a f(t)||_L1 sampled on the Lagrangian nodes (y + v t, v).

        The map (y, v) -> (y + v t, v) has unit Jacobian, so the trapezoid
        weights of the initial grid apply unchanged.
        """
        g = self.grid
        t = _check_time(t)
        xs, vs = g.coordinates()
        feet = [(x + t * v) - t * v for x, v in zip(xs, vs)]
        snapped = [np.rint((y - a.min) / a.h) for y, a in zip(feet, g.x_axes)]
        if all(np.max(np.abs(y - (a.min + k * a.h))) <= 1e-9 * a.h for y, k, a in zip(feet, snapped, g.x_axes)):
            # feet land on nodes: read the commuted data there
            vals = np.abs(self.commuted_initial(word).values)
            return integrate_xv(vals, g)
        pts = np.stack(
            [np.broadcast_to(x + t * v, g.shape).ravel() for x, v in zip(xs, vs)]
            + [np.broadcast_to(v, g.shape).ravel() for v in vs],
            axis=1,
        )
        vals = np.abs(self.evaluate_points(t, pts, word)).reshape(g.shape)
        return integrate_xv(vals, g)

    # ---------------------------------------------------- velocity averages

    def _separable(self, word, absolute):
        """Sum of per-axis 1D word products equal to ``word``, or ``None``.

        Applies when the data split over the axes and the word has translations
        plus at most one time translation (d_t = -sum_i v_i d_{x_i} splits into
        n separable terms).
        """
        if self._factors is None:
            return None
        dx1 = FieldId(Kind.SPACE_TRANSLATION, Flavor.MICRO, 1, 1)
        dt1 = FieldId(Kind.TIME_TRANSLATION, Flavor.MICRO, 1)
        per_axis = [[] for _ in range(self.dim)]
        n_dt = 0
        for z in word:
            if z.kind is Kind.SPACE_TRANSLATION:
                per_axis[z.i - 1].append(dx1)
            elif z.kind is Kind.TIME_TRANSLATION:
                n_dt += 1
            else:
                return None
        if n_dt == 0:
            return [[OperatorWord(tuple(w)) for w in per_axis]]
        if n_dt > 1 or absolute:
            return None
        return [
            [OperatorWord(tuple(w) + ((dt1,) if i == j else ())) for j, w in enumerate(per_axis)]
            for i in range(self.dim)
        ]

    def _velocity_form(self, word):
        """Initial-grid H and power p with rho(Z^a f)(t) = t^-p rho(H transported).

        For words of translations and at most one d_t, every x-derivative of a
        free solution can be traded for t^-1 d_v inside the velocity average.
        This avoids the cancellation that ruins the direct form at large t.
        """
        alpha = [0] * self.dim
        n_dt = 0
        for z in word:
            if z.kind is Kind.SPACE_TRANSLATION:
                alpha[z.i - 1] += 1
            elif z.kind is Kind.TIME_TRANSLATION:
                n_dt += 1
            else:
                return None
        if n_dt > 1 or not len(word):
            return None
        key = ("v-form", tuple(alpha), n_dt)
        if key not in self._cache:
            self._check_word(word)
            g = self.grid
            n = self.dim

            def dv(values, counts):
                for i, c in enumerate(counts):
                    for _ in range(c):
                        values = diff4(values, g.v_axes[i].h, n + i)
                return values

            f0 = self.initial.values
            if n_dt == 0:
                h = dv(f0, alpha)
            else:
                _, vs = g.coordinates()
                h = -sum(
                    dv(vs[i] * f0, [a + (k == i) for k, a in enumerate(alpha)]) for i in range(n)
                )
            self._cache[key] = h
        return self._cache[key], sum(alpha) + n_dt

    def density_points(self, t, points, word=OperatorWord(), absolute=False) -> np.ndarray:
        """rho(Z^a f)(t, x) (or rho(|Z^a f|)) at an (M, n) array of x points."""
        t = _check_time(t)
        word = OperatorWord(tuple(word))
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"points need {self.dim} coordinates")
        terms = self._separable(word, absolute)
        if terms is not None:
            out = np.zeros(pts.shape[0])
            for words in terms:
                prod = np.ones(pts.shape[0])
                for i, (sol, w) in enumerate(zip(self._factors, words)):
                    prod = prod * sol.density_points(t, pts[:, i : i + 1], w, absolute)
                out += prod
            return out
        if not len(word) and self.data is not None:
            return self._density(t, pts, None, absolute)
        vform = None if absolute or t < 1.0 else self._velocity_form(word)
        if vform is not None:
            h, power = vform
            return self._density(t, pts, h, False) / t**power
        return self._density(t, pts, self.commuted_initial(word).values, absolute)

    def _density(self, t, pts, values, absolute):
        g = self.grid
        n = self.dim
        out = np.empty(pts.shape[0])
        if t >= 1.0:
            nodes, w, idx = _flat_nodes(g.x_axes)
            axes_q = g.v_axes
        else:
            nodes, w, idx = _flat_nodes(g.v_axes)
            axes_q = g.x_axes
        chunk = max(1, _CHUNK // nodes.shape[0])
        for s in range(0, pts.shape[0], chunk):
            p = pts[s : s + chunk, None, :]
            q = (p - nodes[None]) / t if t >= 1.0 else p - t * nodes[None]
            inside = _inside(axes_q, q)
            if values is None:
                fixed = [nodes[None, :, i] for i in range(n)]
                moving = [q[..., i] for i in range(n)]
                xs, vs = (fixed, moving) if t >= 1.0 else (moving, fixed)
                vals = self.data(xs, vs)
            else:
                spec = []
                for k, a in enumerate(axes_q):
                    base, wt, _ = cubic_stencil(a, q[..., k])
                    spec.append((base, wt))
                fixed = [i[None, :] for i in idx]
                spec = fixed + spec if t >= 1.0 else spec + fixed
                vals = tensor_gather(values, spec)
            vals = np.where(inside, vals, 0.0)
            if absolute:
                vals = np.abs(vals)
            out[s : s + chunk] = vals @ w
        return out / t**n if t >= 1.0 else out

    def density_field(self, t, grid: SpatialGrid, word=OperatorWord(), absolute=False) -> SpatialField:
        """rho(Z^a f)(t) sampled on a spatial grid."""
        xs = grid.coordinates()
        terms = self._separable(OperatorWord(tuple(word)), absolute)
        if terms is not None:
            vals = 0.0
            for words in terms:
                prod = 1.0
                for i, (sol, w) in enumerate(zip(self._factors, words)):
                    node = grid.axes[i].nodes
                    shape = [1] * grid.dim
                    shape[i] = node.size
                    prod = prod * sol.density_points(t, node[:, None], w, absolute).reshape(shape)
                vals = vals + prod
            return SpatialField(grid, float(t), np.broadcast_to(vals, grid.shape).copy())
        pts = np.stack([np.broadcast_to(x, grid.shape).ravel() for x in xs], axis=1)
        vals = self.density_points(t, pts, word, absolute).reshape(grid.shape)
        return SpatialField(grid, float(t), vals)

    def cone_box(self, t) -> list:
        """Per-axis interval reached by characteristics from the initial box."""
        return [
            (xa.min + t * va.min, xa.max + t * va.max)
            for xa, va in zip(self.grid.x_axes, self.grid.v_axes)
        ]

    def sup_density(self, t, word=OperatorWord(), absolute=True, weight=None, lattice=None):
        """sup over x of |weight(x) rho(Z^a f)(t, x)| and its location.

        A lattice over the characteristic cone locates the maximum, which is
        then polished by Nelder-Mead.  ``weight`` maps (M, n) points to (M,).
        """
        n = self.dim
        box = self.cone_box(t)
        m = lattice or LATTICE_POINTS[n]
        m = m + (1 - m % 2)
        axes = [np.linspace(lo, hi, m) for lo, hi in box]
        pts = np.stack([c.ravel() for c in np.meshgrid(*axes, indexing="ij")], axis=1)

        def objective(p):
            p = np.atleast_2d(p)
            val = np.abs(self.density_points(t, p, word, absolute))
            return val * weight(p) if weight is not None else val

        vals = objective(pts)
        k = int(np.argmax(vals))
        best, where = float(vals[k]), pts[k]
        if best == 0.0:
            return 0.0, where
        multi = np.unravel_index(k, (m,) * n)
        if any(i in (0, m - 1) for i in multi):
            warnings.warn(f"maximiser at t={t} lies on the sampling box edge", SupportWarning)
        step = np.array([(hi - lo) / (m - 1) for lo, hi in box])
        simplex = np.vstack([where] + [where + step * e for e in np.eye(n)])
        res = minimize(
            lambda p: -objective(p)[0],
            where,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "xatol": 1e-9 * float(step.max()),
                "fatol": 1e-14 * best,
                "maxiter": 200 * n,
            },
        )
        if -res.fun > best:
            best, where = float(-res.fun), res.x
        return best, np.asarray(where)

    # -------------------------------------------------------------- series

    def decay_series(self, word=OperatorWord(), times=(), absolute=True) -> np.ndarray:
        """Rows (t, sup_x rho(|Z^a f|)(t, x)); ``absolute=False`` uses |rho(Z^a f)|."""
        times = _check_times(times)
        return np.array([[t, self.sup_density(t, word, absolute)[0]] for t in times]).reshape(-1, 2)

    def improved_derivative_decay_series(self, alpha, times) -> np.ndarray:
        """Rows (t, sup_x |rho(d_x^alpha f)|) for a spatial multi-index ``alpha``."""
        alpha = tuple(check_int(a, "alpha entry", 0) for a in alpha)
        if len(alpha) != self.dim:
            raise ValueError(f"alpha needs {self.dim} entries")
        if sum(alpha) + self.dim > N_MAX + 1:
            raise ValueError("|alpha| + n exceeds the supported derivative depth")
        word = OperatorWord(
            tuple(
                FieldId(Kind.SPACE_TRANSLATION, Flavor.MICRO, self.dim, i + 1)
                for i, a in enumerate(alpha)
                for _ in range(a)
            )
        )
        return self.decay_series(word, times, absolute=False)

    def time_derivative_decay_series(self, times) -> np.ndarray:
        """Rows (t, sup_x |rho(d_t f)|) with d_t f = -v.grad_x f."""
        word = OperatorWord((FieldId(Kind.TIME_TRANSLATION, Flavor.MICRO, self.dim),))
        return self.decay_series(word, times, absolute=False)

    # ------------------------------------------------------- right-hand sides

    def bardos_degond_rhs(self) -> float:
        """Integral over x of sup_v |f0(x, v)|.

        Uses the analytic sup when available, otherwise the maximum over the
        velocity nodes.
        """
        sg = self.grid.spatial
        if self.data is not None and self.data.sup_v(sg.coordinates()) is not None:
            sup = np.abs(np.broadcast_to(self.data.sup_v(sg.coordinates()), sg.shape))
        else:
            sup = np.max(np.abs(self.initial.values), axis=tuple(range(self.dim, 2 * self.dim)))
        return integrate_x(sup, sg)

    def ks_rhs(self, k: int) -> float:
        """Sum of ||Z^a f0||_L1 over restricted microscopic words with |a| <= k.

        Words are enumerated depth-first so that prefixes are applied once.
        """
        k = check_int(k, "k", 0, N_MAX)
        if k:
            if min(a.points for a in self.grid.axes) < 5 + 2 * k:
                raise ValueError(f"grid too coarse for words of length {k}")
        letters = catalogue(self.dim, Flavor.MICRO, restricted=True)
        g = self.grid

        def walk(values, depth):
            total = integrate_xv(np.abs(values), g)
            if depth < k:
                for z in letters:
                    total += walk(apply_field_jet(z, [values], g, 0.0)[0], depth + 1)
            return total

        return walk(self.initial.values, 0)

    def ks_ratio(self, times, k=None, lattice=None):
        """Rows (t, sup_x (1+t+|x|)^n rho(|f|)(t, x) / ks_rhs(k)), default k = n."""
        times = _check_times(times)
        rhs = self.ks_rhs(self.dim if k is None else k)
        n = self.dim
        rows = []
        for t in times:

            def weight(p, t=t):
                return (1.0 + t + np.linalg.norm(p, axis=1)) ** n

            val = self.sup_density(t, OperatorWord(), True, weight, lattice)[0]
            rows.append([t, val / rhs if rhs > 0 else 0.0])
        return np.array(rows).reshape(-1, 2)


def _check_time(t) -> float:
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"time must be finite and >= 0, got {t}")
    return t


def _check_times(times) -> np.ndarray:
    t = check_finite_array(np.atleast_1d(times), "times")
    if t.size and (np.any(t < 0) or np.any(np.diff(t) <= 0)):
        raise ValueError("times must be non-negative and strictly increasing")
    return t


def words_up_to(dim: int, k: int, restricted: bool = True) -> list:
    """All microscopic words of length <= k over the (restricted) catalogue."""
    letters = catalogue(dim, Flavor.MICRO, restricted)
    return [OperatorWord(w) for m in range(k + 1) for w in itertools.product(letters, repeat=m)]
