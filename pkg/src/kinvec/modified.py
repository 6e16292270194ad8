"""Modified vector fields Y = Z - sum_k c^k d_{x^k} and their coefficients.

Each coefficient c solves T_phi c = mu t d_{x^k}[W phi] with zero data, where
W is the macroscopic field of the modified letter:

    uniform motion i   Phi^k_i    W phi = t d_i phi
    rotation (i, j)    omega^k_ij W phi = Omega_ij phi
    spatial scaling    sigma^k    W phi = S phi - 2 phi
    space-time scaling theta^k    W phi = (t d_t + S) phi

Coefficients are advanced in lockstep with f by the same Strang splitting;
the source, which does not depend on v, is added at the midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import erf

from .fields import (
    FieldId,
    Flavor,
    Kind,
    OperatorWord,
    apply_field_jet,
    catalogue,
    transport_jet,
)
from .grid import (
    DistributionField,
    PhaseGrid,
    SpatialField,
    diff4,
    integrate_xv,
    interpolate_spatial,
    velocity_average_array,
)
from .poisson import solve
from .vlasov import (
    Run,
    VPState,
    _check_health,
    _spatial_to_phase,
    free_stream,
    kick,
    solve_density,
)
from .validation import check_int, check_mu, check_positive

MODIFIED_KINDS = (Kind.UNIFORM_MOTION, Kind.ROTATION, Kind.SPATIAL_SCALING, Kind.SPACE_TIME_SCALING)


def coefficient_name(z: FieldId, k: int) -> str:
    """Name of the d_{x^k} coefficient attached to the microscopic field ``z``."""
    if z.kind is Kind.UNIFORM_MOTION:
        return f"Phi{k}_{z.i}"
    if z.kind is Kind.ROTATION:
        return f"omega{k}_{z.i}{z.j}"
    if z.kind is Kind.SPATIAL_SCALING:
        return f"sigma{k}"
    if z.kind is Kind.SPACE_TIME_SCALING:
        return f"theta{k}"
    raise ValueError(f"{z.label} carries no coefficient")


def modified_letters(dim: int, restricted: bool = True) -> tuple:
    """Fields that receive a correction (all but the translations)."""
    return tuple(
        z for z in catalogue(dim, Flavor.MICRO, restricted) if z.kind in MODIFIED_KINDS
    )


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficient fields on a phase grid at one time."""

    grid: PhaseGrid
    time: float
    values: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, grid: PhaseGrid, letters, time: float = 0.0):
        vals = {}
        for z in letters:
            for k in range(1, grid.dim + 1):
                vals[coefficient_name(z, k)] = np.zeros(grid.shape)
        return cls(grid, float(time), vals)

    def get(self, z: FieldId, k: int) -> np.ndarray:
        name = coefficient_name(z, k)
        if name not in self.values:
            raise KeyError(f"coefficient {name} was not evolved")
        return self.values[name]

    def field(self, name: str) -> DistributionField:
        return DistributionField(self.grid, self.time, self.values[name])

    def names(self) -> tuple:
        return tuple(self.values)


# ------------------------------------------------------------------- sources


def _macro(kind, dim, i=None, j=None):
    return FieldId(kind, Flavor.MACRO, dim, i, j)


def potential_time_derivative(f_values: np.ndarray, grid: PhaseGrid, time: float, method="spectral") -> np.ndarray:
    """d_t phi from Delta(d_t phi) = d_t rho = -div_x int v f dv."""
    _, vs = grid.coordinates()
    div = 0.0
    for i, a in enumerate(grid.x_axes):
        j = velocity_average_array(vs[i] * f_values, grid)
        div = div + diff4(j, a.h, i)
    src = SpatialField(grid.spatial, time, -div)
    return solve(src, method, boundary_tol=1e-6).phi.values


def macro_potential_word(z: FieldId, phi: np.ndarray, grid, time: float, phi_t=None) -> np.ndarray:
    """W phi for the modified letter ``z`` (see module docstring)."""
    sg = grid.spatial if isinstance(grid, PhaseGrid) else grid
    m = z.macro
    jet = [phi] if phi_t is None else [phi, phi_t]
    if z.kind is Kind.SPACE_TIME_SCALING and phi_t is None:
        raise ValueError("the space-time scaling source needs d_t phi")
    out = apply_field_jet(m, jet, sg, time)[0]
    if z.kind is Kind.SPATIAL_SCALING:
        out = out - 2.0 * phi
    return out


def coefficient_sources(phi: np.ndarray, grid, time: float, letters, mu: int = 1, phi_t=None) -> dict:
    """mu t d_{x^k}[W phi] for every coefficient of ``letters`` (spatial arrays)."""
    mu = check_mu(mu)
    sg = grid.spatial if isinstance(grid, PhaseGrid) else grid
    out = {}
    for z in letters:
        w = macro_potential_word(z, phi, sg, time, phi_t)
        for k, a in enumerate(sg.axes, start=1):
            out[coefficient_name(z, k)] = mu * time * diff4(w, a.h, k - 1)
    return out


# -------------------------------------------------------------- evolution


@dataclass
class CoupledRun(Run):
    """A Vlasov-Poisson run with coefficient snapshots."""

    coefficients: list = field(default_factory=list)
    letters: tuple = ()


def _needs_phi_t(letters):
    return any(z.kind is Kind.SPACE_TIME_SCALING for z in letters)


def coefficient_substep(values, grid, dt, grad_mid, sources_mid, mu, force=True):
    """Advance one coefficient array through half-stream, source, kick, half-stream."""
    c = free_stream(values, grid, 0.5 * dt, fill="edge")
    c = c + dt * _spatial_to_phase(sources_mid, grid.dim)
    if force:
        c = kick(c, grid, grad_mid, dt, mu, fill="edge")
    return free_stream(c, grid, 0.5 * dt, fill="edge")


def coupled_step(state: VPState, coeffs: CoefficientSet, dt: float, t_new: float | None = None,
                 check: bool = True):
    """One Strang step of f and every coefficient in ``coeffs``.

    ``t_new`` overrides the new time stamp (to avoid drift from repeated sums).
    """
    g = state.grid
    method = state.phi.method
    f = free_stream(state.f.values, g, 0.5 * dt)
    tmid = state.time + 0.5 * dt
    grad, srcs = None, {}
    if state.force:
        mid = solve(SpatialField(g.spatial, tmid, velocity_average_array(f, g)), method)
        names = coeffs.names()
        letters = [z for z in modified_letters(g.dim, restricted=False)
                   if any(coefficient_name(z, k) in names for k in range(1, g.dim + 1))]
        phi_t = potential_time_derivative(f, g, tmid, method) if _needs_phi_t(letters) else None
        srcs = coefficient_sources(mid.phi.values, g, tmid, letters, state.mu, phi_t)
        grad = mid.grad_phi.components
        f = kick(f, g, grad, dt, state.mu)
    f = free_stream(f, g, 0.5 * dt)
    tk = state.time + dt if t_new is None else float(t_new)
    if check:
        _check_health(f, tk)
    new_vals = {
        name: coefficient_substep(v, g, dt, grad, srcs.get(name, 0.0), state.mu, state.force)
        for name, v in coeffs.values.items()
    }
    fnew = DistributionField(g, tk, f)
    return (
        VPState(fnew, solve_density(fnew, method), tk, state.mu, state.force),
        CoefficientSet(g, tk, new_vals),
    )


def evolve_coefficients(state: VPState, t_end: float, dt: float, letters=None, every: int = 1,
                        monitors=None, check: bool = True) -> CoupledRun:
    """Evolve f and the coefficients of ``letters`` together from zero data.

    Sources are evaluated from the midpoint potential of each step.
    ``monitors`` maps names to callables of (state, coefficients).
    """
    dt = check_positive(dt, "dt")
    every = check_int(every, "every", 1)
    g = state.grid
    letters = tuple(modified_letters(g.dim) if letters is None else letters)
    nsteps = int(round((t_end - state.time) / dt))
    if nsteps < 0 or not np.isclose(state.time + nsteps * dt, t_end, atol=1e-9 * max(1.0, abs(t_end))):
        raise ValueError("t_end - t0 must be a non-negative multiple of dt")
    coeffs = CoefficientSet.zeros(g, letters, state.time)
    monitors = dict(monitors or {})
    run = CoupledRun(letters=letters)

    def sample(s, c):
        run.states.append(s)
        run.coefficients.append(c)
        rec = {"t": s.time}
        rec.update({k: float(m(s, c)) for k, m in monitors.items()})
        run.records.append(rec)

    t0 = state.time
    sample(state, coeffs)
    for step_no in range(1, nsteps + 1):
        state, coeffs = coupled_step(state, coeffs, dt, t0 + step_no * dt, check)
        if step_no % every == 0 or step_no == nsteps:
            sample(state, coeffs)
    return run


def evolve_prescribed(grid: PhaseGrid, t_end: float, dt: float, grad_phi, source, mu: int = 1) -> np.ndarray:
    """Solve T_phi c = S(t, x) from c = 0 with a prescribed field.

    ``grad_phi(t)`` returns the n spatial gradient components and ``source(t)``
    the spatial source array; both are sampled at step midpoints.
    """
    dt = check_positive(dt, "dt")
    mu = check_mu(mu)
    nsteps = int(round(t_end / dt))
    c = np.zeros(grid.shape)
    for k in range(nsteps):
        tmid = (k + 0.5) * dt
        c = coefficient_substep(c, grid, dt, grad_phi(tmid), source(tmid), mu)
    return c


def characteristic_integral(point, t_end: float, grad_phi_at, source_at, mu: int = 1, rtol=1e-11) -> float:
    """Exact c(t_end, x, v) for T_phi c = S, c(0) = 0, by integrating backwards.

    ``grad_phi_at(t, x)`` and ``source_at(t, x)`` take a time and an n-vector.
    """
    point = np.asarray(point, dtype=float)
    n = point.size // 2

    def rhs(s, y):
        x, v = y[:n], y[n : 2 * n]
        return np.concatenate([v, mu * np.asarray(grad_phi_at(s, x), dtype=float), [source_at(s, x)]])

    y0 = np.concatenate([point, [0.0]])
    sol = solve_ivp(rhs, (t_end, 0.0), y0, rtol=rtol, atol=1e-13, method="DOP853")
    return float(-sol.y[-1, -1])


# ----------------------------------------------------------- application


@dataclass(frozen=True)
class ModifiedWord:
    """A word of modified fields bound to a coefficient set."""

    word: OperatorWord
    coefficients: CoefficientSet

    def __post_init__(self):
        for z in self.word:
            if z.flavor is not Flavor.MICRO:
                raise ValueError("modified words are built from microscopic fields")
            if z.has_time_derivative:
                raise ValueError("modified words exclude d/dt and the space-time scaling")
            if z.dim != self.coefficients.grid.dim:
                raise ValueError("word and coefficient dimensions differ")


def apply_modified_letter(z: FieldId, values: np.ndarray, coeffs: CoefficientSet) -> np.ndarray:
    """Y g = Z g - sum_k c^k_Z d_{x^k} g at the coefficient time."""
    g = coeffs.grid
    out = apply_field_jet(z, [values], g, coeffs.time)[0]
    if z.kind in MODIFIED_KINDS:
        for k, a in enumerate(g.x_axes, start=1):
            out = out - coeffs.get(z, k) * diff4(values, a.h, k - 1)
    return out


def apply_modified(word: ModifiedWord, f: DistributionField) -> DistributionField:
    """Y^a f (rightmost letter first)."""
    c = word.coefficients
    if f.grid != c.grid:
        raise ValueError("distribution and coefficient grids differ")
    if not np.isclose(f.time, c.time, atol=1e-9):
        raise ValueError(f"coefficients are at t={c.time}, data at t={f.time}")
    vals = f.values
    for z in reversed(word.word.letters):
        vals = apply_modified_letter(z, vals, c)
    return f.with_values(vals)


# -------------------------------------------------- improved commutation


@dataclass(frozen=True)
class CommutationResidual:
    """L^1 norms of the improved-commutation check at one time."""

    time: float
    residual: float
    rhs: float
    unmodified_residual: float
    bad_term: float
    bad_term_mismatch: float


def improved_commutation_residual(state: VPState, coeffs: CoefficientSet, i: int) -> CommutationResidual:
    """Compare [T_phi, Y_i] f with the closed form

        -mu sum_j d_j(Z_i phi) Z_j f + mu sum_j Phi^j_i d_j(grad phi) . grad_v f.

    Time derivatives come from the equations: f_t = -v.grad_x f - mu grad phi . grad_v f
    and Phi_t = S - v.grad_x Phi - mu grad phi . grad_v Phi.  The check is
    repeated with Phi = 0 to expose the term mu sum_j d_j(Z_i phi) t d_j f
    that the correction removes.
    """
    g = state.grid
    n = g.dim
    t = state.time
    mu = state.mu
    if not 1 <= i <= n:
        raise ValueError(f"direction i must lie in 1..{n}")
    f = state.f.values
    phi = state.phi.phi.values
    sg = g.spatial
    grad_x = [diff4(phi, sg.axes[k].h, k) for k in range(n)]
    grads = [_spatial_to_phase(c, n) for c in grad_x]
    zi = FieldId(Kind.UNIFORM_MOTION, Flavor.MICRO, n, i)
    hx = [a.h for a in g.x_axes]
    hv = [a.h for a in g.v_axes]
    _, vs = g.coordinates()

    def dx(a, k):
        return diff4(a, hx[k], k)

    def dv(a, k):
        return diff4(a, hv[k], n + k)

    def time_derivative(a, src=0.0):
        out = -sum(vs[k] * dx(a, k) for k in range(n))
        out = out - mu * sum(grads[k] * dv(a, k) for k in range(n))
        return out + src

    f_t = time_derivative(f)
    phis = [coeffs.get(zi, k + 1) for k in range(n)]
    srcs = coefficient_sources(phi, g, t, (zi,), mu)
    phis_t = [time_derivative(phis[k], _spatial_to_phase(srcs[coefficient_name(zi, k + 1)], n)) for k in range(n)]

    def lhs(with_phi):
        z_jet = apply_field_jet(zi, [f, f_t, np.zeros_like(f)], g, t)
        y0, y1 = z_jet[0], z_jet[1]
        if with_phi:
            for k in range(n):
                y0 = y0 - phis[k] * dx(f, k)
                y1 = y1 - phis_t[k] * dx(f, k) - phis[k] * dx(f_t, k)
        t_y = transport_jet([y0, y1], g, t, [phi], mu)[0]
        tf = transport_jet([f, f_t], g, t, [phi], mu)[0]
        y_tf = apply_field_jet(zi, [tf], g, t)[0]
        if with_phi:
            y_tf = y_tf - sum(phis[k] * dx(tf, k) for k in range(n))
        return t_y - y_tf

    zphi = apply_field_jet(zi.macro, [phi], sg, t)[0]
    rhs = 0.0
    bad = 0.0
    for j in range(n):
        dzphi = _spatial_to_phase(diff4(zphi, sg.axes[j].h, j), n)
        zj = FieldId(Kind.UNIFORM_MOTION, Flavor.MICRO, n, j + 1)
        rhs = rhs - mu * dzphi * apply_field_jet(zj, [f], g, t)[0]
        bad = bad + mu * dzphi * t * dx(f, j)
    rhs0 = rhs
    for j in range(n):
        hess = [_spatial_to_phase(diff4(grad_x[k], sg.axes[j].h, j), n) for k in range(n)]
        rhs = rhs + mu * phis[j] * sum(hess[k] * dv(f, k) for k in range(n))

    def l1(a):
        return integrate_xv(np.abs(a), g)

    r = lhs(True) - rhs
    r0 = lhs(False) - rhs0
    bad_l1 = l1(bad)
    mismatch = l1(r0 - bad) / bad_l1 if bad_l1 > 0 else 0.0
    return CommutationResidual(t, l1(r), l1(rhs), l1(r0), bad_l1, mismatch)


# ----------------------------------------------------- decay diagnostics


def modified_ks_series(run: CoupledRun, word: OperatorWord, normalise: bool = True) -> np.ndarray:
    """Rows (t, sup_x (1+t+|x|)^n rho(|Y^a f|)(t, x) [/ sum_{|b|<=|a|} ||Y^b f||_L1])."""
    rows = []
    for s, c in zip(run.states, run.coefficients):
        g = s.grid
        n = g.dim
        ya = apply_modified(ModifiedWord(word, c), s.f).values
        rho = velocity_average_array(np.abs(ya), g)
        r = np.sqrt(sum(x * x for x in g.spatial.coordinates()))
        val = float(np.max((1.0 + s.time + r) ** n * rho))
        if normalise:
            letters = tuple(
                z for z in catalogue(n, Flavor.MICRO, restricted=True)
                if z.kind is Kind.SPACE_TRANSLATION or z in run.letters
            )
            total = 0.0
            frontier = [s.f.values]
            for _ in range(len(word) + 1):
                nxt = []
                for v in frontier:
                    total += integrate_xv(np.abs(v), g)
                    if _ < len(word):
                        nxt.extend(apply_modified_letter(z, v, c) for z in letters)
                frontier = nxt
            val = val / total if total > 0 else 0.0
        rows.append([s.time, val])
    return np.array(rows).reshape(-1, 2)


def coefficient_growth(run: CoupledRun, name: str, derivative: int | None = None) -> np.ndarray:
    """Rows (t, sup |c|) or (t, sup |d_{x^k} c|) for a named coefficient."""
    rows = []
    for c in run.coefficients:
        v = c.values[name]
        if derivative is not None:
            v = diff4(v, c.grid.x_axes[derivative - 1].h, derivative - 1)
        rows.append([c.time, float(np.max(np.abs(v)))])
    return np.array(rows).reshape(-1, 2)


# -------------------------------------- free-transport probe in three dimensions


def gaussian_potential_hessian(points: np.ndarray, mass: float, sigma: float) -> np.ndarray:
    """Hessian of phi for Delta phi = m (2 pi s^2)^(-3/2) exp(-|x|^2 / (2 s^2)) in R^3.

    Returns an (M, 3, 3) array; phi(r) = m erf(r / (s sqrt 2)) / (4 pi r).
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(x, axis=1)
    a = 1.0 / (sigma * np.sqrt(2.0))
    rs = np.where(r > 1e-8 * sigma, r, 1.0)
    e = erf(a * rs)
    g = 2.0 * a / np.sqrt(np.pi) * np.exp(-(a * rs) ** 2)
    c = mass / (4.0 * np.pi)
    d1 = c * (g / rs - e / rs**2)  # phi'(r)
    d2 = c * (-2.0 * a * a * rs * g / rs - 2.0 * g / rs**2 + 2.0 * e / rs**3)  # phi''(r)
    small = r <= 1e-8 * sigma
    centre = -c * 4.0 * a**3 / (3.0 * np.sqrt(np.pi))  # phi''(0) in every direction
    u = x / rs[:, None]
    hess = d2[:, None, None] * u[:, :, None] * u[:, None, :] + (d1 / rs)[:, None, None] * (
        np.eye(3)[None] - u[:, :, None] * u[:, None, :]
    )
    hess[small] = centre * np.eye(3)
    return hess


def free_uniform_motion_coefficient(t_values, points, mass, sigma_of_t, i=1, k=1, mu=1, nodes=400):
    """Phi^k_i(t, x, v) along free characteristics for a Gaussian density in R^3.

    Integrates mu s^2 d_k d_i phi(s, x - (t - s) v) over s in [0, t] with
    Gauss-Legendre nodes; ``sigma_of_t`` gives the density's standard deviation.
    Returns an array of shape (len(t_values), M).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    out = []
    for t in np.atleast_1d(t_values):
        s = 0.5 * t * (xg + 1.0)
        w = 0.5 * t * wg
        acc = np.zeros(pts.shape[0])
        for sk, wk in zip(s, w):
            pos = pts[:, :3] - (t - sk) * pts[:, 3:]
            h = gaussian_potential_hessian(pos, mass, sigma_of_t(sk))
            acc += wk * mu * sk * sk * h[:, k - 1, i - 1]
        out.append(acc)
    return np.array(out)


def sample_spatial(values: np.ndarray, grid, points) -> np.ndarray:
    """Cubic interpolation of a spatial array (0 outside the box)."""
    return interpolate_spatial(values, grid, points)
