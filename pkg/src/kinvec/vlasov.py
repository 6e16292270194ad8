"""Semi-Lagrangian Vlasov-Poisson solver and conservation monitors.

One step of size dt is a Strang splitting

    x-shift (dt/2)  ->  Poisson solve  ->  v-kick (dt)  ->  x-shift (dt/2)

where each sub-step is an exact shift along one axis evaluated with cubic
Lagrange interpolation.  The free streaming shifts f(x, v) -> f(x - v tau, v)
and the kick shifts f(x, v) -> f(x, v - mu grad phi tau).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    Flavor,
    OperatorWord,
    apply_field_jet,
    apply_word_jet,
    catalogue,
    evaluate_terms,
    expand_T_phi_commutator,
)
from .grid import (
    DistributionField,
    SpatialField,
    diff4,
    integrate_xv,
    lp_norm_xv,
    velocity_average_array,
    velocity_weight,
)
from .poisson import PoissonResult, solve
from .validation import check_delta, check_int, check_mu, check_positive

NEGATIVITY_TOL = 1e-8
BOUNDARY_TOL = 1e-8
ROUNDOFF = 1e-12


class SolverAbort(RuntimeError):
    """The run left the regime in which the discretisation is trusted."""


# ------------------------------------------------------------------ shifting


def _lagrange_weights(theta):
    return (
        -theta * (theta - 1.0) * (theta - 2.0) / 6.0,
        (theta + 1.0) * (theta - 1.0) * (theta - 2.0) / 2.0,
        -(theta + 1.0) * theta * (theta - 2.0) / 2.0,
        (theta + 1.0) * theta * (theta - 1.0) / 6.0,
    )


def shift_axis(values: np.ndarray, axis: int, h: float, displacement, fill: str = "zero") -> np.ndarray:
    """Return g with g(z) = values(z - displacement) along ``axis``.

    ``displacement`` is broadcastable against ``values`` and constant along
    ``axis``.  Off-grid samples use 0 (``fill="zero"``) or the nearest edge
    value (``fill="edge"``).
    """
    if fill not in ("zero", "edge"):
        raise ValueError("fill must be 'zero' or 'edge'")
    values = np.asarray(values, dtype=float)
    disp = np.asarray(displacement, dtype=float)
    if disp.ndim and disp.shape[axis % values.ndim] != 1:
        raise ValueError("displacement must be constant along the shifted axis")
    u = disp / h
    m = np.floor(u)
    theta = 1.0 - (u - m)
    m = m.astype(np.int64)
    npts = values.shape[axis]
    pad = int(np.max(np.abs(m))) + 3 if m.size else 3
    padded = np.pad(values, [(pad, pad) if k == axis % values.ndim else (0, 0) for k in range(values.ndim)],
                    mode="constant" if fill == "zero" else "edge")
    ax = axis % values.ndim
    if np.broadcast_shapes(values.shape, m.shape) != values.shape:
        raise ValueError("displacement does not broadcast against the values")
    weights = _lagrange_weights(theta)
    shifts = np.unique(m)
    if shifts.size <= 8:
        # few distinct integer offsets: combine contiguous slices
        out = np.zeros(values.shape)
        for mv in shifts:
            acc = 0.0
            for k, w in zip(range(-1, 3), weights):
                start = pad - int(mv) - 1 + k
                sl = [slice(None)] * values.ndim
                sl[ax] = slice(start, start + npts)
                acc = acc + w * padded[tuple(sl)]
            out = np.where(m == mv, acc, out) if shifts.size > 1 else acc * np.ones(values.shape)
        return out
    jshape = [1] * values.ndim
    jshape[ax] = npts
    base = np.arange(npts).reshape(jshape) - m - 1 + pad
    out = np.zeros(values.shape)
    for k, w in zip(range(-1, 3), weights):
        out += w * np.take_along_axis(padded, np.broadcast_to(base + k, values.shape), axis=ax)
    return out


def _spatial_to_phase(arr, dim):
    return np.reshape(arr, np.shape(arr) + (1,) * dim)


def free_stream(values: np.ndarray, grid, tau: float, fill="zero") -> np.ndarray:
    """f(x, v) -> f(x - v tau, v), one x-axis at a time."""
    _, vs = grid.coordinates()
    out = values
    for i, a in enumerate(grid.x_axes):
        out = shift_axis(out, i, a.h, vs[i] * tau, fill)
    return out


def kick(values: np.ndarray, grid, grad_components, tau: float, mu: int, fill="zero") -> np.ndarray:
    """f(x, v) -> f(x, v - mu grad phi tau), one v-axis at a time."""
    n = grid.dim
    out = values
    for i, a in enumerate(grid.v_axes):
        disp = mu * tau * _spatial_to_phase(grad_components[i], n)
        out = shift_axis(out, n + i, a.h, disp, fill)
    return out


# --------------------------------------------------------------------- state


@dataclass(frozen=True)
class VPState:
    """Distribution, potential solved from its density, time and force sign."""

    f: DistributionField
    phi: PoissonResult
    time: float
    mu: int = 1
    force: bool = True

    @classmethod
    def initial(cls, f: DistributionField, mu: int = 1, force: bool = True, method: str = "spectral"):
        mu = check_mu(mu)
        return cls(f, solve_density(f, method), f.time, mu, force)

    @property
    def grid(self):
        return self.f.grid

    @property
    def mass(self) -> float:
        return integrate_xv(self.f.values, self.grid)


def solve_density(f: DistributionField, method: str = "spectral") -> PoissonResult:
    rho = SpatialField(f.grid.spatial, f.time, velocity_average_array(f.values, f.grid))
    return solve(rho, method)


def _check_health(values, time, boundary_tol=BOUNDARY_TOL, negativity_tol=NEGATIVITY_TOL):
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return
    edge = 0.0
    for ax in range(values.ndim):
        for k in (0, -1):
            edge = max(edge, float(np.max(np.abs(np.take(values, k, axis=ax)))))
    if edge > boundary_tol * peak:
        raise SolverAbort(f"t={time:.4g}: support reached the grid boundary ({edge / peak:.2e} of peak)")
    low = float(np.min(values))
    if low < -negativity_tol * peak:
        raise SolverAbort(f"t={time:.4g}: negativity {low / peak:.2e} of peak exceeds tolerance")


def step(state: VPState, dt: float, check: bool = True) -> VPState:
    """Advance one Strang step; ``dt = 0`` returns the state unchanged."""
    dt = check_positive(dt, "dt", strict=False)
    if dt == 0.0:
        return state
    g = state.grid
    f = free_stream(state.f.values, g, 0.5 * dt)
    tmid = state.time + 0.5 * dt
    if state.force:
        mid = solve(SpatialField(g.spatial, tmid, velocity_average_array(f, g)), state.phi.method)
        f = kick(f, g, mid.grad_phi.components, dt, state.mu)
    f = free_stream(f, g, 0.5 * dt)
    t1 = state.time + dt
    if check:
        _check_health(f, t1)
    fnew = DistributionField(g, t1, f)
    return VPState(fnew, solve_density(fnew, state.phi.method), t1, state.mu, state.force)


@dataclass
class Run:
    """Sampled states and monitor records of an evolution."""

    states: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @property
    def final(self) -> VPState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])


def evolve(state: VPState, t_end: float, dt: float, monitors=None, every: int = 1, on_step=None) -> Run:
    """Step until ``t_end``; sample states and monitors every ``every`` steps.

    ``monitors`` maps names to callables of a state.  The initial and final
    states are always sampled.  ``on_step(old, new, dt)`` runs after each step.
    """
    dt = check_positive(dt, "dt")
    every = check_int(every, "every", 1)
    nsteps = int(round((t_end - state.time) / dt))
    if nsteps < 0 or not np.isclose(state.time + nsteps * dt, t_end, rtol=0, atol=1e-9 * max(1.0, abs(t_end))):
        raise ValueError("t_end - t0 must be a non-negative multiple of dt")
    monitors = dict(monitors or {})
    run = Run()

    def sample(s):
        run.states.append(s)
        rec = {"t": s.time}
        rec.update({k: float(m(s)) for k, m in monitors.items()})
        run.records.append(rec)

    t0 = state.time
    sample(state)
    for k in range(1, nsteps + 1):
        new = step(state, dt)
        tk = t0 + k * dt
        new = VPState(new.f.with_values(new.f.values, tk), new.phi, tk, new.mu, new.force)
        if on_step is not None:
            on_step(state, new, dt)
        state = new
        if k % every == 0 or k == nsteps:
            sample(state)
    return run


# ------------------------------------------------------------------- norms


@dataclass(frozen=True)
class NormReport:
    """The two parts of E_{N,delta} and their sum."""

    N: int
    delta: float
    l1_part: float
    weighted_lp_part: float
    within_hypothesis: bool

    @property
    def total(self) -> float:
        return self.l1_part + self.weighted_lp_part


def norm_weight_exponent(dim: int, delta: float) -> float:
    """q with (1+|v|^2)^(q/2) the weight of the L^(1+delta) part."""
    return delta * (delta + dim) / (1.0 + delta)


def norm_E(f: DistributionField, N: int, delta: float, letters=None, apply=None) -> NormReport:
    """E_{N,delta}[f]: L^1 and weighted L^(1+delta) norms of all words |a| <= N.

    By default the words run over the restricted microscopic fields.  A
    modified family is passed as ``letters`` with ``apply(letter, values)``.
    """
    N = check_int(N, "N", 0, 4)
    delta = check_delta(delta)
    n = f.grid.dim
    g = f.grid
    if letters is None:
        letters = catalogue(n, Flavor.MICRO, restricted=True)
    if apply is None:

        def apply(z, values):
            return apply_field_jet(z, [values], g, f.time)[0]

    p = 1.0 + delta
    q = norm_weight_exponent(n, delta)
    l1 = 0.0
    lp = 0.0
    stack = [(f.values, 0)]
    while stack:
        vals, depth = stack.pop()
        l1 += integrate_xv(np.abs(vals), g)
        lp += lp_norm_xv(f.with_values(vals), p, q)
        if depth < N:
            stack.extend((apply(z, vals), depth + 1) for z in reversed(letters))
    return NormReport(N, delta, l1, lp, n >= 3 and delta < (n - 2) / (n + 2))


# ---------------------------------------------------------------- monitors


def _check_restricted(word, dim):
    for z in word:
        if z.flavor is not Flavor.MICRO or z.dim != dim:
            raise ValueError("expected a microscopic word of matching dimension")
        if not z.is_restricted:
            raise ValueError("monitors use words without d/dt components")
    if len(word) > 2:
        raise ValueError("monitors are limited to words of length <= 2")


def commutator_l1(state: VPState, word: OperatorWord, terms=None) -> float:
    """||[T_phi, Z^a] f||_L1 evaluated from the symbolic expansion."""
    if not state.force:
        return 0.0
    terms = expand_T_phi_commutator(word, state.mu) if terms is None else terms
    if not terms:
        return 0.0
    vals = evaluate_terms(terms, [state.f.values], [state.phi.phi.values], state.grid, state.time, state.mu)
    return integrate_xv(np.abs(vals), state.grid)


def _cumulative(times, rates):
    out = np.zeros(len(times))
    for k in range(1, len(times)):
        out[k] = out[k - 1] + 0.5 * (times[k] - times[k - 1]) * (rates[k] + rates[k - 1])
    return out


def word_values(state: VPState, word: OperatorWord) -> np.ndarray:
    return apply_word_jet(word, [state.f.values], state.grid, state.time)[0]


def conservation_monitor(states, word: OperatorWord = OperatorWord()) -> np.ndarray:
    """Rows (t, ||Z^a f(t)||_L1, ||Z^a f(0)||_L1 + int_0^t ||[T_phi, Z^a] f||_L1 ds)."""
    states = list(states)
    if not states:
        return np.zeros((0, 3))
    _check_restricted(word, states[0].grid.dim)
    terms = expand_T_phi_commutator(word, states[0].mu) if len(word) else ()
    times = np.array([s.time for s in states])
    lhs = np.array([integrate_xv(np.abs(word_values(s, word)), s.grid) for s in states])
    rates = np.array([commutator_l1(s, word, terms) if terms else 0.0 for s in states])
    return np.column_stack([times, lhs, lhs[0] + _cumulative(times, rates)])


@dataclass(frozen=True)
class WeightedConservation:
    """Columns of the weighted L^1 inequality and its empirical constant."""

    rows: np.ndarray  # t, lhs, initial, transport integral, force integral
    constant: float

    def holds(self, slack: float = 1e-3) -> bool:
        lhs, init, a, b = self.rows[:, 1], self.rows[:, 2], self.rows[:, 3], self.rows[:, 4]
        return bool(np.all(lhs <= (init + a + b) * (1.0 + slack) + 1e-300))


def weighted_conservation_monitor(states, word: OperatorWord, p: float, q: float) -> WeightedConservation:
    """Weighted L^1 inequality for g = Z^a f:

    ||w |g|^p (t)|| <= ||w |g|^p (0)|| + p int ||w |g|^(p-1) T_phi g|| + q int ||(1+v^2)^((q-1)/2) |grad phi| |g|^p||

    with w = (1+|v|^2)^(q/2).  ``constant`` is the smallest C for which the
    samples satisfy lhs - initial <= C (sum of integrals).
    """
    states = list(states)
    if p < 1 or q < 0:
        raise ValueError("need p >= 1 and q >= 0")
    if not states:
        return WeightedConservation(np.zeros((0, 5)), 0.0)
    g0 = states[0].grid
    n = g0.dim
    _check_restricted(word, n)
    terms = expand_T_phi_commutator(word, states[0].mu) if len(word) else ()
    w = velocity_weight(g0, 0.5 * q)
    wf = velocity_weight(g0, 0.5 * (q - 1.0))
    times, lhs, rt, rf = [], [], [], []
    for s in states:
        gv = word_values(s, word)
        ag = np.abs(gv)
        times.append(s.time)
        lhs.append(integrate_xv(w * ag**p, s.grid))
        tg = 0.0
        if terms and s.force:
            tg = np.abs(evaluate_terms(terms, [s.f.values], [s.phi.phi.values], s.grid, s.time, s.mu))
        rt.append(p * integrate_xv(w * ag ** (p - 1.0) * tg, s.grid) if terms else 0.0)
        if s.force:
            gphi = np.sqrt(sum(c * c for c in s.phi.grad_phi.components))
            rf.append(q * integrate_xv(wf * _spatial_to_phase(gphi, n) * ag**p, s.grid))
        else:
            rf.append(0.0)
    times = np.array(times)
    lhs = np.array(lhs)
    a = _cumulative(times, np.array(rt))
    b = _cumulative(times, np.array(rf))
    init = np.full_like(lhs, lhs[0])
    excess = lhs - init
    excess[np.abs(excess) <= ROUNDOFF * np.abs(init)] = 0.0
    denom = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, excess / denom, np.where(excess > 0, np.inf, 0.0))
    return WeightedConservation(np.column_stack([times, lhs, init, a, b]), float(np.max(ratio[1:], initial=0.0)))


@dataclass(frozen=True)
class BootstrapReport:
    """max_t E(t)/E(0) and whether the factor-two bound held."""

    ratio: float
    held: bool
    note: str


def bootstrap_monitor(norm_series, factor: float = 2.0, note: str = "") -> BootstrapReport:
    """Summarise a series of E_{N,delta} values (first entry is t = 0)."""
    vals = np.asarray([r.total if isinstance(r, NormReport) else r for r in norm_series], dtype=float)
    if vals.size == 0 or vals[0] == 0.0:
        return BootstrapReport(1.0, True, note)
    ratio = float(np.max(vals / vals[0]))
    return BootstrapReport(ratio, ratio < factor, note)


def mass_drift(run: Run) -> float:
    """max_t |M(t) - M(0)| / M(0) over the sampled states."""
    m = np.array([s.mass for s in run.states])
    return 0.0 if m[0] == 0 else float(np.max(np.abs(m - m[0])) / abs(m[0]))


def total_energy(state: VPState) -> float:
    """Kinetic energy minus mu times the field energy (box quadrature).

    With dv/dt = mu grad phi and -Delta phi = rho this is the conserved
    combination; mu = 1 pulls mass together.
    """
    g = state.grid
    _, vs = g.coordinates()
    kin = 0.5 * integrate_xv(sum(v * v for v in vs) * state.f.values, g)
    grad2 = sum(c * c for c in state.phi.grad_phi.components)
    fld = 0.5 * float(np.sum(grad2 * g.spatial.weights()))
    return kin - state.mu * fld


def all_words(dim: int, N: int) -> list:
    letters = catalogue(dim, Flavor.MICRO, restricted=True)
    return [OperatorWord(w) for m in range(N + 1) for w in itertools.product(letters, repeat=m)]


def spatial_gradient(values: np.ndarray, grid) -> list:
    return [diff4(values, a.h, i) for i, a in enumerate(grid.axes)]
