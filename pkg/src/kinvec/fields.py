"""Commuting vector fields of the free transport operator.

Every catalogue field is a first-order operator whose coefficients are affine
in (t, x, v).  A field is stored as a ``(D, 1 + D)`` integer matrix with
``D = 1 + 2n``: row ``m`` holds the affine coefficient of ``d/dz_m`` for the
coordinates ``z = (t, x_1..x_n, v_1..v_n)``, written on the basis
``(1, t, x_1.., v_1..)``.  Brackets, numeric application and the symbolic
commutator expansion are all driven by these matrices.

Words are written in operator order: ``OperatorWord((A, B))`` is ``A B``, so
``B`` acts first.
"""

from __future__ import annotations

import enum
import functools
import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .grid import (
    DistributionField,
    PhaseGrid,
    SpatialField,
    SpatialGrid,
    diff4,
    velocity_average,
    velocity_weight,
)
from .validation import check_dimension, check_mu


class Kind(enum.Enum):
    TIME_TRANSLATION = "dt"
    SPACE_TRANSLATION = "dx"
    UNIFORM_MOTION = "u"
    ROTATION = "r"
    SPATIAL_SCALING = "s"
    SPACE_TIME_SCALING = "st"


class Flavor(enum.Enum):
    MACRO = "macro"
    MICRO = "micro"


class Commutation(enum.Enum):
    """Possible values of [T, Z] for the catalogue."""

    ZERO = "0"
    T = "T"


_KIND_RANK = {k: r for r, k in enumerate(Kind)}
_NEEDS_I = {Kind.SPACE_TRANSLATION, Kind.UNIFORM_MOTION, Kind.ROTATION}


@dataclass(frozen=True)
class FieldId:
    """One catalogue vector field in dimension ``dim``.

    Indices are 1-based; rotations require ``i < j``.
    """

    kind: Kind
    flavor: Flavor
    dim: int
    i: int | None = None
    j: int | None = None

    def __post_init__(self):
        check_dimension(self.dim)
        if self.kind in _NEEDS_I:
            if self.i is None or not 1 <= self.i <= self.dim:
                raise ValueError(f"{self.kind.name} needs 1 <= i <= {self.dim}")
        elif self.i is not None:
            raise ValueError(f"{self.kind.name} takes no index")
        if self.kind is Kind.ROTATION:
            if self.j is None or not self.i < self.j <= self.dim:
                raise ValueError("rotations need 1 <= i < j <= dim")
        elif self.j is not None:
            raise ValueError(f"{self.kind.name} takes a single index at most")

    # -- naming
    @property
    def token(self) -> str:
        """Short config token: dt, dx1, u1, r12, s, st."""
        idx = "" if self.i is None else str(self.i) + ("" if self.j is None else str(self.j))
        return self.kind.value + idx

    @property
    def label(self) -> str:
        """Human-readable operator name used by the pretty-printer."""
        i, j, micro = self.i, self.j, self.flavor is Flavor.MICRO
        k = self.kind
        if k is Kind.TIME_TRANSLATION:
            return "dt"
        if k is Kind.SPACE_TRANSLATION:
            return f"dx{i}"
        if k is Kind.UNIFORM_MOTION:
            return f"(t.dx{i}+dv{i})" if micro else f"t.dx{i}"
        if k is Kind.ROTATION:
            return f"(Om{i}{j}+Omv{i}{j})" if micro else f"Om{i}{j}"
        if k is Kind.SPATIAL_SCALING:
            return "(Sx+Sv)" if micro else "Sx"
        return "(t.dt+Sx)"

    def __str__(self):
        return self.label

    @property
    def sort_key(self) -> tuple:
        return (_KIND_RANK[self.kind], self.i or 0, self.j or 0)

    @property
    def has_time_derivative(self) -> bool:
        return self.kind in (Kind.TIME_TRANSLATION, Kind.SPACE_TIME_SCALING)

    @property
    def is_restricted(self) -> bool:
        """Member of the restricted sets (no d/dt component)."""
        return not self.has_time_derivative

    def as_flavor(self, flavor: Flavor) -> "FieldId":
        return FieldId(self.kind, flavor, self.dim, self.i, self.j)

    @property
    def macro(self) -> "FieldId":
        return self.as_flavor(Flavor.MACRO)

    @property
    def micro(self) -> "FieldId":
        return self.as_flavor(Flavor.MICRO)


def catalogue(dim: int, flavor: Flavor = Flavor.MICRO, restricted: bool = False) -> tuple:
    """All catalogue fields in normal order; ``restricted`` drops dt and t.dt+Sx."""
    check_dimension(dim)
    out = [FieldId(Kind.TIME_TRANSLATION, flavor, dim)]
    out += [FieldId(Kind.SPACE_TRANSLATION, flavor, dim, i) for i in range(1, dim + 1)]
    out += [FieldId(Kind.UNIFORM_MOTION, flavor, dim, i) for i in range(1, dim + 1)]
    out += [
        FieldId(Kind.ROTATION, flavor, dim, i, j)
        for i in range(1, dim + 1)
        for j in range(i + 1, dim + 1)
    ]
    out += [FieldId(Kind.SPATIAL_SCALING, flavor, dim), FieldId(Kind.SPACE_TIME_SCALING, flavor, dim)]
    if restricted:
        out = [z for z in out if z.is_restricted]
    return tuple(out)


def parse_field(token: str, dim: int, flavor: Flavor = Flavor.MICRO) -> FieldId:
    """Inverse of :attr:`FieldId.token`."""
    tok = token.strip().lower()
    for kind in sorted(Kind, key=lambda k: -len(k.value)):
        if tok.startswith(kind.value):
            rest = tok[len(kind.value) :]
            if kind in (Kind.TIME_TRANSLATION, Kind.SPATIAL_SCALING, Kind.SPACE_TIME_SCALING):
                if rest:
                    continue
                return FieldId(kind, flavor, dim)
            if not rest.isdigit():
                continue
            if kind is Kind.ROTATION:
                if len(rest) != 2:
                    raise ValueError(f"rotation token needs two digits: {token!r}")
                return FieldId(kind, flavor, dim, int(rest[0]), int(rest[1]))
            return FieldId(kind, flavor, dim, int(rest))
    raise ValueError(f"unknown vector field token {token!r}")


@dataclass(frozen=True)
class OperatorWord:
    """A composition ``letters[0] letters[1] ...`` of catalogue fields."""

    letters: tuple = ()

    def __post_init__(self):
        letters = tuple(self.letters)
        if letters:
            f0 = letters[0]
            for z in letters:
                if not isinstance(z, FieldId):
                    raise TypeError("word letters must be FieldId instances")
                if z.flavor is not f0.flavor or z.dim != f0.dim:
                    raise ValueError("all letters of a word must share flavor and dimension")
        object.__setattr__(self, "letters", letters)

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __str__(self):
        return " ".join(z.label for z in self.letters)

    @property
    def tokens(self) -> str:
        return " ".join(z.token for z in self.letters)

    def prefixed(self, z: FieldId) -> "OperatorWord":
        return OperatorWord((z,) + self.letters)

    @property
    def time_derivative_count(self) -> int:
        return sum(z.has_time_derivative for z in self.letters)

    @property
    def macro(self) -> "OperatorWord":
        return OperatorWord(tuple(z.macro for z in self.letters))

    @property
    def micro(self) -> "OperatorWord":
        return OperatorWord(tuple(z.micro for z in self.letters))


def parse_word(text: str, dim: int, flavor: Flavor = Flavor.MICRO) -> OperatorWord:
    """Parse ``"u1 dx1"`` (space or comma separated tokens) into a word."""
    toks = [t for t in text.replace(",", " ").split() if t]
    return OperatorWord(tuple(parse_field(t, dim, flavor) for t in toks))


def all_words(letters: Sequence[FieldId], max_length: int) -> list:
    """Every word of length <= max_length over ``letters`` (shortest first)."""
    out = [OperatorWord()]
    for k in range(1, max_length + 1):
        out += [OperatorWord(w) for w in itertools.product(letters, repeat=k)]
    return out


# ------------------------------------------------------------------ matrices


@functools.lru_cache(maxsize=None)
def field_matrix(z: FieldId) -> np.ndarray:
    """Affine coefficient matrix of ``z`` (see module docstring)."""
    n = z.dim
    d = 1 + 2 * n
    m = np.zeros((d, 1 + d), dtype=np.int64)
    T, X, V = 1, lambda i: 1 + i, lambda i: 1 + n + i  # noqa: E731  basis columns
    micro = z.flavor is Flavor.MICRO
    k = z.kind
    if k is Kind.TIME_TRANSLATION:
        m[0, 0] = 1
    elif k is Kind.SPACE_TRANSLATION:
        m[z.i, 0] = 1
    elif k is Kind.UNIFORM_MOTION:
        m[z.i, T] = 1
        if micro:
            m[n + z.i, 0] = 1
    elif k is Kind.ROTATION:
        i, j = z.i, z.j
        m[j, X(i)] += 1
        m[i, X(j)] -= 1
        if micro:
            m[n + j, V(i)] += 1
            m[n + i, V(j)] -= 1
    elif k is Kind.SPATIAL_SCALING:
        for i in range(1, n + 1):
            m[i, X(i)] = 1
            if micro:
                m[n + i, V(i)] = 1
    else:
        m[0, T] = 1
        for i in range(1, n + 1):
            m[i, X(i)] = 1
    m.setflags(write=False)
    return m


def transport_matrix(dim: int) -> np.ndarray:
    """Matrix of the free transport operator T = dt + v.grad_x."""
    d = 1 + 2 * dim
    m = np.zeros((d, 1 + d), dtype=np.int64)
    m[0, 0] = 1
    for i in range(1, dim + 1):
        m[i, 1 + dim + i] = 1
    return m


def bracket_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of [A, B] = AB - BA for affine vector fields."""
    return b[:, 1:] @ a - a[:, 1:] @ b


@functools.lru_cache(maxsize=None)
def _basis(dim: int, flavor: Flavor):
    cat = catalogue(dim, flavor)
    mat = np.stack([field_matrix(z).ravel() for z in cat], axis=1).astype(float)
    return cat, mat


def decompose(matrix: np.ndarray, dim: int, flavor: Flavor) -> dict:
    """Express an affine field as an integer combination of catalogue fields.

    Raises ``ValueError`` when the field is outside the span.
    """
    cat, basis = _basis(dim, flavor)
    target = np.asarray(matrix, dtype=float).ravel()
    if not np.any(target):
        return {}
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    rounded = np.round(coef)
    if not np.allclose(basis @ rounded, target, atol=1e-12):
        raise ValueError("vector field is not in the span of the catalogue")
    return {z: Fraction(int(c)) for z, c in zip(cat, rounded) if c != 0}


@functools.lru_cache(maxsize=None)
def lie_bracket(a: FieldId, b: FieldId) -> tuple:
    """[a, b] as a tuple of ``(FieldId, Fraction)`` pairs in normal order."""
    if a.flavor is not b.flavor or a.dim != b.dim:
        raise ValueError("bracket needs fields of equal flavor and dimension")
    dec = decompose(bracket_matrix(field_matrix(a), field_matrix(b)), a.dim, a.flavor)
    return tuple(sorted(dec.items(), key=lambda kv: kv[0].sort_key))


def commute_with_T(z: FieldId) -> Commutation:
    """[T, Z] for a transport-commuting field: T for the space-time scaling, else 0."""
    if z.flavor is Flavor.MACRO and z.kind not in (
        Kind.TIME_TRANSLATION,
        Kind.SPACE_TRANSLATION,
        Kind.SPACE_TIME_SCALING,
    ):
        raise ValueError(f"macroscopic {z.kind.name} does not commute with T; use the micro form")
    return Commutation.T if z.kind is Kind.SPACE_TIME_SCALING else Commutation.ZERO


def pushdown_constant(z: FieldId) -> int:
    """c_Z in Z rho(f) = rho(Z_micro f) + c_Z rho(f): n for the spatial scaling, else 0."""
    if z.flavor is not Flavor.MACRO:
        raise ValueError("pushdown constants are defined for macroscopic fields")
    return z.dim if z.kind is Kind.SPATIAL_SCALING else 0


def laplacian_constant(z: FieldId) -> int:
    """d_Z in [Delta, Z] = d_Z Delta: 2 for both scalings, else 0."""
    return 2 if z.kind in (Kind.SPATIAL_SCALING, Kind.SPACE_TIME_SCALING) else 0


# ------------------------------------------------------------------ numerics
#
# A "jet" is a list [g, dg/dt, d2g/dt2, ...] of arrays sampled at one time.
# Applying a field with a d/dt component consumes one jet level.


class _Frame:
    """Coordinates and spacings of the array layout being differentiated."""

    def __init__(self, grid, time):
        self.time = float(time)
        if isinstance(grid, PhaseGrid):
            self.dim = grid.dim
            xs, vs = grid.coordinates()
            self.coords = xs + vs
            self.h = [a.h for a in grid.axes]
            self.phase = True
        elif isinstance(grid, SpatialGrid):
            self.dim = grid.dim
            self.coords = grid.coordinates()
            self.h = list(grid.spacing)
            self.phase = False
        else:
            raise TypeError(f"unsupported grid {type(grid).__name__}")

    def affine(self, row):
        """Evaluate an affine form (array of length 1 + D) at the nodes."""
        val = float(row[0]) + float(row[1]) * self.time
        out = val
        for m, c in enumerate(row[2:]):
            if c:
                if m >= len(self.coords):
                    raise ValueError("field has velocity coefficients but data is spatial")
                out = out + float(c) * self.coords[m]
        return out


def _apply_matrix_jet(mat, jet, frame, name="field"):
    """Apply an affine vector field (matrix form) to a jet."""
    has_dt = bool(np.any(mat[0]))
    depth = len(jet) - (1 if has_dt else 0)
    if depth < 1:
        raise ValueError(f"{name} contains d/dt: supply the time derivative of the data")
    rows = [m for m in range(1, mat.shape[0]) if np.any(mat[m])]
    if not frame.phase and any(m > frame.dim for m in rows):
        raise ValueError(f"{name} differentiates in v but the data is spatial")
    cache = {}

    def d(m, k):
        if (m, k) not in cache:
            cache[(m, k)] = diff4(jet[k], frame.h[m - 1], m - 1)
        return cache[(m, k)]

    out = []
    for k in range(depth):
        acc = 0.0
        for m in rows:
            acc = acc + frame.affine(mat[m]) * d(m, k)
            if k and mat[m, 1]:
                acc = acc + k * float(mat[m, 1]) * d(m, k - 1)
        if has_dt:
            acc = acc + frame.affine(mat[0]) * jet[k + 1]
            if k and mat[0, 1]:
                acc = acc + k * float(mat[0, 1]) * jet[k]
        out.append(np.broadcast_to(acc, np.shape(jet[0])) * 1.0)
    return out


def apply_field_jet(z: FieldId, jet: Sequence[np.ndarray], grid, time) -> list:
    """Apply ``z`` to a time jet sampled on ``grid`` (phase or spatial)."""
    frame = _Frame(grid, time)
    if frame.phase != (z.flavor is Flavor.MICRO):
        raise ValueError(
            "microscopic fields act on phase-space data, macroscopic fields on spatial data"
        )
    return _apply_matrix_jet(field_matrix(z), list(jet), frame, z.label)


def apply_word_jet(word: OperatorWord, jet: Sequence[np.ndarray], grid, time) -> list:
    """Apply a word (rightmost letter first) to a time jet."""
    out = list(jet)
    for z in reversed(word.letters):
        out = apply_field_jet(z, out, grid, time)
    return out


def _field_jet(f, time_derivatives):
    jet = [f.values if isinstance(f, DistributionField) else f.components[0]]
    for g in time_derivatives or ():
        jet.append(g.values if isinstance(g, DistributionField) else g.components[0])
    return jet


def apply_field(z: FieldId, f, dt_f=None):
    """Apply one catalogue field to a sampled field of matching flavor.

    Fields containing d/dt need ``dt_f``, the time derivative of ``f`` (e.g. from
    the transport equation); time derivatives are never taken by stencils.
    """
    return apply_word(OperatorWord((z,)), f, None if dt_f is None else [dt_f])


def apply_word(word: OperatorWord, f, time_derivatives=None):
    """Apply a word to ``f``; ``time_derivatives`` lists d^k f / dt^k, k >= 1."""
    _check_flavor(word, f)
    if isinstance(f, SpatialField) and len(f.components) != 1:
        raise ValueError("vector fields act on scalar spatial fields only")
    jet = _field_jet(f, time_derivatives)
    if word.time_derivative_count >= len(jet):
        raise ValueError("word contains d/dt: supply enough time derivatives of the data")
    out = apply_word_jet(word, jet, f.grid, f.time)[0]
    return f.with_values(out)


def _check_flavor(word, f):
    if isinstance(f, DistributionField):
        want = Flavor.MICRO
    elif isinstance(f, SpatialField):
        want = Flavor.MACRO
    else:
        raise TypeError(f"cannot apply vector fields to {type(f).__name__}")
    for z in word:
        if z.flavor is not want:
            raise ValueError(
                f"{z.flavor.value}scopic field {z.label} cannot act on {type(f).__name__}"
            )
        if z.dim != f.grid.dim:
            raise ValueError("field dimension does not match the data")


def _spatial_to_phase(arr, dim):
    return np.reshape(arr, np.shape(arr) + (1,) * dim)


def transport_jet(jet, grid: PhaseGrid, time, phi_jet=None, mu=1) -> list:
    """Jet of T_phi g = dg/dt + v.grad_x g + mu grad_x phi . grad_v g.

    ``phi_jet`` holds spatial arrays [phi, dphi/dt, ...]; omit it for free transport.
    """
    mu = check_mu(mu)
    n = grid.dim
    xs, vs = grid.coordinates()
    h = [a.h for a in grid.axes]
    depth = len(jet) - 1
    if depth < 1:
        raise ValueError("transport needs the time derivative of the data")
    out = []
    grads = {}
    for k in range(depth):
        acc = jet[k + 1].copy()
        for i in range(n):
            acc += vs[i] * diff4(jet[k], h[i], i)
        if phi_jet is not None:
            for r in range(k + 1):
                if r >= len(phi_jet):
                    raise ValueError("potential jet too short for this transport jet")
                for i in range(n):
                    key = (r, i)
                    if key not in grads:
                        grads[key] = _spatial_to_phase(diff4(phi_jet[r], h[i], i), n)
                    acc += mu * comb(k, r) * grads[key] * diff4(jet[k - r], h[n + i], n + i)
        out.append(acc)
    return out


def free_time_jet(f: DistributionField, depth: int) -> list:
    """[f, f_t, ...] for a solution of T f = 0, with f_t = -v.grad_x f."""
    n = f.grid.dim
    _, vs = f.grid.coordinates()
    jet = [f.values]
    for _ in range(depth - 1):
        g = jet[-1]
        jet.append(-sum(vs[i] * diff4(g, f.grid.axes[i].h, i) for i in range(n)))
    return jet


def commutator_T_residual(z: FieldId, jet, grid: PhaseGrid, time) -> np.ndarray:
    """Pointwise [T, Z] f minus the tabulated value (0 or T f).

    ``jet`` must hold at least [f, f_t] (plus f_tt when Z contains d/dt).
    """
    Tz = transport_jet(apply_field_jet(z, jet, grid, time), grid, time)[0]
    zT = apply_field_jet(z, transport_jet(jet, grid, time), grid, time)[0]
    claim = 0.0
    if commute_with_T(z) is Commutation.T:
        claim = transport_jet(jet[:2], grid, time)[0]
    return Tz - zT - claim


# ------------------------------------------------------------- pushdown rules


def verify_pushdown(z: FieldId, f: DistributionField, dt_f: DistributionField | None = None) -> float:
    """max over interior x of |Z rho(f) - rho(Z_micro f) - c_Z rho(f)|.

    Macroscopic fields with a d/dt component need ``dt_f``; then d/dt rho(f) is
    formed as rho(dt_f).
    """
    if z.flavor is not Flavor.MACRO:
        raise ValueError("verify_pushdown expects a macroscopic field")
    if not np.any(f.values):
        return 0.0
    rho = velocity_average(f)
    rho_t = [velocity_average(dt_f)] if dt_f is not None else None
    lhs = apply_word(OperatorWord((z,)), rho, rho_t).values
    micro = apply_word(OperatorWord((z.micro,)), f, None if dt_f is None else [dt_f])
    rhs = velocity_average(micro).values + pushdown_constant(z) * rho.values
    inner = tuple(slice(2, -2) for _ in range(f.grid.dim))
    return float(np.max(np.abs(lhs - rhs)[inner]))


def verify_weight_commutation(word: OperatorWord, f: DistributionField, q: float) -> float:
    """sup |Z^a[(1+v^2)^(q/2) f]| / ((1+v^2)^(q/2) sum_{|b|<=|a|} |Z^b f|).

    The sum runs over restricted microscopic words of length <= |word|.  Nodes
    where the denominator is below 1e-10 of its maximum are skipped.
    """
    if len(word) > 2:
        raise ValueError("weight commutation is checked for words of length <= 2")
    if word.time_derivative_count:
        raise ValueError("weight commutation is checked on restricted words")
    if not np.any(f.values):
        return 0.0
    w = velocity_weight(f.grid, 0.5 * q)
    num = np.abs(apply_word(word, f.with_values(w * f.values)).values)
    letters = catalogue(f.grid.dim, Flavor.MICRO, restricted=True)
    den = np.zeros_like(num)
    for b in all_words(letters, len(word)):
        den += np.abs(apply_word(b, f).values)
    den = w * den
    mask = den > 1e-10 * den.max()
    return float(np.max(num[mask] / den[mask]))


def verify_vf_identity(j: int, psi: SpatialField) -> float:
    """max |(|x|^2 d_j psi) - sum_i x^i Om_ij psi - x^j S psi| on the grid."""
    n = psi.grid.dim
    if not 1 <= j <= n:
        raise ValueError(f"j must lie in 1..{n}")
    xs = psi.grid.coordinates()
    dj = apply_field(FieldId(Kind.SPACE_TRANSLATION, Flavor.MACRO, n, j), psi).values
    lhs = sum(x * x for x in xs) * dj
    rhs = xs[j - 1] * apply_field(FieldId(Kind.SPATIAL_SCALING, Flavor.MACRO, n), psi).values
    for i in range(1, n + 1):
        if i == j:
            continue
        a, b, sign = (i, j, 1.0) if i < j else (j, i, -1.0)
        om = apply_field(FieldId(Kind.ROTATION, Flavor.MACRO, n, a, b), psi).values
        rhs = rhs + sign * xs[i - 1] * om
    return float(np.max(np.abs(lhs - rhs)))


# ------------------------------------------------- symbolic commutator expansion


@dataclass(frozen=True)
class CommutatorTerm:
    """One summand of [T_phi, Z^a] f.

    Force terms (``transport=False``) read
    ``coefficient * t^t_power * d_{x^deriv}(potential_word phi) * field_word f``.
    Transport terms (``transport=True``) read ``coefficient * field_word (T_phi f)``;
    they only arise from the space-time scaling and vanish on solutions.
    """

    coefficient: Fraction
    potential_word: OperatorWord
    deriv: int
    field_word: OperatorWord
    t_power: int = 0
    transport: bool = False

    def __post_init__(self):
        if self.coefficient == 0:
            raise ValueError("commutator terms carry a nonzero coefficient")
        if self.t_power not in (0, 1):
            raise ValueError("t_power is 0 or 1")

    @property
    def key(self):
        return (
            self.transport,
            len(self.potential_word),
            tuple(z.sort_key for z in self.potential_word),
            self.deriv,
            self.t_power,
            len(self.field_word),
            tuple(z.sort_key for z in self.field_word),
        )

    def render(self) -> str:
        c = self.coefficient
        coef = f"{'+' if c > 0 else '-'}{abs(c)}"
        fw = str(self.field_word)
        fw = f"{fw} " if fw else ""
        if self.transport:
            return f"{coef} * {fw}T_phi(f)"
        pw = str(self.potential_word)
        pw = f"{pw} " if pw else ""
        t = "t * " if self.t_power else ""
        return f"{coef} * {t}dx{self.deriv}({pw}phi) * {fw}f"


def format_terms(terms: Iterable[CommutatorTerm]) -> str:
    """Deterministic multi-line rendering (one term per line, canonical order)."""
    terms = sorted(terms, key=lambda s: s.key)
    return "\n".join(s.render() for s in terms) + ("\n" if terms else "")


def _key_rank(z):
    return z.sort_key


@functools.lru_cache(maxsize=None)
def _normal_order(letters: tuple) -> tuple:
    """Rewrite a macroscopic word as a combination of normal-ordered words."""
    for k in range(len(letters) - 1):
        a, b = letters[k], letters[k + 1]
        if _key_rank(a) > _key_rank(b):
            acc = {}
            swapped = letters[:k] + (b, a) + letters[k + 2 :]
            for w, c in _normal_order(swapped):
                acc[w] = acc.get(w, 0) + c
            for z, c in lie_bracket(a, b):
                for w, c2 in _normal_order(letters[:k] + (z,) + letters[k + 2 :]):
                    acc[w] = acc.get(w, 0) + c * c2
            return tuple((w, c) for w, c in acc.items() if c != 0)
    return ((letters, Fraction(1)),)


def normal_order(word: OperatorWord) -> list:
    """Normal-ordered expansion of a macroscopic word as ``[(word, coefficient)]``."""
    return [(OperatorWord(w), c) for w, c in _normal_order(word.letters)]


def _dx(dim, i, flavor):
    return FieldId(Kind.SPACE_TRANSLATION, flavor, dim, i)


def _u(dim, i):
    return FieldId(Kind.UNIFORM_MOTION, Flavor.MICRO, dim, i)


@functools.lru_cache(maxsize=None)
def _dx_commutator(z: FieldId, i: int) -> tuple:
    """[Z_macro, d_i] as ((k, coefficient), ...) with the result sum_k c_k d_k."""
    dec = lie_bracket(z, _dx(z.dim, i, Flavor.MACRO))
    out = []
    for y, c in dec:
        if y.kind is not Kind.SPACE_TRANSLATION:
            raise AssertionError("[Z, d_i] left the translations")  # pragma: no cover
        out.append((y.i, c))
    return tuple(out)


def _add(acc, key, c):
    if c:
        acc[key] = acc.get(key, 0) + c


def _expand(letters: tuple, mu: int) -> dict:
    """Keys: (transport, potential_letters, deriv, field_letters, t_power)."""
    if not letters:
        return {}
    z, rest = letters[0], letters[1:]
    n = z.dim
    acc = {}
    inner = _expand(rest, mu)

    # [T_phi, Z] acting on rest(f)
    if z.kind is Kind.SPACE_TIME_SCALING:
        _add(acc, (True, (), 0, rest, 0), Fraction(1))
        for key, c in inner.items():
            _add(acc, key, c)
    base = [(Fraction(-mu), (z.macro,))]
    if z.kind is Kind.SPATIAL_SCALING:
        base.append((Fraction(2 * mu), ()))
    for c, pot in base:
        for j in range(1, n + 1):
            # d_{v_j} = (t d_{x_j} + d_{v_j}) - t d_{x_j}
            _add(acc, (False, pot, j, (_u(n, j),) + rest, 0), c)
            _add(acc, (False, pot, j, (_dx(n, j, Flavor.MICRO),) + rest, 1), -c)

    # Z acting on each term of [T_phi, rest] f
    zm = z.macro
    for (tr, pot, i, fw, p), c in inner.items():
        if tr:
            _add(acc, (True, (), 0, (z,) + fw, 0), c)
            continue
        if p == 1 and z.kind is Kind.TIME_TRANSLATION:
            _add(acc, (False, pot, i, fw, 0), c)
        if p == 1 and z.kind is Kind.SPACE_TIME_SCALING:
            _add(acc, (False, pot, i, fw, 1), c)
        for w, c2 in _normal_order((zm,) + pot):
            _add(acc, (False, w, i, fw, p), c * c2)
        for k, c2 in _dx_commutator(zm, i):
            _add(acc, (False, pot, k, fw, p), c * c2)
        _add(acc, (False, pot, i, (z,) + fw, p), c)
    return {k: c for k, c in acc.items() if c != 0}


def expand_T_phi_commutator(word: OperatorWord, mu: int = 1) -> tuple:
    """Symbolic expansion of [T_phi, Z^a] f for a microscopic word, |word| <= 3.

    Returns :class:`CommutatorTerm` objects in canonical order with like terms
    merged.  Potential words are normal ordered (translations, uniform motions,
    rotations, scalings).
    """
    mu = check_mu(mu)
    if len(word) > 3:
        raise ValueError("symbolic expansion is supported for |word| <= 3")
    for z in word:
        if z.flavor is not Flavor.MICRO:
            raise ValueError("the commutator is expanded for microscopic words")
    terms = [
        CommutatorTerm(c, OperatorWord(pot), i, OperatorWord(fw), p, tr)
        for (tr, pot, i, fw, p), c in _expand(word.letters, mu).items()
    ]
    return tuple(sorted(terms, key=lambda s: s.key))


def evaluate_terms(terms, f_jet, phi_jet, grid: PhaseGrid, time, mu=1) -> np.ndarray:
    """Grid value of a term list given jets of f and of the potential phi."""
    n = grid.dim
    sgrid = grid.spatial
    total = np.zeros(np.shape(f_jet[0]))
    tphi = None
    for s in terms:
        if s.transport:
            if tphi is None:
                tphi = transport_jet(f_jet, grid, time, phi_jet, mu)
            total += float(s.coefficient) * apply_word_jet(s.field_word, tphi, grid, time)[0]
            continue
        pot = apply_word_jet(s.potential_word, phi_jet, sgrid, time)[0]
        dpot = diff4(pot, sgrid.axes[s.deriv - 1].h, s.deriv - 1)
        fpart = apply_word_jet(s.field_word, f_jet, grid, time)[0]
        c = float(s.coefficient) * (time if s.t_power else 1.0)
        total += c * _spatial_to_phase(dpot, n) * fpart
    return total


def commutator_T_phi_numeric(word: OperatorWord, f_jet, phi_jet, grid: PhaseGrid, time, mu=1):
    """Grid value of T_phi(Z^a f) - Z^a(T_phi f) from jets of f and phi."""
    zf = apply_word_jet(word, f_jet, grid, time)
    lhs = transport_jet(zf, grid, time, phi_jet, mu)[0]
    tf = transport_jet(f_jet, grid, time, phi_jet, mu)
    rhs = apply_word_jet(word, tf, grid, time)[0]
    return lhs - rhs
