"""Douglis-Nirenberg systems with polynomial symbols.

A system is an N x N matrix of differential operators

    A_jk(x, D) = sum_{|alpha| <= s_j + t_k} a^{jk}_alpha(x) D^alpha,   D = -i d/dx,

so that its symbol is A_jk(x, xi) = sum_alpha a^{jk}_alpha(x) xi^alpha.
Coefficients are a constant plus finitely many Gaussian bumps (optionally
differentiated), which keeps every derivative available in closed form.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import hermite as _hermite


class DNValidationError(ValueError):
    """Raised when orders, coefficients or terms violate the DN structure.

    ``path`` is a JSON-pointer style location of the offending datum
    (e.g. ``"/t/0"``), empty when not applicable.
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


# ---------------------------------------------------------------------------
# orders


@dataclass(frozen=True)
class DNOrders:
    """Weight vectors ``s``, ``t`` and the derived group structure.

    ``m[j] = s[j] + t[j]``; ``groups`` holds the (1-based) right ends
    ``k_1 < ... < k_d = N`` of the maximal runs of equal ``m``;
    ``partial_sums[r]`` is ``N_r = sum_{j <= k_r} m_j`` with ``N_0 = 0``
    stored at index 0.
    """

    s: tuple[int, ...]
    t: tuple[int, ...]
    m: tuple[int, ...]
    groups: tuple[int, ...]
    partial_sums: tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.s)

    @property
    def d(self) -> int:
        return len(self.groups)

    def group_bounds(self, r: int) -> tuple[int, int]:
        """Return ``(k_{r-1}, k_r)`` for 1-based group index ``r``."""
        self._check_group(r)
        lo = 0 if r == 1 else self.groups[r - 2]
        return lo, self.groups[r - 1]

    def group_order(self, r: int) -> int:
        """Common order ``m_{k_r}`` of group ``r``."""
        self._check_group(r)
        return self.m[self.groups[r - 1] - 1]

    def _check_group(self, r: int) -> None:
        if not 1 <= r <= self.d:
            raise DNValidationError(f"group index r={r} outside 1..{self.d}")


def validate_orders(s: Sequence[int], t: Sequence[int]) -> DNOrders:
    """Check the ordering/positivity conditions on ``s``, ``t`` and build groups."""
    s = tuple(int(v) for v in s)
    t = tuple(int(v) for v in t)
    if len(s) != len(t):
        raise DNValidationError(f"s and t have different lengths ({len(s)} != {len(t)})")
    if len(s) < 1:
        raise DNValidationError("system size N must be at least 1", "/s")
    for j, v in enumerate(s):
        if v < 0:
            raise DNValidationError(f"s[{j}] = {v} < 0; row weights must satisfy s_j >= 0", f"/s/{j}")
    for j, v in enumerate(t):
        if v <= 0:
            raise DNValidationError(f"t[{j}] = {v} <= 0; column weights must satisfy t_j > 0", f"/t/{j}")
    for j in range(1, len(s)):
        if s[j] > s[j - 1]:
            raise DNValidationError(f"s is not non-increasing at index {j} ({s[j - 1]} < {s[j]})", f"/s/{j}")
        if t[j] > t[j - 1]:
            raise DNValidationError(f"t is not non-increasing at index {j} ({t[j - 1]} < {t[j]})", f"/t/{j}")
    m = tuple(a + b for a, b in zip(s, t))
    groups = [j for j in range(1, len(m)) if m[j] != m[j - 1]] + [len(m)]
    partial = [0]
    for k in groups:
        partial.append(sum(m[:k]))
    return DNOrders(s=s, t=t, m=m, groups=tuple(groups), partial_sums=tuple(partial))


def anisotropic_weight(xi, lam, m_j: int) -> np.ndarray:
    """``<xi, lam>_j = (|xi|^2 + |lam|^(2/m_j))^(1/2)``, broadcasting over leading axes of ``xi``."""
    xi = np.asarray(xi, dtype=float)
    lam_term = np.abs(np.asarray(lam)) ** (2.0 / m_j)
    return np.sqrt(np.sum(xi * xi, axis=-1) + lam_term)


@dataclass(frozen=True)
class Sector:
    """Closed sector ``{0} U {lam : theta_min <= arg lam <= theta_max}`` (angles in [0, 2 pi])."""

    theta_min: float
    theta_max: float

    def __post_init__(self):
        if not 0.0 <= self.theta_min <= self.theta_max <= 2.0 * math.pi + 1e-15:
            raise DNValidationError(
                f"sector angles must satisfy 0 <= theta_min <= theta_max <= 2 pi, "
                f"got [{self.theta_min}, {self.theta_max}]", "/sector")

    @classmethod
    def from_epsilon(cls, eps: float) -> "Sector":
        """``eps <= arg lam <= 2 pi - eps``: everything except a wedge around the positive axis."""
        return cls(eps, 2.0 * math.pi - eps)

    def contains(self, lam, tol: float = 1e-12) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        arg = np.mod(np.angle(lam), 2.0 * math.pi)
        inside = (arg >= self.theta_min - tol) & (arg <= self.theta_max + tol)
        # the positive real axis has arg 0 but also 2 pi
        if self.theta_max >= 2.0 * math.pi - tol:
            inside |= np.abs(arg) <= tol
        return inside | (lam == 0)

    def angles(self, count: int) -> np.ndarray:
        return np.linspace(self.theta_min, self.theta_max, count)


@dataclass(frozen=True)
class ParityVerdict:
    passed: bool
    offending_group: int | None
    details: tuple[str, ...]


def parity_check(orders: DNOrders, n: int) -> ParityVerdict:
    """Necessary condition for ellipticity: ``N_1`` even, and ``N_r`` even for r > 1 when n > 2."""
    details = []
    offending = None
    for r in range(1, orders.d + 1):
        Nr = orders.partial_sums[r]
        if r > 1 and n <= 2:
            details.append(f"r={r}: N_r={Nr}, not applicable for n={n}")
            continue
        if Nr % 2:
            details.append(f"r={r}: N_r={Nr} is odd")
            if offending is None:
                offending = r
        else:
            details.append(f"r={r}: N_r={Nr} even")
    return ParityVerdict(passed=offending is None, offending_group=offending, details=tuple(details))


# ---------------------------------------------------------------------------
# coefficients


def _gauss_derivative_1d(y: np.ndarray, width: float, k: int) -> np.ndarray:
    # d^k/dy^k exp(-y^2/w^2) = (-1/w)^k H_k(y/w) exp(-y^2/w^2), H_k physicists' Hermite
    z = y / width
    g = np.exp(-z * z)
    if k == 0:
        return g
    c = np.zeros(k + 1)
    c[k] = 1.0
    return (-1.0 / width) ** k * _hermite.hermval(z, c) * g


@dataclass(frozen=True)
class Bump:
    """``amplitude * d^deriv exp(-|x - center|^2 / width^2)`` (``d`` = plain partials)."""

    amplitude: complex
    center: tuple[float, ...]
    width: float
    deriv: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "width", float(self.width))
        deriv = tuple(int(d) for d in self.deriv) or (0,) * len(self.center)
        object.__setattr__(self, "deriv", deriv)
        if not self.width > 0:
            raise DNValidationError(f"bump width must be positive, got {self.width}")
        if len(deriv) != len(self.center) or min(deriv) < 0:
            raise DNValidationError(f"bad derivative multi-index {deriv} for a bump in dimension {len(self.center)}")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        y = np.asarray(x, dtype=float) - np.asarray(self.center)
        val = np.ones(y.shape[:-1], dtype=float)
        for i, k in enumerate(self.deriv):
            val = val * _gauss_derivative_1d(y[..., i], self.width, k)
        return self.amplitude * val


@dataclass(frozen=True)
class Coefficient:
    """Constant plus a finite sum of (differentiated) Gaussian bumps."""

    constant: complex = 0.0
    bumps: tuple[Bump, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constant", complex(self.constant))
        object.__setattr__(self, "bumps", tuple(self.bumps))

    @property
    def is_constant(self) -> bool:
        return not self.bumps

    @property
    def is_zero(self) -> bool:
        return self.constant == 0 and all(b.amplitude == 0 for b in self.bumps)

    def evaluate(self, x, period: float | None = None) -> np.ndarray:
        """Value at points ``x`` of shape ``(..., n)``.

        With ``period`` the bumps are periodized over the torus ``[0, period)^n``.
        """
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self.constant, dtype=complex)
        for b in self.bumps:
            if period is None:
                out += b.evaluate(x)
                continue
            reach = int(math.ceil(7.0 * b.width / period))
            n = x.shape[-1]
            for shift in itertools.product(range(-reach, reach + 1), repeat=n):
                out += b.evaluate(x + period * np.asarray(shift, dtype=float))
        return out

    def D(self, beta: Sequence[int]) -> "Coefficient":
        """Closed-form ``D^beta`` of the coefficient (``D = -i d/dx``)."""
        beta = tuple(int(b) for b in beta)
        order = sum(beta)
        if order == 0:
            return self
        factor = (-1j) ** order
        bumps = tuple(
            Bump(factor * b.amplitude, b.center, b.width, tuple(a + c for a, c in zip(b.deriv, beta)))
            for b in self.bumps
        )
        return Coefficient(0.0, bumps)

    def conj(self) -> "Coefficient":
        return Coefficient(np.conj(self.constant), tuple(
            Bump(np.conj(b.amplitude), b.center, b.width, b.deriv) for b in self.bumps))

    def scaled(self, factor: complex) -> "Coefficient":
        return Coefficient(factor * self.constant, tuple(
            Bump(factor * b.amplitude, b.center, b.width, b.deriv) for b in self.bumps))

    def __add__(self, other: "Coefficient") -> "Coefficient":
        return Coefficient(self.constant + other.constant, self.bumps + other.bumps)


@dataclass(frozen=True)
class Term:
    alpha: tuple[int, ...]
    coeff: Coefficient

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(int(a) for a in self.alpha))
        if min(self.alpha, default=0) < 0:
            raise DNValidationError(f"multi-index {self.alpha} has a negative entry")

    @property
    def order(self) -> int:
        return sum(self.alpha)


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class DNSystem:
    """An N x N Douglis-Nirenberg system over R^n.

    ``entries[j][k]`` is a tuple of :class:`Term`; entry (j, k) may only
    contain terms of order at most ``s_j + t_k``.
    """

    n: int
    orders: DNOrders
    entries: tuple[tuple[tuple[Term, ...], ...], ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        N = self.orders.N
        entries = tuple(tuple(tuple(cell) for cell in row) for row in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.n < 1:
            raise DNValidationError(f"dimension n must be >= 1, got {self.n}", "/n")
        if len(entries) != N or any(len(row) != N for row in entries):
            raise DNValidationError(f"entries must be an {N}x{N} array", "/entries")
        for j, k in itertools.product(range(N), repeat=2):
            cap = self.orders.s[j] + self.orders.t[k]
            for i, term in enumerate(entries[j][k]):
                path = f"/entries/{j}/{k}/{i}"
                if len(term.alpha) != self.n:
                    raise DNValidationError(f"multi-index {term.alpha} has length != n={self.n}", path + "/alpha")
                if term.order > cap:
                    raise DNValidationError(
                        f"term of order {term.order} exceeds s_{j + 1}+t_{k + 1}={cap} in entry ({j + 1},{k + 1})",
                        path + "/alpha")
                for b, bump in enumerate(term.coeff.bumps):
                    if len(bump.center) != self.n:
                        raise DNValidationError(f"bump center has length != n={self.n}",
                                                f"{path}/coeff/bumps/{b}/center")

    @property
    def N(self) -> int:
        return self.orders.N

    @property
    def is_constant(self) -> bool:
        return all(t.coeff.is_constant for row in self.entries for cell in row for t in cell)

    def terms(self, principal_only: bool = False):
        """Yield ``(j, k, term)`` over all (or only top-order) terms."""
        for j, row in enumerate(self.entries):
            for k, cell in enumerate(row):
                cap = self.orders.s[j] + self.orders.t[k]
                for term in cell:
                    if principal_only and term.order != cap:
                        continue
                    yield j, k, term

    def bumps(self, principal_only: bool = False) -> list[Bump]:
        return [b for _, _, t in self.terms(principal_only) for b in t.coeff.bumps]

    def _symbol(self, x, xi, principal_only: bool) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if x.shape[-1] != self.n or xi.shape[-1] != self.n:
            raise DNValidationError(f"points must have last dimension n={self.n}")
        shape = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        out = np.zeros(shape + (self.N, self.N), dtype=complex)
        for j, k, term in self.terms(principal_only):
            mono = np.prod(xi ** np.asarray(term.alpha), axis=-1)
            out[..., j, k] += term.coeff.evaluate(x) * mono
        return out

    def symbol(self, x, xi, lam: complex = 0.0) -> np.ndarray:
        """Full symbol ``A(x, xi) - lam I``; broadcasts over leading axes of ``x`` and ``xi``."""
        out = self._symbol(x, xi, principal_only=False)
        if lam != 0:
            out -= lam * np.eye(self.N)
        return out

    def principal_symbol(self, x, xi) -> np.ndarray:
        """Top-order part: entry (j, k) keeps only terms of order exactly ``s_j + t_k``."""
        return self._symbol(x, xi, principal_only=True)

    def nested_principal(self, x, xi, r: int) -> np.ndarray:
        """Leading ``k_r x k_r`` block of the principal symbol."""
        _, kr = self.orders.group_bounds(r)
        return self.principal_symbol(x, xi)[..., :kr, :kr]

    def frozen_principal(self, x0) -> "DNSystem":
        """Constant-coefficient system made of the principal terms frozen at ``x0``."""
        x0 = np.asarray(x0, dtype=float).reshape(self.n)
        N = self.N
        cells = [[[] for _ in range(N)] for _ in range(N)]
        for j, k, term in self.terms(principal_only=True):
            value = complex(term.coeff.evaluate(x0))
            cells[j][k].append(Term(term.alpha, Coefficient(value)))
        return DNSystem(self.n, self.orders, cells, dict(self.metadata, frozen_at=x0.tolist()))

    def map_coefficients(self, fn) -> "DNSystem":
        """New system with every coefficient replaced by ``fn(coeff)``."""
        cells = [[[Term(t.alpha, fn(t.coeff)) for t in cell] for cell in row] for row in self.entries]
        return DNSystem(self.n, self.orders, cells, dict(self.metadata))


def symbol_batch(sys: DNSystem, xs, xi, principal_only: bool = False) -> np.ndarray:
    """Symbols at every pair of ``xs`` (shape ``(X, n)``) and ``xi`` (shape ``(S, n)``).

    Returns shape ``(X, S, N, N)``.  Monomials are computed once and
    contracted with the coefficient values, which is much faster than
    calling :meth:`DNSystem.symbol` per point when X is large.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    N = sys.N
    out = np.zeros((len(xs), len(xi), N, N), dtype=complex)
    for j, k, term in sys.terms(principal_only):
        mono = np.prod(xi ** np.asarray(term.alpha), axis=-1)
        out[:, :, j, k] += term.coeff.evaluate(xs)[:, None] * mono[None, :]
    return out


def lambda_mask(orders: DNOrders, r: int) -> np.ndarray:
    """Diagonal 0/1 matrix with ones on the indices of group ``r`` (size ``k_r``)."""
    lo, hi = orders.group_bounds(r)
    diag = np.zeros(hi)
    diag[lo:hi] = 1.0
    return np.diag(diag)


def nested_determinant(sys: DNSystem, x, xi, lam, r: int) -> np.ndarray:
    """``det(A^(r)_11(x, xi) - lam * mask_r)``, broadcasting over ``x``, ``xi``, ``lam``."""
    block = sys.nested_principal(x, xi, r)
    mask = lambda_mask(sys.orders, r)
    lam = np.asarray(lam, dtype=complex)
    return np.linalg.det(block - lam[..., None, None] * mask)


def _multi_indices_below(alpha: tuple[int, ...]):
    return itertools.product(*(range(a + 1) for a in alpha))


def formal_adjoint(sys: DNSystem) -> DNSystem:
    """The formally adjoint system ``A'``.

    Entry (j, k) of ``A'`` is ``v -> sum_alpha D^alpha(conj(a^{kj}_alpha) v)``,
    expanded with the Leibniz rule into ``sum_beta b_beta(x) D^beta``.  Only
    systems with all ``s_j = 0`` are accepted; the adjoint then has the same
    orders.
    """
    if any(sys.orders.s):
        raise DNValidationError("formal adjoint is only implemented for systems with all s_j = 0", "/s")
    N = sys.N
    cells = [[[] for _ in range(N)] for _ in range(N)]
    for j, k in itertools.product(range(N), repeat=2):
        collected: dict[tuple[int, ...], Coefficient] = {}
        for term in sys.entries[k][j]:
            cbar = term.coeff.conj()
            for beta in _multi_indices_below(term.alpha):
                gamma = tuple(a - b for a, b in zip(term.alpha, beta))
                weight = math.prod(math.comb(a, b) for a, b in zip(term.alpha, beta))
                piece = cbar.D(gamma).scaled(weight)
                collected[beta] = collected[beta] + piece if beta in collected else piece
        cap = sys.orders.t[k]
        for beta in sorted(collected):
            coeff = collected[beta]
            if coeff.is_zero:
                continue
            if sum(beta) > cap:
                raise DNValidationError(
                    f"adjoint entry ({j + 1},{k + 1}) has order {sum(beta)} > t_{k + 1}={cap}; "
                    "the adjoint leaves the DN class", f"/entries/{k}/{j}")
            cells[j][k].append(Term(beta, coeff))
    return DNSystem(sys.n, sys.orders, cells, dict(sys.metadata, adjoint=True))
