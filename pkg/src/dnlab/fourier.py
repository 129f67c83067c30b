"""Periodic-torus discretization and Fourier-multiplier solvers.

Conventions
-----------
* The torus is ``[0, L)^n`` sampled on ``M`` points per axis.
* Fourier coefficients are ``u_hat = fftn(u) / M^n`` so that
  ``u(x) = sum_k u_hat[k] exp(i xi_k . x)`` with ``xi_k = 2 pi k / L``
  and ``k`` in numpy FFT order (``0, 1, ..., M/2-1, -M/2, ..., -1``) on
  every axis.  With the unit-measure torus, ``sum |u_hat|^2`` is the mean
  of ``|u|^2``.
* Variable-coefficient products are formed pointwise on a zero-padded
  grid large enough that the product of a resolved field with a
  coefficient is not aliased back onto the retained modes.  The result is
  the Galerkin projection of ``a(x) D^alpha u``.
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .symbols import Coefficient, DNSystem, anisotropic_weight

COND_MAX = 1e14


class SingularFrequencyError(ArithmeticError):
    """A per-frequency symbol matrix is numerically singular.

    Carries the offending frequency ``xi``, the symbol eigenvalue closest
    to ``lam`` and the condition number.
    """

    def __init__(self, xi, eigenvalue, cond, lam):
        self.xi = np.asarray(xi, dtype=float)
        self.eigenvalue = complex(eigenvalue)
        self.cond = float(cond)
        self.lam = complex(lam)
        super().__init__(
            f"symbol matrix singular at xi={self.xi.tolist()} for lambda={self.lam}: "
            f"nearest symbol eigenvalue {self.eigenvalue}, condition number {self.cond:.3g}")


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: float
    M: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        if self.M < 4 or self.M % 2:
            raise ValueError(f"points per axis must be even and >= 4, got {self.M}")
        if not self.L > 0:
            raise ValueError(f"period must be positive, got {self.L}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.n

    @property
    def size(self) -> int:
        return self.M ** self.n

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers along one axis, FFT order."""
        return np.fft.fftfreq(self.M, 1.0 / self.M).astype(int)

    def frequencies(self) -> np.ndarray:
        """Frequency vectors ``xi_k`` with shape ``(M,)*n + (n,)``."""
        k = 2.0 * np.pi / self.L * self.wavenumbers
        return np.stack(np.meshgrid(*([k] * self.n), indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        """Physical sample points with shape ``(M,)*n + (n,)``."""
        x = np.arange(self.M) * (self.L / self.M)
        return np.stack(np.meshgrid(*([x] * self.n), indexing="ij"), axis=-1)

    def doubled(self) -> "GridSpec":
        """Twice the period at the same point density."""
        return GridSpec(self.n, 2.0 * self.L, 2 * self.M)


def to_hat(values: np.ndarray, n: int) -> np.ndarray:
    axes = tuple(range(-n, 0))
    M = values.shape[-1]
    return sfft.fftn(values, axes=axes) / M ** n


def from_hat(coeffs: np.ndarray, n: int) -> np.ndarray:
    axes = tuple(range(-n, 0))
    M = coeffs.shape[-1]
    return sfft.ifftn(coeffs, axes=axes) * M ** n


_HEADER = struct.Struct("<qqqd")


@dataclass
class GridField:
    """``N`` complex components sampled on a :class:`GridSpec`.

    ``values`` has shape ``(N,) + grid.shape`` and holds physical samples.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[1:] != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def hat(self) -> np.ndarray:
        return to_hat(self.values, self.grid.n)

    @classmethod
    def from_hat(cls, grid: GridSpec, coeffs) -> "GridField":
        return cls(grid, from_hat(np.asarray(coeffs, dtype=complex), grid.n))

    @classmethod
    def zeros(cls, grid: GridSpec, N: int) -> "GridField":
        return cls(grid, np.zeros((N,) + grid.shape, dtype=complex))

    @classmethod
    def random_bandlimited(cls, grid: GridSpec, N: int, rng: np.random.Generator,
                           kmax: int | None = None) -> "GridField":
        """Random complex Gaussian coefficients on ``|k|_inf <= kmax`` (default ``M/4``)."""
        kmax = grid.M // 4 if kmax is None else kmax
        k = grid.wavenumbers
        mask = np.ones(grid.shape, dtype=bool)
        for axis in range(grid.n):
            sl = [None] * grid.n
            sl[axis] = slice(None)
            mask &= (np.abs(k) <= kmax)[tuple(sl)]
        coeffs = rng.normal(size=(N,) + grid.shape) + 1j * rng.normal(size=(N,) + grid.shape)
        return cls.from_hat(grid, coeffs * mask)

    def to_bytes(self) -> bytes:
        """Header ``n, N, M`` (int64) and ``L`` (float64), little-endian, then
        interleaved re/im float64 Fourier coefficients, component-major and
        row-major over FFT-ordered frequencies."""
        header = _HEADER.pack(self.grid.n, self.N, self.grid.M, float(self.grid.L))
        payload = np.ascontiguousarray(self.hat(), dtype="<c16").tobytes()
        return header + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridField":
        n, N, M, L = _HEADER.unpack_from(data)
        grid = GridSpec(int(n), float(L), int(M))
        expected = _HEADER.size + 16 * N * M ** n
        if len(data) != expected:
            raise ValueError(f"field payload has {len(data)} bytes, expected {expected}")
        coeffs = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape((N,) + grid.shape)
        return cls.from_hat(grid, coeffs.astype(complex))


# ---------------------------------------------------------------------------
# operator application


def _monomial(xi: np.ndarray, alpha) -> np.ndarray:
    return np.prod(xi ** np.asarray(alpha), axis=-1)


def padded_size(sys: DNSystem, grid: GridSpec) -> int:
    """Padded grid size that makes coefficient products alias-free on the retained modes."""
    band = 0
    for b in sys.bumps():
        # Gaussian spectrum ~ exp(-w^2 eta^2 / 4) |eta|^|deriv|; cut where it falls below ~1e-17
        eta = (math.sqrt(160.0) + 2.0 * sum(b.deriv)) / b.width
        band = max(band, math.ceil(eta * grid.L / (2.0 * math.pi)))
    if band == 0:
        return grid.M
    K = grid.M + 2 * band + 2
    K = sfft.next_fast_len(K)
    return K + (K % 2)


class OperatorApplier:
    """Applies ``A(x, D) - lam`` to batches of Fourier coefficient arrays on a grid.

    Coefficient samples on the padded grid are cached, so repeated
    applications (matrix assembly, sampled norms) are cheap.
    """

    def __init__(self, sys: DNSystem, grid: GridSpec, dealias: bool = True):
        if sys.n != grid.n:
            raise ValueError(f"system dimension {sys.n} != grid dimension {grid.n}")
        self.sys = sys
        self.grid = grid
        self.xi = grid.frequencies()
        self.K = padded_size(sys, grid) if dealias else grid.M
        # constant parts act as Fourier multipliers
        sym = np.zeros(grid.shape + (sys.N, sys.N), dtype=complex)
        self.variable = []
        padded = GridSpec(grid.n, grid.L, self.K) if self.K != grid.M else grid
        xs = padded.points()
        for j, k, term in sys.terms():
            mono = _monomial(self.xi, term.alpha)
            sym[..., j, k] += term.coeff.constant * mono
            if term.coeff.bumps:
                samples = Coefficient(0.0, term.coeff.bumps).evaluate(xs, period=grid.L)
                self.variable.append((j, k, mono, samples))
        self.multiplier = sym
        k_int = grid.wavenumbers
        idx = k_int % self.K
        self._ix = np.ix_(*([idx] * grid.n))

    def apply_hat(self, uhat: np.ndarray, lam: complex = 0.0) -> np.ndarray:
        """``uhat`` has shape ``(..., N) + grid.shape``; returns coefficients of ``(A - lam) u``."""
        n = self.grid.n
        uhat = np.asarray(uhat, dtype=complex)
        # move component axis last for the matrix product
        u_last = np.moveaxis(uhat, -n - 1, -1)
        f_last = np.einsum("...jk,...k->...j", self.multiplier, u_last)
        fhat = np.moveaxis(f_last, -1, -n - 1)
        if lam != 0:
            fhat = fhat - lam * uhat
        if not self.variable:
            return fhat
        fhat = np.array(fhat, copy=True)
        batch = uhat.shape[:-n - 1]
        K = self.K
        tail = (slice(None),) * n
        for j, k, mono, samples in self.variable:
            dk = uhat[(Ellipsis, k) + tail] * mono
            if K == self.grid.M:
                fhat[(Ellipsis, j) + tail] += to_hat(from_hat(dk, n) * samples, n)
                continue
            pad = np.zeros(batch + (K,) * n, dtype=complex)
            pad[(Ellipsis,) + self._ix] = dk
            prod = from_hat(pad, n) * samples
            fhat[(Ellipsis, j) + tail] += to_hat(prod, n)[(Ellipsis,) + self._ix]
        return fhat


def apply_operator(sys: DNSystem, lam: complex, u: GridField, dealias: bool = True) -> GridField:
    """``f = A(x, D) u - lam u`` on the torus."""
    if u.N != sys.N:
        raise ValueError(f"field has {u.N} components, system has {sys.N}")
    applier = OperatorApplier(sys, u.grid, dealias=dealias)
    return GridField.from_hat(u.grid, applier.apply_hat(u.hat(), lam))


def frozen_symbol_matrices(sys: DNSystem, x0, grid: GridSpec, lam: complex) -> np.ndarray:
    """``A0(x0, xi_k) - lam I`` for every grid frequency, shape ``grid.shape + (N, N)``."""
    xi = grid.frequencies()
    return sys.principal_symbol(np.asarray(x0, dtype=float), xi) - lam * np.eye(sys.N)


def _check_conditioning(mats: np.ndarray, xi: np.ndarray, lam: complex, base: np.ndarray) -> None:
    flat = mats.reshape(-1, mats.shape[-2], mats.shape[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(flat)
    cond = np.where(np.isfinite(cond), cond, np.inf)
    worst = int(np.argmax(cond))
    if cond[worst] > COND_MAX:
        eig = np.linalg.eigvals(base.reshape(flat.shape)[worst])
        nearest = eig[np.argmin(np.abs(eig - lam))]
        raise SingularFrequencyError(xi.reshape(-1, xi.shape[-1])[worst], nearest, cond[worst], lam)


def frozen_resolvent_apply(sys: DNSystem, x0, lam: complex, f: GridField) -> GridField:
    """Solve ``A0(x0, D) u - lam u = f`` frequency by frequency.

    ``A0(x0, .)`` is the principal part with coefficients frozen at ``x0``.
    Raises :class:`SingularFrequencyError` if some frequency matrix has
    condition number above ``1e14``.
    """
    grid = f.grid
    if f.N != sys.N:
        raise ValueError(f"field has {f.N} components, system has {sys.N}")
    base = sys.principal_symbol(np.asarray(x0, dtype=float), grid.frequencies())
    mats = base - lam * np.eye(sys.N)
    _check_conditioning(mats, grid.frequencies(), lam, base)
    fhat = np.moveaxis(f.hat(), 0, -1)[..., None]
    uhat = np.linalg.solve(mats, fhat)[..., 0]
    return GridField.from_hat(grid, np.moveaxis(uhat, -1, 0))


# ---------------------------------------------------------------------------
# symbol-inverse (Mikhlin type) bounds


@dataclass(frozen=True)
class MikhlinTable:
    """``ratios[l, j, k, a]``: max over xi samples of
    ``|xi^alpha d^alpha_xi inv_jk| <xi,lam>_k^{s_k} <xi,lam>_j^{t_j}`` at ``lambdas[l]``
    for ``alphas[a]`` in ``{0,1}^n``."""

    lambdas: np.ndarray
    alphas: tuple[tuple[int, ...], ...]
    ratios: np.ndarray

    def max(self) -> np.ndarray:
        return self.ratios.max(axis=0)


def _inverse_symbol(sys: DNSystem, x0, xi: np.ndarray, lam: complex) -> np.ndarray:
    mats = sys.principal_symbol(x0, xi) - lam * np.eye(sys.N)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(mats.reshape(-1, sys.N, sys.N))
    if not np.all(np.isfinite(cond)) or cond.max() > COND_MAX:
        raise SingularFrequencyError(xi.reshape(-1, sys.n)[int(np.nanargmax(np.where(np.isfinite(cond), cond, np.inf)))],
                                     np.nan, np.nanmax(cond), lam)
    return np.linalg.inv(mats)


def symbol_inverse_bounds(sys: DNSystem, x0, lambdas, xi_samples, rel_step: float = 1e-4) -> MikhlinTable:
    """Weighted bounds on ``xi^alpha d^alpha (A0(x0, xi) - lam)^{-1}`` for ``alpha`` in ``{0,1}^n``.

    Mixed partials use nested central differences with step
    ``h_i = rel_step * max(1, |xi_i|)``; if a stencil point is singular the
    step is shrunk by 10 (up to three times).
    """
    x0 = np.asarray(x0, dtype=float)
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=complex))
    n, N = sys.n, sys.N
    orders = sys.orders
    alphas = tuple(itertools.product((0, 1), repeat=n))
    out = np.zeros((len(lambdas), N, N, len(alphas)))
    for li, lam in enumerate(lambdas):
        weights = np.stack([anisotropic_weight(xi, lam, orders.m[j]) for j in range(N)], axis=-1)
        wt = weights ** np.asarray(orders.t)  # <xi,lam>_j^{t_j}, indexed by row j
        ws = weights ** np.asarray(orders.s)  # <xi,lam>_k^{s_k}, indexed by column k
        scale = wt[:, :, None] * ws[:, None, :]
        for ai, alpha in enumerate(alphas):
            axes = [i for i, a in enumerate(alpha) if a]
            step = rel_step
            for attempt in range(4):
                try:
                    deriv = _finite_difference(sys, x0, xi, lam, axes, step)
                    break
                except SingularFrequencyError:
                    if attempt == 3:
                        raise
                    step /= 10.0
            mono = np.prod(np.where(np.asarray(alpha, dtype=bool), np.abs(xi), 1.0), axis=-1)
            vals = np.abs(deriv) * mono[:, None, None] * scale
            out[li, :, :, ai] = vals.max(axis=0)
    return MikhlinTable(lambdas, alphas, out)


def _finite_difference(sys, x0, xi, lam, axes, rel_step):
    if not axes:
        return _inverse_symbol(sys, x0, xi, lam)
    h = rel_step * np.maximum(1.0, np.abs(xi))
    total = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=len(axes)):
        shifted = xi.copy()
        for sgn, ax in zip(signs, axes):
            shifted[:, ax] += sgn * h[:, ax]
        total = total + np.prod(signs) * _inverse_symbol(sys, x0, shifted, lam)
    denom = np.prod([2.0 * h[:, ax] for ax in axes], axis=0)
    return total / denom[:, None, None]
