"""Ordinary and parameter-dependent Bessel-potential norms on the torus.

All L_p norms use the unit-measure torus: ``||u||_p = (mean |u|^p)^(1/p)``
over the grid samples, so ``||1||_p = 1`` for every period.  For ``p = 2``
the physical quadrature equals the Fourier coefficient sum exactly.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .fourier import (GridField, GridSpec, OperatorApplier, SingularFrequencyError,
                      _check_conditioning, from_hat)
from .symbols import DNOrders, DNSystem, anisotropic_weight


@dataclass(frozen=True)
class NormSpec:
    """Order ``s``, exponent ``p``, optional spectral parameter ``lam`` and
    1-based group-weight index ``j`` (required when ``lam`` is given)."""

    s: int
    p: float = 2.0
    lam: complex | None = None
    j: int | None = None

    def __post_init__(self):
        if not self.p > 1 or not np.isfinite(self.p):
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if int(self.s) != self.s:
            raise ValueError(f"order s must be an integer, got {self.s}")
        if self.lam is not None and self.j is None:
            raise ValueError("a weight index j is required when lam is given")

    @property
    def kind(self) -> str:
        return "exact" if self.p == 2 else "quadrature"


def _lp(values: np.ndarray, p: float, n: int) -> np.ndarray:
    axes = tuple(range(-n, 0))
    return np.mean(np.abs(values) ** p, axis=axes) ** (1.0 / p)


def _scalar(u: GridField) -> np.ndarray:
    if u.N != 1:
        raise ValueError(f"expected a scalar field, got {u.N} components")
    return u.hat()[0]


def _multi_indices(n: int, order: int):
    for alpha in itertools.product(range(order + 1), repeat=n):
        if sum(alpha) <= order:
            yield alpha


def bessel_norm(u: GridField, spec: NormSpec) -> float:
    """``|| F^{-1} <xi>^s F u ||_p`` with ``<xi> = (1 + |xi|^2)^{1/2}``."""
    uhat = _scalar(u)
    xi = u.grid.frequencies()
    mult = (1.0 + np.sum(xi ** 2, axis=-1)) ** (spec.s / 2.0)
    return float(_lp(from_hat(uhat * mult, u.grid.n), spec.p, u.grid.n))


def sobolev_norm(u: GridField, s: int, p: float = 2.0) -> float:
    """``(sum_{|alpha| <= s} ||D^alpha u||_p^p)^{1/p}`` for ``s >= 0``."""
    if s < 0:
        raise ValueError("sobolev_norm needs s >= 0")
    uhat = _scalar(u)
    xi = u.grid.frequencies()
    total = 0.0
    for alpha in _multi_indices(u.grid.n, s):
        mono = np.prod(xi ** np.asarray(alpha), axis=-1)
        total += float(_lp(from_hat(uhat * mono, u.grid.n), p, u.grid.n)) ** p
    return total ** (1.0 / p)


def _group_order(orders: DNOrders, j: int) -> float:
    if not 1 <= j <= orders.N:
        raise ValueError(f"weight index j={j} outside 1..{orders.N}")
    return float(orders.m[j - 1])


def param_norm(u: GridField, spec: NormSpec, orders: DNOrders) -> float:
    """Parameter-dependent norm with weight index ``spec.j``.

    For ``s >= 0`` this is ``||u||_{s,p} + |lam|^{s/m_j} ||u||_{0,p}``; for
    ``s < 0`` it is ``|| F^{-1} <xi,lam>_j^s F u ||_p``.  At ``s = 0`` the
    first reading gives ``2 ||u||_p``.
    """
    if spec.lam is None or spec.lam == 0:
        raise ValueError("param_norm needs a nonzero lambda")
    m_j = _group_order(orders, spec.j)
    if spec.s >= 0:
        base = float(_lp(u.values[0], spec.p, u.grid.n)) if u.N == 1 else None
        if base is None:
            raise ValueError(f"expected a scalar field, got {u.N} components")
        return sobolev_norm(u, spec.s, spec.p) + abs(spec.lam) ** (spec.s / m_j) * base
    uhat = _scalar(u)
    xi = u.grid.frequencies()
    mult = anisotropic_weight(xi, spec.lam, m_j) ** spec.s
    return float(_lp(from_hat(uhat * mult, u.grid.n), spec.p, u.grid.n))


def _component(u: GridField, k: int) -> GridField:
    return GridField(u.grid, u.values[k:k + 1])


def product_norms(u: GridField, p: float, lam: complex, orders: DNOrders) -> tuple[float, float]:
    """``(|||u|||_(t), |||u|||_(-s))``: sums of componentwise parameter norms."""
    if u.N != orders.N:
        raise ValueError(f"field has {u.N} components, orders describe {orders.N}")
    t_norm = sum(param_norm(_component(u, k), NormSpec(orders.t[k], p, lam, k + 1), orders)
                 for k in range(orders.N))
    s_norm = sum(param_norm(_component(u, k), NormSpec(-orders.s[k], p, lam, k + 1), orders)
                 for k in range(orders.N))
    return float(t_norm), float(s_norm)


# ---------------------------------------------------------------------------
# a-priori ratio


@dataclass
class AprioriResult:
    """``ratio`` estimates ``sup |||u|||_(t) / |||(A - lam) u|||_(-s)``;
    ``forward_ratio`` estimates ``sup |||(A - lam) u|||_(-s) / |||u|||_(t)``.

    In exact mode ``ratio`` is the supremum over all fields on the grid
    while ``forward_ratio`` is the supremum over single-mode fields (a lower
    bound).  In sampled mode both are maxima over random fields.
    """

    ratio: float
    forward_ratio: float
    mode: str
    lam: complex
    details: dict = field(default_factory=dict)


def _sobolev_weight(xi: np.ndarray, order: int) -> np.ndarray:
    n = xi.shape[-1]
    out = np.zeros(xi.shape[:-1])
    for alpha in _multi_indices(n, order):
        out += np.prod(xi ** np.asarray(alpha), axis=-1) ** 2
    return out


def _target_weight(orders: DNOrders, xi: np.ndarray, lam: complex, j: int) -> np.ndarray:
    """Per-frequency factor of the (-s)-norm of component ``j`` (0-based), p = 2."""
    s_j = orders.s[j]
    if s_j == 0:
        return np.full(xi.shape[:-1], 2.0)
    return anisotropic_weight(xi, lam, orders.m[j]) ** (-s_j)


def concave_simplex_max(A: np.ndarray, c: np.ndarray, tol: float = 1e-14,
                        max_iter: int = 500) -> tuple[float, np.ndarray]:
    """Maximize ``sum_t c_t sqrt(A[t] . mu)`` over the probability simplex.

    Fully corrective Frank-Wolfe: each step adds the vertex with the largest
    gradient and re-optimizes the weights on the active set.  Stops when the
    duality gap falls below ``tol`` times the objective.  Returns the value
    and the optimal weights.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    F = A.shape[1]

    def phi(v):
        return float(np.sum(c * np.sqrt(np.maximum(v, 0.0))))

    single = np.sum(c[:, None] * np.sqrt(A), axis=0)
    active = [int(np.argmax(single))]
    weights = np.array([1.0])
    value = float(single[active[0]])
    for _ in range(max_iter):
        v = A[:, active] @ weights
        tiny = max(float(v.max()), 1e-300) * 1e-30
        grad = (c / (2.0 * np.sqrt(np.maximum(v, tiny)))) @ A
        # phi is 1/2-homogeneous, so grad . mu = phi / 2
        gap = float(grad.max()) - value / 2.0
        if gap <= tol * value:
            break
        best = int(np.argmax(grad))
        if best in active:
            break
        active.append(best)
        sub = A[:, active]
        w0 = np.append(weights * (1.0 - 1e-3), 1e-3)
        res = minimize(lambda w: -phi(sub @ w), w0, method="SLSQP",
                       bounds=[(0.0, 1.0)] * len(active),
                       constraints=({"type": "eq", "fun": lambda w: np.sum(w) - 1.0},),
                       options={"ftol": 1e-16, "maxiter": 500})
        w = np.clip(res.x, 0.0, None)
        w = w / w.sum()
        new_value = phi(sub @ w)
        if new_value <= value:
            active.pop()
            break
        keep = w > 0
        active = [a for a, k in zip(active, keep) if k]
        weights = w[keep]
        value = new_value
    mu = np.zeros(F)
    mu[active] = weights
    return value, mu


def _exact_ratio(sys: DNSystem, lam: complex, grid: GridSpec) -> AprioriResult:
    orders = sys.orders
    N = sys.N
    xi = grid.frequencies()
    base = sys.symbol(np.zeros(sys.n), xi)
    mats = base - lam * np.eye(N)
    _check_conditioning(mats, xi, lam, base)
    xi_flat = xi.reshape(-1, sys.n)
    inv = np.linalg.inv(mats).reshape(-1, N, N)
    mats_flat = mats.reshape(-1, N, N)
    S = np.stack([_sobolev_weight(xi_flat, orders.t[k]) for k in range(N)])
    c = np.array([abs(lam) ** (orders.t[k] / orders.m[k]) for k in range(N)])
    G = np.stack([_target_weight(orders, xi_flat, lam, j) for j in range(N)])

    best, best_j, best_mu = -np.inf, 0, None
    for j in range(N):
        T2 = np.abs(inv[:, :, j]).T ** 2 / G[j] ** 2  # (N, F)
        A = np.vstack([T2 * S, T2])
        coef = np.concatenate([np.ones(N), c])
        val, mu = concave_simplex_max(A, coef)
        if val > best:
            best, best_j, best_mu = val, j, mu
    # forward: single component, single frequency
    fwd = np.zeros(N)
    for k in range(N):
        num = np.sum(G * np.abs(mats_flat[:, :, k]).T, axis=0)
        fwd[k] = float(np.max(num / (np.sqrt(S[k]) + c[k])))
    support = np.flatnonzero(best_mu > 0)
    details = {"component": best_j + 1,
               "support_xi": xi_flat[support].tolist(),
               "support_weights": best_mu[support].tolist(),
               "forward_kind": "single-mode lower bound"}
    return AprioriResult(float(best), float(fwd.max()), "exact", complex(lam), details)


def _sampled_ratio(sys: DNSystem, lam: complex, grid: GridSpec, samples: int, seed: int,
                   p: float, n_jobs: int) -> AprioriResult:
    rng = np.random.default_rng(seed)
    fields = [GridField.random_bandlimited(grid, sys.N, rng) for _ in range(samples)]
    applier = OperatorApplier(sys, grid)
    orders = sys.orders

    def one(u):
        f = GridField.from_hat(grid, applier.apply_hat(u.hat(), lam))
        ut, _ = product_norms(u, p, lam, orders)
        _, fs = product_norms(f, p, lam, orders)
        if fs == 0:
            raise SingularFrequencyError(np.zeros(sys.n), lam, np.inf, lam)
        return ut / fs, fs / ut

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            pairs = list(pool.map(one, fields))
    else:
        pairs = [one(u) for u in fields]
    ratios = np.array([r for r, _ in pairs])
    fwd = np.array([f for _, f in pairs])
    return AprioriResult(float(ratios.max()), float(fwd.max()), "sampled", complex(lam),
                         {"samples": samples, "seed": seed, "argmax": int(np.argmax(ratios))})


def apriori_ratio(sys: DNSystem, lam: complex, grid: GridSpec, mode: str = "exact",
                  samples: int = 64, seed: int = 42, p: float = 2.0, n_jobs: int = 1) -> AprioriResult:
    """Weighted resolvent ratio ``|||u|||_(t) / |||(A - lam) u|||_(-s)`` on ``grid``.

    ``mode="exact"`` (p = 2, constant coefficients) returns the supremum over
    all grid fields; ``mode="sampled"`` returns the maximum over ``samples``
    random band-limited fields, a lower bound on that supremum.
    """
    if sys.n != grid.n:
        raise ValueError(f"system dimension {sys.n} != grid dimension {grid.n}")
    if mode == "exact":
        if p != 2:
            raise ValueError("exact mode is only available for p = 2")
        if not sys.is_constant:
            raise ValueError("exact mode needs constant coefficients; use mode='sampled'")
        return _exact_ratio(sys, lam, grid)
    if mode == "sampled":
        return _sampled_ratio(sys, lam, grid, samples, seed, p, n_jobs)
    raise ValueError(f"unknown mode {mode!r}")
