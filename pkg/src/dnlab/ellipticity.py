"""Sampled verification of uniform parameter-ellipticity in a sector.

For every order group ``r`` the quantity

    |det(A^(r)_11(x, xi) - lam * mask_r)| / |xi|^{N_{r-1}}

is minimized over ``x`` and over the compact set
``{(xi, lam): lam in sector, <xi, lam>_{k_r} = 1}``.  The set is
parametrized by a direction ``d`` on the unit sphere, ``u = |lam|^{1/m}``
in ``[0, 1]`` and ``theta = arg lam``, so that ``xi = sqrt(1 - u^2) d`` and
``lam = u^m e^{i theta}``.  The minimum over an exhaustive grid is polished
by compass search; the result is a sampled upper bound on the infimum.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .symbols import (DNOrders, DNSystem, Sector, anisotropic_weight, nested_determinant, parity_check,
                      symbol_batch)


class ResolutionError(ValueError):
    """Sampling resolution too coarse to define a mesh."""


class ThresholdNotReached(RuntimeError):
    """The doubling search for the perturbation threshold exceeded its cap."""

    def __init__(self, radius: float, worst_ratio: float):
        self.radius = radius
        self.worst_ratio = worst_ratio
        super().__init__(f"perturbation threshold not reached below radius {radius:.3g} "
                         f"(worst ratio {worst_ratio:.3g})")


@dataclass(frozen=True)
class Resolution:
    """Counts for xi directions, the radial parameter ``u`` and ``arg lam``.

    In one dimension the directions are always ``+1`` and ``-1``.
    """

    directions: int = 16
    radial: int = 41
    args: int = 41

    def __post_init__(self):
        for name in ("directions", "radial", "args"):
            if getattr(self, name) < 2:
                raise ResolutionError(f"resolution needs at least 2 points per axis ({name}={getattr(self, name)})")

    def refined(self) -> "Resolution":
        """Halve every mesh spacing; the new sample set contains the old one (n <= 2)."""
        return Resolution(2 * self.directions, 2 * self.radial - 1, 2 * self.args - 1)

    @classmethod
    def parse(cls, text: str) -> "Resolution":
        parts = [int(p) for p in str(text).split(",")]
        if len(parts) == 1:
            parts = parts * 3
        if len(parts) != 3:
            raise ResolutionError(f"resolution must be 'k' or 'd,r,a', got {text!r}")
        return cls(*parts)


def sphere_directions(n: int, count: int) -> np.ndarray:
    """Deterministic unit vectors: ``+-1`` (n=1), equally spaced angles (n=2),
    a Fibonacci lattice (n=3) or normalized seeded Gaussians (n>3)."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        phi = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = np.pi * (1.0 + 5.0 ** 0.5) * i
        rho = np.sqrt(1.0 - z * z)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    g = np.random.default_rng(0).normal(size=(count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class ConstraintSample:
    xi: tuple[float, ...]
    lam: complex
    r: int


@dataclass
class ConstraintSet:
    """Vectorized samples of the constraint set of group ``r``."""

    r: int
    xi: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    direction_index: np.ndarray
    mesh_gap: dict
    dropped: int

    def __len__(self) -> int:
        return len(self.lam)

    def __getitem__(self, i: int) -> ConstraintSample:
        return ConstraintSample(tuple(self.xi[i]), complex(self.lam[i]), self.r)


def constraint_samples(orders: DNOrders, r: int, sector: Sector, resolution: Resolution,
                       n: int = 1, xi_floor: float = 1e-3) -> ConstraintSet:
    """Grid over ``{lam in sector, <xi, lam>_{k_r} = 1}`` (directions x radial x args).

    For ``r > 1`` points with ``|xi| < xi_floor`` are dropped.
    """
    m = orders.group_order(r)
    dirs = sphere_directions(n, resolution.directions)
    u = np.linspace(0.0, 1.0, resolution.radial)
    theta = sector.angles(resolution.args)
    D, U, T = np.meshgrid(np.arange(len(dirs)), u, theta, indexing="ij")
    D, U, T = D.ravel(), U.ravel(), T.ravel()
    rho = np.sqrt(np.clip(1.0 - U * U, 0.0, None))
    keep = np.ones(len(U), dtype=bool) if r == 1 else rho >= xi_floor
    D, U, T, rho = D[keep], U[keep], T[keep], rho[keep]
    xi = rho[:, None] * dirs[D]
    lam = U ** m * np.exp(1j * T)
    if n == 2:
        dir_gap = 2.0 * np.pi / resolution.directions
    elif n == 1:
        dir_gap = 0.0
    else:
        dir_gap = float("nan")
    gaps = {"u": 1.0 / (resolution.radial - 1),
            "theta": (sector.theta_max - sector.theta_min) / (resolution.args - 1),
            "direction": dir_gap}
    return ConstraintSet(r, xi, lam, U, T, D, gaps, int((~keep).sum()))


def kappa_ratio(sys: DNSystem, r: int, x, xi, lam) -> np.ndarray:
    """``|det(A^(r)_11(x, xi) - lam mask_r)| / |xi|^{N_{r-1}}``."""
    det = np.abs(nested_determinant(sys, x, xi, lam, r))
    power = sys.orders.partial_sums[r - 1]
    if power == 0:
        return det
    rho = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return det / rho ** power


def default_x_samples(sys: DNSystem, principal_only: bool = True) -> np.ndarray:
    """Lattice points (spacing = width) inside each bump's 4-width ball plus one far-field point."""
    bumps = sys.bumps(principal_only)
    n = sys.n
    pts = []
    for b in bumps:
        ticks = np.arange(-4, 5) * b.width
        grid = np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), axis=-1).reshape(-1, n)
        grid = grid[np.linalg.norm(grid, axis=1) <= 4.0 * b.width + 1e-12]
        pts.append(grid + np.asarray(b.center))
    far = np.zeros(n)
    if bumps:
        far[0] = max(abs(b.center[0]) + 40.0 * b.width for b in bumps) + 100.0
    pts.append(far[None, :])
    return np.unique(np.round(np.concatenate(pts), 12), axis=0)


@dataclass(frozen=True)
class Witness:
    x: tuple[float, ...]
    xi: tuple[float, ...]
    lam: complex
    r: int
    ratio: float

    def to_dict(self) -> dict:
        return {"x": list(self.x), "xi": list(self.xi), "lam": [self.lam.real, self.lam.imag],
                "r": self.r, "ratio": self.ratio}


def _chunk_minimum(values, rho, arg, index):
    order = np.lexsort((index, arg, rho, values))
    i = order[0]
    return values[i], rho[i], arg[i], index[i]


def _grid_minimum(sys, r, samples: ConstraintSet, x_samples, n_jobs):
    rho = np.linalg.norm(samples.xi, axis=1)
    arg = np.mod(np.angle(samples.lam), 2.0 * np.pi)
    idx = np.arange(len(samples))

    def part_work(ids):
        best = None
        for xi_pos in ids:
            vals = kappa_ratio(sys, r, x_samples[xi_pos], samples.xi, samples.lam)
            vals = np.where(np.isnan(vals), np.inf, vals)
            cand = _chunk_minimum(vals, rho, arg, idx) + (int(xi_pos),)
            if best is None or cand < best:
                best = cand
        return best

    if n_jobs <= 1:
        return part_work(range(len(x_samples)))
    parts = np.array_split(np.arange(len(x_samples)), min(n_jobs, len(x_samples)))
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        results = [res for res in pool.map(part_work, parts) if res is not None]
    return min(results)


def _tangent_basis(d: np.ndarray) -> np.ndarray:
    n = len(d)
    q, _ = np.linalg.qr(np.column_stack([d, np.eye(n)]))
    return q[:, 1:n].T


def _refine(sys, r, x, d, u, theta, sector, u_max, gaps, rounds=3, max_evals=4000):
    m = sys.orders.group_order(r)

    def f(d, u, theta):
        rho = math.sqrt(max(1.0 - u * u, 0.0))
        val = kappa_ratio(sys, r, x, rho * d, u ** m * np.exp(1j * theta))
        return float(val) if np.isfinite(val) else np.inf

    best = f(d, u, theta)
    evals = 0
    h_u0 = gaps["u"]
    h_t0 = gaps["theta"]
    h_d0 = gaps["direction"] if np.isfinite(gaps["direction"]) else 0.2
    for rnd in range(rounds):
        scale = 4.0 ** -rnd
        h_u, h_t, h_d = h_u0 * scale, h_t0 * scale, h_d0 * scale
        while max(h_u, h_t, h_d) > 1e-14 and evals < max_evals:
            improved = False
            for sgn in (1.0, -1.0):
                cand_u = min(max(u + sgn * h_u, 0.0), u_max)
                val = f(d, cand_u, theta)
                evals += 1
                if val < best:
                    best, u, improved = val, cand_u, True
                if h_t > 0:
                    cand_t = min(max(theta + sgn * h_t, sector.theta_min), sector.theta_max)
                    val = f(d, u, cand_t)
                    evals += 1
                    if val < best:
                        best, theta, improved = val, cand_t, True
                if len(d) > 1:
                    for e in _tangent_basis(d):
                        cand_d = d + sgn * h_d * e
                        cand_d /= np.linalg.norm(cand_d)
                        val = f(cand_d, u, theta)
                        evals += 1
                        if val < best:
                            best, d, improved = val, cand_d, True
            if not improved:
                h_u, h_t, h_d = h_u / 2.0, h_t / 2.0, h_d / 2.0
    return best, d, u, theta


def kappa_estimate(sys: DNSystem, r: int, sector: Sector, x_samples=None,
                   resolution: Resolution = Resolution(), refine: bool = True,
                   xi_floor: float = 1e-3, n_jobs: int = 1) -> tuple[float, Witness]:
    """Sampled minimum of the group-``r`` determinant ratio and its minimizer."""
    if x_samples is None:
        x_samples = default_x_samples(sys, principal_only=True)
    x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float))
    samples = constraint_samples(sys.orders, r, sector, resolution, sys.n, xi_floor)
    value, _, _, i, xpos = _grid_minimum(sys, r, samples, x_samples, n_jobs)
    x = x_samples[xpos]
    m = sys.orders.group_order(r)
    u, theta = float(samples.u[i]), float(samples.theta[i])
    d = sphere_directions(sys.n, resolution.directions)[samples.direction_index[i]]
    if refine:
        u_max = 1.0 if r == 1 else math.sqrt(1.0 - xi_floor ** 2)
        value, d, u, theta = _refine(sys, r, x, d, u, theta, sector, u_max, samples.mesh_gap)
    rho = math.sqrt(max(1.0 - u * u, 0.0))
    xi = rho * np.asarray(d, dtype=float)
    lam = complex(u ** m * np.exp(1j * theta))
    return float(value), Witness(tuple(x.tolist()), tuple(xi.tolist()), lam, r, float(value))


@dataclass
class EllipticityConfig:
    resolution: Resolution = field(default_factory=Resolution)
    kappa_floor: float = 1e-6
    xi_floor: float = 1e-3
    refine: bool = True
    floor_check: bool = True
    x_samples: np.ndarray | None = None
    n_jobs: int = 1
    estimate_constants: bool = True
    lambda_floor: float = 1.0
    lambda_cap: float = 1e8


@dataclass
class LevelResult:
    r: int
    kappa: float
    witness: Witness
    passed: bool
    floor_kappa: float | None = None

    def to_dict(self) -> dict:
        out = {"r": self.r, "kappa_estimate": self.kappa, "passed": self.passed,
               "witness": self.witness.to_dict()}
        if self.floor_kappa is not None:
            out["kappa_at_tenth_floor"] = self.floor_kappa
        return out


@dataclass
class EllipticityReport:
    passed: bool
    parity: dict
    levels: list[LevelResult]
    sector: Sector
    resolution: dict
    C0_estimate: float | None = None
    lambda_dagger_estimate: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "sector": {"theta_min": self.sector.theta_min, "theta_max": self.sector.theta_max},
            "parity": self.parity,
            "levels": [lv.to_dict() for lv in self.levels],
            "C0_estimate": self.C0_estimate,
            "lambda_dagger_estimate": self.lambda_dagger_estimate,
            "resolution": self.resolution,
            "notes": list(self.notes),
            "kind": "sampled upper bounds on the infima",
        }


def check_parameter_ellipticity(sys: DNSystem, sector: Sector,
                                config: EllipticityConfig | None = None) -> EllipticityReport:
    """Parity prefilter, then a kappa estimate for every group; optionally C0 and lambda-dagger."""
    config = config or EllipticityConfig()
    parity = parity_check(sys.orders, sys.n)
    res_meta = asdict(config.resolution) | {"kappa_floor": config.kappa_floor, "xi_floor": config.xi_floor}
    parity_dict = {"passed": parity.passed, "offending_group": parity.offending_group,
                   "details": list(parity.details)}
    if not parity.passed:
        return EllipticityReport(False, parity_dict, [], sector, res_meta,
                                 notes=[f"parity prefilter failed at r={parity.offending_group}"])
    levels = []
    for r in range(1, sys.orders.d + 1):
        kappa, witness = kappa_estimate(sys, r, sector, config.x_samples, config.resolution,
                                        config.refine, config.xi_floor, config.n_jobs)
        floor_kappa = None
        if r > 1 and config.floor_check:
            floor_kappa, _ = kappa_estimate(sys, r, sector, config.x_samples, config.resolution,
                                            config.refine, config.xi_floor / 10.0, config.n_jobs)
        levels.append(LevelResult(r, kappa, witness, kappa >= config.kappa_floor, floor_kappa))
    passed = all(lv.passed for lv in levels)
    report = EllipticityReport(passed, parity_dict, levels, sector, res_meta)
    for lv in levels:
        if lv.floor_kappa is not None and lv.kappa > 0 and abs(lv.floor_kappa - lv.kappa) > 0.1 * lv.kappa:
            report.notes.append(f"r={lv.r}: kappa moved by more than 10% when the xi floor was reduced")
    if passed and config.estimate_constants:
        c0 = full_determinant_bound(sys, sector, config.lambda_floor)
        report.C0_estimate = c0.value
        try:
            report.lambda_dagger_estimate = perturbation_threshold(sys, sector, c0.value, cap=config.lambda_cap).radius
        except ThresholdNotReached as exc:
            report.notes.append(str(exc))
    return report


# ---------------------------------------------------------------------------
# global constants


@dataclass(frozen=True)
class BoundResolution:
    """Sampling for the full-determinant bound: ``|lam|`` spans ``decades`` from the floor,
    ``|xi|`` spans four decades either side of every scale ``|lam|^{1/m_j}``."""

    directions: int = 8
    radii: int = 33
    magnitudes: int = 9
    args: int = 25
    decades: float = 4.0


def _bound_samples(sys: DNSystem, sector: Sector, lam_low: float, res: BoundResolution):
    mags = lam_low * np.logspace(0.0, res.decades, res.magnitudes)
    thetas = sector.angles(res.args)
    lam = (mags[:, None] * np.exp(1j * thetas)[None, :]).ravel()
    dirs = sphere_directions(sys.n, res.directions)
    m = np.asarray(sys.orders.m, dtype=float)
    xs, ls = [], []
    for lv in lam:
        scales = np.abs(lv) ** (1.0 / m)
        radii = np.logspace(np.log10(scales.min()) - 2.0, np.log10(scales.max()) + 2.0, res.radii)
        xi = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, sys.n)
        xi = np.vstack([np.zeros((1, sys.n)), xi])
        xs.append(xi)
        ls.append(np.full(len(xi), lv))
    return np.vstack(xs), np.concatenate(ls)


def _weight_product(orders: DNOrders, xi, lam) -> np.ndarray:
    out = np.ones(len(lam))
    for mj in orders.m:
        out = out * anisotropic_weight(xi, lam, mj) ** mj
    return out


@dataclass(frozen=True)
class BoundEstimate:
    value: float
    x: tuple[float, ...]
    xi: tuple[float, ...]
    lam: complex


def full_determinant_bound(sys: DNSystem, sector: Sector, lambda_floor: float = 1.0,
                           resolution: BoundResolution = BoundResolution(), x_samples=None,
                           polish: bool = True) -> BoundEstimate:
    """Sampled ``min |det(A0(x, xi) - lam I)| / prod_j <xi, lam>_j^{m_j}`` over ``|lam| >= lambda_floor``."""
    if x_samples is None:
        x_samples = default_x_samples(sys, principal_only=True)
    xi, lam = _bound_samples(sys, sector, lambda_floor, resolution)
    weight = _weight_product(sys.orders, xi, lam)
    eye = np.eye(sys.N)
    best = (np.inf, None, None, None)
    for x in np.atleast_2d(x_samples):
        det = np.abs(np.linalg.det(sys.principal_symbol(x, xi) - lam[:, None, None] * eye))
        ratio = det / weight
        i = int(np.argmin(ratio))
        if ratio[i] < best[0]:
            best = (float(ratio[i]), tuple(np.asarray(x).tolist()), tuple(xi[i].tolist()), complex(lam[i]))
    if polish and np.isfinite(best[0]):
        best = _polish_bound(sys, sector, lambda_floor, best)
    return BoundEstimate(*best)


def _polish_bound(sys: DNSystem, sector: Sector, lambda_floor: float, best):
    """Local bounded descent (L-BFGS-B, then Nelder-Mead restarts) in (xi, arg lam, log |lam|) from the best sample."""
    value, x, xi0, lam0 = best
    x = np.asarray(x, dtype=float)
    eye = np.eye(sys.N)
    lo_log = math.log(lambda_floor)

    def ratio(v):
        xi = v[None, :sys.n]
        lam = np.exp(v[sys.n + 1] + 1j * v[sys.n])
        det = abs(np.linalg.det(sys.principal_symbol(x, xi)[0] - lam * eye))
        return det / _weight_product(sys.orders, xi, np.array([lam]))[0]

    start = np.concatenate([xi0, [sector.theta_min + (np.angle(lam0) - sector.theta_min) % (2 * np.pi),
                                  math.log(abs(lam0))]])
    start[sys.n] = min(start[sys.n], sector.theta_max)
    bounds = [(None, None)] * sys.n + [(sector.theta_min, sector.theta_max), (lo_log, lo_log + 8.0)]
    res = minimize(ratio, start, method="L-BFGS-B", bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-12})
    for _ in range(3):
        nxt = minimize(ratio, res.x, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        if nxt.fun >= res.fun - 1e-15:
            break
        res = nxt
    if res.fun < value:
        v = res.x
        return (float(res.fun), tuple(x.tolist()), tuple(v[:sys.n].tolist()),
                complex(np.exp(v[sys.n + 1] + 1j * v[sys.n])))
    return best


@dataclass(frozen=True)
class ThresholdEstimate:
    radius: float
    worst_ratio: float
    history: tuple[tuple[float, float], ...]


def _level_samples(sys: DNSystem, sector: Sector, mag: float, res: BoundResolution):
    thetas = sector.angles(res.args)
    lam = mag * np.exp(1j * thetas)
    dirs = sphere_directions(sys.n, res.directions)
    m = np.asarray(sys.orders.m, dtype=float)
    scales = mag ** (1.0 / m)
    radii = np.logspace(np.log10(scales.min()) - 2.0, np.log10(scales.max()) + 2.0, res.radii)
    xi = np.vstack([np.zeros((1, sys.n)), (radii[:, None, None] * dirs[None, :, :]).reshape(-1, sys.n)])
    xi_all = np.tile(xi, (len(lam), 1))
    lam_all = np.repeat(lam, len(xi))
    return xi_all, lam_all


def _level_worst(sys, sector, mag, res, x_samples, chunk=64) -> float:
    xi, lam = _level_samples(sys, sector, mag, res)
    weight = _weight_product(sys.orders, xi, lam)
    shifted = lam[:, None, None] * np.eye(sys.N)
    worst = 0.0
    for lo in range(0, len(x_samples), chunk):
        xs = x_samples[lo:lo + chunk]
        full = np.linalg.det(symbol_batch(sys, xs, xi) - shifted)
        top = np.linalg.det(symbol_batch(sys, xs, xi, principal_only=True) - shifted)
        worst = max(worst, float(np.max(np.abs(full - top) / weight)))
    return worst


def perturbation_threshold(sys: DNSystem, sector: Sector, C0: float,
                           resolution: BoundResolution = BoundResolution(radii=17, args=13, decades=3.0),
                           start: float = 1.0, cap: float = 1e8, x_samples=None) -> ThresholdEstimate:
    """Smallest ``R = start * 2^i`` such that on the samples with ``R <= |lam| <= R 10^decades``

        |det(A - lam) - det(A0 - lam)| <= (C0 / 2) prod_j <xi, lam>_j^{m_j}.

    ``|lam|`` is sampled on half-octave levels; each level is evaluated once
    and shared between candidate radii.
    """
    if C0 <= 0:
        raise ValueError(f"C0 must be positive, got {C0}")
    if x_samples is None:
        x_samples = default_x_samples(sys, principal_only=False)
    x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float))
    span = int(np.ceil(2.0 * resolution.decades * np.log2(10.0)))
    cache: dict[int, float] = {}

    def level(i):
        if i not in cache:
            cache[i] = _level_worst(sys, sector, start * 2.0 ** (i / 2.0), resolution, x_samples)
        return cache[i]

    history = []
    i = 0
    while True:
        R = start * 2.0 ** (i // 2)
        worst = 0.0
        for k in range(i, i + span + 1):
            worst = max(worst, level(k))
            if worst > C0 / 2.0:
                break
        history.append((R, worst))
        if worst <= C0 / 2.0:
            return ThresholdEstimate(R, worst, tuple(history))
        i += 2
        if start * 2.0 ** (i // 2) > cap:
            raise ThresholdNotReached(start * 2.0 ** (i // 2), worst)
