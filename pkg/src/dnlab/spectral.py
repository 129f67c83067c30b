"""Matrix realizations of DN systems on the torus and spectral probes.

Basis ordering
--------------
A vector ``v`` of length ``N * M^n`` holds Fourier coefficients with
``v[f * N + comp] = u_hat[comp][f]`` where ``f`` is the row-major flat index
over FFT-ordered frequencies.  The basis is orthonormal for the
unit-measure L2 pairing, so the conjugate transpose of a matrix is the
matrix of the adjoint.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .fourier import GridField, GridSpec, OperatorApplier
from .symbols import DNSystem

MATRIX_CAP = 8192
BASIS_ORDER = "frequency-major: index = f * N + component, f row-major over FFT-ordered frequencies"


class SizeCapExceeded(ValueError):
    pass


class EigensolverError(RuntimeError):
    pass


@dataclass
class AssembledOperator:
    grid: GridSpec
    matrix: np.ndarray
    system: DNSystem
    basis: str = BASIS_ORDER
    provenance: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_vector(self, u: GridField) -> np.ndarray:
        return np.moveaxis(u.hat().reshape(u.N, -1), 0, 1).reshape(-1)

    def from_vector(self, v: np.ndarray) -> GridField:
        N = self.system.N
        coeffs = np.moveaxis(np.asarray(v).reshape(-1, N), 1, 0).reshape((N,) + self.grid.shape)
        return GridField.from_hat(self.grid, coeffs)

    def apply(self, u: GridField) -> GridField:
        return self.from_vector(self.matrix @ self.to_vector(u))


def assemble(sys: DNSystem, grid: GridSpec, cap: int = MATRIX_CAP, dealias: bool = True,
             chunk: int = 256, n_jobs: int = 1) -> AssembledOperator:
    """Dense matrix of ``A(x, D)`` in the Fourier basis; columns are images of basis modes."""
    N = sys.N
    F = grid.size
    dim = N * F
    if dim > cap:
        raise SizeCapExceeded(f"matrix dimension {dim} exceeds the cap {cap}")
    applier = OperatorApplier(sys, grid, dealias=dealias)
    A = np.empty((dim, dim), dtype=complex)

    def block(lo):
        idx = np.arange(lo, min(lo + chunk, dim))
        uh = np.zeros((len(idx), N, F), dtype=complex)
        uh[np.arange(len(idx)), idx % N, idx // N] = 1.0
        fh = applier.apply_hat(uh.reshape((len(idx), N) + grid.shape))
        A[:, idx] = np.moveaxis(fh.reshape(len(idx), N, F), 1, 2).reshape(len(idx), dim).T

    starts = range(0, dim, chunk)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(block, starts))
    else:
        for lo in starts:
            block(lo)
    prov = {"model": sys.metadata.get("model"), "n": sys.n, "N": N,
            "M": grid.M, "L": grid.L, "padded_size": applier.K}
    return AssembledOperator(grid, A, sys, BASIS_ORDER, prov)


# ---------------------------------------------------------------------------
# spectra


def halfline_distance(z, start: float) -> np.ndarray:
    """Distance from ``z`` to the half-line ``[start, inf)``."""
    z = np.asarray(z, dtype=complex)
    return np.where(z.real >= start, np.abs(z.imag), np.abs(z - start))


def sort_eigenvalues(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return z[np.lexsort((z.imag, z.real))]


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    grid: GridSpec
    halfline_start: float
    distances: np.ndarray
    stable: np.ndarray | None = None
    classes: list[str] | None = None
    probes: list = field(default_factory=list)

    def rows(self):
        classes = self.classes or ["unclassified"] * len(self.eigenvalues)
        for z, cls, d in zip(self.eigenvalues, classes, self.distances):
            yield float(z.real), float(z.imag), cls, float(d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "class", "distance_to_halfline"])
        for re, im, cls, d in self.rows():
            w.writerow([f"{re:.17g}", f"{im:.17g}", cls, f"{d:.17g}"])
        return buf.getvalue()


def spectrum(op: AssembledOperator, halfline_start: float | None = None) -> SpectrumReport:
    """All eigenvalues of the assembled matrix, sorted by (re, im)."""
    if halfline_start is None:
        halfline_start = float(op.system.metadata.get("halfline_start", 0.0))
    try:
        z = sla.eigvals(op.matrix, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"dense eigensolve failed on a {op.dim}x{op.dim} matrix: {exc}") from exc
    if not np.all(np.isfinite(z)):
        raise EigensolverError("eigensolver returned non-finite eigenvalues")
    z = sort_eigenvalues(z)
    return SpectrumReport(z, op.grid, halfline_start, halfline_distance(z, halfline_start))


@dataclass
class GapStats:
    """The distinct nearly-real eigenvalues strictly inside ``(lo, hi)`` cut the
    window into ``pieces`` intervals; ``mean_gap = (hi - lo) / pieces``."""

    pieces: int
    mean_gap: float
    max_gap: float

    def shrink_factor(self, finer: "GapStats") -> float:
        """``mean_gap / finer.mean_gap`` computed from the integer piece counts."""
        return finer.pieces / self.pieces


def gap_statistics(z, lo: float, hi: float, imag_tol: float = 1e-8, merge_tol: float = 1e-8) -> GapStats:
    """Gap statistics of the spectrum inside the window ``[lo, hi]``."""
    z = np.asarray(z, dtype=complex)
    keep = (np.abs(z.imag) <= imag_tol * (1 + np.abs(z))) & (z.real > lo + merge_tol) & (z.real < hi - merge_tol)
    x = np.sort(z.real[keep])
    distinct = []
    for v in x:
        if not distinct or v - distinct[-1] > merge_tol * (1 + abs(v)):
            distinct.append(v)
    edges = np.concatenate([[lo], distinct, [hi]])
    pieces = len(edges) - 1
    return GapStats(pieces, float((hi - lo) / pieces), float(np.diff(edges).max()))


ISOLATED = "isolated-candidate"
ESSENTIAL = "essential-approximant"
UNSTABLE = "unstable"


@dataclass
class RefinementResult:
    coarse: SpectrumReport
    fine: SpectrumReport
    movement: np.ndarray
    tolerance: np.ndarray

    @property
    def isolated(self) -> np.ndarray:
        return np.array([c == ISOLATED for c in self.coarse.classes])

    @property
    def isolated_count(self) -> int:
        return int(self.isolated.sum())

    def counts(self) -> dict:
        out = {ISOLATED: 0, ESSENTIAL: 0, UNSTABLE: 0}
        for c in self.coarse.classes:
            out[c] += 1
        return out


def classify(coarse: SpectrumReport, fine: SpectrumReport, tol_rel: float = 1e-6) -> RefinementResult:
    """Mark each coarse eigenvalue stable if some fine eigenvalue lies within
    ``tol_rel * (1 + |z|)``.  Stable eigenvalues farther than ten tolerances
    from the half-line are isolated candidates; eigenvalues within ten
    tolerances of the half-line are essential-spectrum approximants; the
    rest are unstable."""
    z = coarse.eigenvalues
    w = fine.eigenvalues
    if len(w):
        # blocked to bound memory
        move = np.empty(len(z))
        for lo in range(0, len(z), 512):
            blk = z[lo:lo + 512]
            move[lo:lo + 512] = np.min(np.abs(blk[:, None] - w[None, :]), axis=1)
    else:
        move = np.full(len(z), np.inf)
    with np.errstate(invalid="ignore"):
        tol = tol_rel * (1.0 + np.abs(z))
        stable = (move < tol) | np.isinf(tol)
        near = coarse.distances <= 10.0 * tol
    classes = []
    for s, nr in zip(stable, near):
        if nr:
            classes.append(ESSENTIAL)
        elif s:
            classes.append(ISOLATED)
        else:
            classes.append(UNSTABLE)
    coarse.stable = stable
    coarse.classes = classes
    return RefinementResult(coarse, fine, move, tol)


def compare_refinement(sys: DNSystem, grid: GridSpec, grid_fine: GridSpec | None = None,
                       tol_rel: float = 1e-6, halfline_start: float | None = None,
                       cap: int = MATRIX_CAP) -> RefinementResult:
    """Classify the spectrum on ``grid`` against the spectrum on ``grid_fine``
    (default: doubled period and point count)."""
    grid_fine = grid_fine or grid.doubled()
    coarse = spectrum(assemble(sys, grid, cap=cap), halfline_start)
    fine = spectrum(assemble(sys, grid_fine, cap=cap), halfline_start)
    return classify(coarse, fine, tol_rel)


# ---------------------------------------------------------------------------
# probes


@dataclass
class ResolventProbe:
    lam: complex
    sigma_min: float
    floor: float
    resolvent_evidence: bool
    ratio: float | None
    ratio_mode: str | None
    note: str = ""

    def to_dict(self) -> dict:
        return {"lambda": [self.lam.real, self.lam.imag], "sigma_min": self.sigma_min,
                "floor": self.floor, "resolvent_evidence": self.resolvent_evidence,
                "apriori_ratio": self.ratio, "ratio_mode": self.ratio_mode, "note": self.note}


def _opnorm(op: AssembledOperator) -> float:
    if "opnorm" not in op.provenance:
        op.provenance["opnorm"] = float(sla.svdvals(op.matrix)[0]) if op.dim else 0.0
    return op.provenance["opnorm"]


def resolvent_probe(op: AssembledOperator, lambdas, rel_floor: float = 1e-8, with_ratio: bool = True,
                    samples: int = 64, seed: int = 42, ratio_mode: str | None = None) -> list[ResolventProbe]:
    """Smallest singular value of ``A - lam`` and the weighted resolvent ratio for each ``lam``.

    ``lam`` counts as resolvent-set evidence when the smallest singular value
    exceeds ``rel_floor * max(1, ||A||_2)``.  ``ratio_mode`` defaults to
    ``"exact"`` for constant coefficients and ``"sampled"`` otherwise.
    """
    from .norms import apriori_ratio

    floor = rel_floor * max(_opnorm(op), 1.0)
    eye = np.eye(op.dim)
    out = []
    for lam in np.atleast_1d(np.asarray(lambdas, dtype=complex)):
        lam = complex(lam)
        smin = float(sla.svdvals(op.matrix - lam * eye)[-1])
        evidence = smin > floor
        ratio = mode = None
        note = "" if evidence else "interior spectrum hit"
        if with_ratio and evidence:
            mode = ratio_mode or ("exact" if op.system.is_constant else "sampled")
            try:
                ratio = apriori_ratio(op.system, lam, op.grid, mode, samples=samples, seed=seed).ratio
            except (ArithmeticError, ValueError) as exc:
                note = f"ratio unavailable: {exc}"
        out.append(ResolventProbe(lam, smin, floor, evidence, ratio, mode, note))
    return out


@dataclass
class IndexProbe:
    lam: complex
    dim_ker: int
    dim_coker: int
    tolerance: float
    ambiguous: bool
    smallest: list[float]

    @property
    def index(self) -> int:
        return self.dim_ker - self.dim_coker

    def to_dict(self) -> dict:
        return {"lambda": [self.lam.real, self.lam.imag], "dim_ker": self.dim_ker,
                "dim_coker": self.dim_coker, "index": self.index, "tolerance": self.tolerance,
                "ambiguous": self.ambiguous, "smallest_singular_values": self.smallest}


def index_probe(op: AssembledOperator, lam: complex, tol: float | None = None,
                rel_tol: float = 1e-8) -> IndexProbe:
    """Kernel and cokernel dimensions of ``A - lam`` counted by singular values below ``tol``.

    ``tol`` defaults to ``rel_tol * ||A||_2``.  A singular value within a
    factor 10 of ``tol`` sets the ambiguity flag.
    """
    lam = complex(lam)
    if tol is None:
        tol = rel_tol * max(_opnorm(op), 1.0)
    shifted = op.matrix - lam * np.eye(op.dim)
    sv = sla.svdvals(shifted)
    sv_adj = sla.svdvals(shifted.conj().T)
    ker = int(np.sum(sv < tol))
    coker = int(np.sum(sv_adj < tol))
    ambiguous = bool(np.any((sv > tol / 10.0) & (sv < tol * 10.0)))
    smallest = [float(v) for v in np.sort(sv)[:min(8, len(sv))]]
    return IndexProbe(lam, ker, coker, float(tol), ambiguous, smallest)
