"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line with its runtime (visible with
``pytest -v``).  Runtime limits are asserted as part of the criterion.
"""
import json
import math
import os
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from dnlab.ellipticity import EllipticityConfig, check_parameter_ellipticity, kappa_ratio
from dnlab.example import DEFAULT_LADDERS
from dnlab.fourier import GridField, GridSpec, apply_operator, frozen_resolvent_apply, symbol_inverse_bounds
from dnlab.models import coupled_system, random_system
from dnlab.norms import apriori_ratio
from dnlab.spectral import assemble, classify, gap_statistics, index_probe, spectrum
from dnlab.specfile import load_spec
from dnlab.symbols import Sector, formal_adjoint, nested_determinant

from conftest import GOLDEN, fixture_path
from oracles import coupled_apriori, coupled_eigenvalues, coupled_kappa

SECTOR = Sector.from_epsilon(math.pi / 6)


@contextmanager
def criterion(capsys, number, title, limit):
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield
        elapsed = time.perf_counter() - start
        assert elapsed < limit, f"runtime {elapsed:.1f} s exceeds {limit} s"
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        with capsys.disabled():
            print(f"\n[{status}] criterion {number}: {title} ({elapsed:.2f} s, limit {limit} s)")


def test_criterion_1_ellipticity(capsys):
    with criterion(capsys, 1, "parameter-ellipticity of the coupled example, kappa vs brute force", 30):
        for n in (1, 2):
            sys_ = load_spec(fixture_path(n, "strong")).system
            rep = check_parameter_ellipticity(sys_, SECTOR)
            assert rep.passed
            for lv in rep.levels:
                ref = coupled_kappa(lv.r, SECTOR.theta_min, SECTOR.theta_max)
                assert lv.kappa == pytest.approx(ref, rel=0.05)
            wide = check_parameter_ellipticity(sys_, Sector(0.0, 2 * math.pi),
                                               EllipticityConfig(estimate_constants=False))
            assert not wide.passed
            lv = wide.levels[0]
            w = lv.witness
            ratio = float(kappa_ratio(sys_, lv.r, np.array(w.x), np.array(w.xi), w.lam))
            assert ratio <= 1e-10


def test_criterion_2_quasi_homogeneity(capsys):
    with criterion(capsys, 2, "quasi-homogeneity of nested determinants, 1000 samples", 5):
        rng = np.random.default_rng(2024)
        systems = [random_system(rng, 2, (1, 1, 0), (3, 1, 1)), random_system(rng, 1, (2, 0), (2, 1)),
                   load_spec(fixture_path(2, "strong")).system]
        worst = 0.0
        for i in range(1000):
            sys_ = systems[i % len(systems)]
            o = sys_.orders
            r = int(rng.integers(1, o.d + 1))
            x = rng.uniform(0, 2 * math.pi, size=sys_.n)
            xi = rng.normal(size=sys_.n)
            lam = complex(*rng.normal(size=2))
            tau = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
            m = o.group_order(r)
            lhs = nested_determinant(sys_, x, tau * xi, tau ** m * lam, r)
            rhs = tau ** o.partial_sums[r] * nested_determinant(sys_, x, xi, lam, r)
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
        assert worst <= 1e-12


def test_criterion_3_frozen_round_trip(capsys):
    lams = [10j, -100.0, 3 * np.exp(2j * math.pi / 3), 50 * np.exp(1.25j * math.pi), 1e3 * np.exp(1.7j * math.pi)]
    with criterion(capsys, 3, "frozen resolvent round trips, 20 fields x 5 lambdas", 30):
        rng = np.random.default_rng(3)
        for n, M in ((1, 64), (2, 32)):
            sys_ = load_spec(fixture_path(n, "strong")).system
            x0 = np.full(n, math.pi)
            frozen = sys_.frozen_principal(x0)
            g = GridSpec(n, 2 * math.pi, M)
            for _ in range(20):
                f = GridField.random_bandlimited(g, 2, rng)
                for lam in lams:
                    u = frozen_resolvent_apply(sys_, x0, lam, f)
                    back = apply_operator(frozen, lam, u)
                    assert np.max(np.abs(back.values - f.values)) <= 1e-10 * np.max(np.abs(f.values))
                    again = frozen_resolvent_apply(sys_, x0, lam, apply_operator(frozen, lam, f))
                    assert np.max(np.abs(again.values - f.values)) <= 1e-10 * np.max(np.abs(f.values))


def test_criterion_4_mikhlin_bounds(capsys):
    with criterion(capsys, 4, "symbol-inverse bounds uniform over |lambda| = 10, 100, 1000", 60):
        rng = np.random.default_rng(4)
        for n in (1, 2):
            sys_ = load_spec(fixture_path(n, "strong")).system
            radii = np.logspace(-3, 3, 400)
            xi = rng.normal(size=(400, n))
            xi = xi / np.linalg.norm(xi, axis=1, keepdims=True) * radii[:, None]
            tables = [symbol_inverse_bounds(sys_, np.full(n, math.pi), [-R], xi).ratios[0]
                      for R in (10.0, 100.0, 1000.0)]
            for a, b in zip(tables, tables[1:]):
                nz = np.maximum(a, b) > 1e-12
                assert np.all(np.maximum(a, b)[nz] / np.minimum(a, b)[nz] < 2.0)


def test_criterion_5_apriori_uniformity(capsys):
    with criterion(capsys, 5, "exact weighted resolvent ratio, lambda = -10 ... -1e4", 60):
        g = GridSpec(1, 2 * math.pi, 64)
        sys_ = load_spec(fixture_path(1, "none")).system
        ratios = []
        for R in (10.0, 100.0, 1e3, 1e4):
            res = apriori_ratio(sys_, -R, g, mode="exact")
            assert res.ratio == pytest.approx(coupled_apriori(-R, g.wavenumbers, g.L), rel=1e-10)
            ratios.append(res.ratio)
        assert max(ratios) / min(ratios) < 2.0


def test_criterion_6_spectrum_ground_truth(capsys):
    with criterion(capsys, 6, "unperturbed spectrum, multiplicity and index at 0", 30):
        sys_ = load_spec(fixture_path(1, "none")).system
        for M in (8, 16):
            g = GridSpec(1, 2 * math.pi, M)
            op = assemble(sys_, g)
            z = spectrum(op).eigenvalues
            ref = coupled_eigenvalues(M, g.L, 1.0)
            np.testing.assert_allclose(z.real, ref, rtol=1e-8, atol=1e-8)
            assert np.max(np.abs(z.imag)) <= 1e-8
            analytic = int(np.sum(ref == 0.0))
            assert analytic == 4
            p = index_probe(op, 0.0)
            assert (p.dim_ker, p.dim_coker, p.index) == (analytic, analytic, 0)


def test_criterion_7_essential_spectrum_probe(capsys):
    with criterion(capsys, 7, "gap shrinkage on [-c, 10] and stable isolated count", 120):
        ladder = DEFAULT_LADDERS[1]
        base = [spectrum(assemble(coupled_system(1, 1.0), GridSpec(1, L, M))) for M, L in ladder]
        gaps = [gap_statistics(rep.eigenvalues, -1.0, 10.0) for rep in base]
        for a, b in zip(gaps, gaps[1:]):
            assert a.shrink_factor(b) >= 2.0
        pert = [spectrum(assemble(coupled_system(1, 1.0, "strong"), GridSpec(1, L, M))) for M, L in ladder]
        counts = [classify(pert[i], pert[i + 1]).isolated_count for i in range(len(pert) - 1)]
        assert counts[0] == counts[1] > 0


def test_criterion_8_adjoint_consistency(capsys):
    with criterion(capsys, 8, "formal adjoint matrix equals conjugate transpose", 30):
        for n, M in ((1, 64), (2, 16)):
            sys_ = load_spec(fixture_path(n, "strong")).system
            g = GridSpec(n, 2 * math.pi, M)
            A = assemble(sys_, g).matrix
            B = assemble(formal_adjoint(sys_), g).matrix
            assert np.max(np.abs(B - A.conj().T)) <= 1e-10


def _close(a, b):
    if isinstance(a, dict):
        return isinstance(b, dict) and list(a) == list(b) and all(_close(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return isinstance(b, list) and len(a) == len(b) and all(_close(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return abs(a - b) <= 1e-7 * abs(a) + 1e-9
    return a == b


def test_criterion_9_determinism(capsys, tmp_path):
    with criterion(capsys, 9, "reproduce-example twice is byte identical and matches golden files", 300):
        outs = []
        for name in ("first", "second"):
            r = subprocess.run([sys.executable, "-m", "dnlab.cli", "reproduce-example", "--out", str(tmp_path / name)],
                               capture_output=True, text=True, timeout=300)
            assert r.returncode == 0, r.stderr
            outs.append(tmp_path / name)
        names = sorted(os.listdir(outs[0]))
        assert names == sorted(os.listdir(outs[1])) == sorted(os.listdir(GOLDEN))
        for name in names:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        assert _close(json.loads((GOLDEN / "report.json").read_text()), json.loads((outs[0] / "report.json").read_text()))
        for name in names:
            if name.endswith(".csv"):
                g = [line.split(",") for line in (GOLDEN / name).read_text().splitlines()[1:]]
                o = [line.split(",") for line in (outs[0] / name).read_text().splitlines()[1:]]
                assert len(g) == len(o)
                for gr, orow in zip(g, o):
                    assert gr[2] == orow[2]
                    assert all(_close(float(x), float(y)) for x, y in zip(gr[:2] + gr[3:], orow[:2] + orow[3:]))
