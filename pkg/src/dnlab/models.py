"""Ready-made systems.

The main one is the coupled example ``diag(Delta^2, -Delta) - c I + B(x, D)``
with orders ``s = (0, 0)``, ``t = (4, 2)``, where ``B`` is a compactly
concentrated perturbation of strictly lower order in every entry
(order <= 3 in (1,1), <= 1 elsewhere).
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .symbols import Bump, Coefficient, DNSystem, Term, validate_orders

PERTURBATION_STRENGTHS = {"none": 0.0, "weak": 0.1, "strong": 1.0}


def _unit(n: int, i: int, k: int = 1) -> tuple[int, ...]:
    alpha = [0] * n
    alpha[i] = k
    return tuple(alpha)


def bilaplacian_terms(n: int) -> list[Term]:
    """Terms of ``Delta^2`` whose symbol is ``|xi|^4``."""
    terms = []
    for i in range(n):
        terms.append(Term(_unit(n, i, 4), Coefficient(1.0)))
    for i, j in itertools.combinations(range(n), 2):
        alpha = [0] * n
        alpha[i] = alpha[j] = 2
        terms.append(Term(tuple(alpha), Coefficient(2.0)))
    return terms


def laplacian_terms(n: int) -> list[Term]:
    """Terms of ``-Delta`` whose symbol is ``|xi|^2``."""
    return [Term(_unit(n, i, 2), Coefficient(1.0)) for i in range(n)]


def _bump(amplitude: float, n: int, center: float, width: float) -> Coefficient:
    return Coefficient(0.0, (Bump(amplitude, (center,) * n, width),))


def coupled_system(n: int = 1, c: float = 1.0, strength: float | str = 0.0,
                   center: float = math.pi) -> DNSystem:
    """``diag(Delta^2, -Delta) - c I_2`` plus a bump perturbation scaled by ``strength``.

    ``strength`` is a number or one of ``"none"``, ``"weak"``, ``"strong"``.
    The perturbation consists of a negative well in each diagonal entry,
    first-order couplings and a third-order term in the (1,1) entry; with
    ``strength == 0`` no perturbation terms are emitted at all.
    """
    if isinstance(strength, str):
        strength = PERTURBATION_STRENGTHS[strength]
    strength = float(strength)
    orders = validate_orders((0, 0), (4, 2))
    zero = (0,) * n
    e1 = _unit(n, 0)
    a11 = bilaplacian_terms(n) + [Term(zero, Coefficient(-c))]
    a12: list[Term] = []
    a21: list[Term] = []
    a22 = laplacian_terms(n) + [Term(zero, Coefficient(-c))]
    if strength != 0.0:
        a11[-1] = Term(zero, Coefficient(-c, _bump(-40.0 * strength, n, center, 0.5).bumps))
        a11.append(Term(_unit(n, 0, 3), _bump(0.2 * strength, n, center, 0.7)))
        a12.append(Term(e1, _bump(0.5 * strength, n, center, 0.6)))
        a21.append(Term(zero, _bump(0.5 * strength, n, center, 0.6)))
        a22[-1] = Term(zero, Coefficient(-c, _bump(-30.0 * strength, n, center, 0.5).bumps))
        a22.append(Term(e1, _bump(0.3 * strength, n, center, 0.6)))
    meta = {"model": "coupled", "c": float(c), "strength": strength, "halfline_start": -float(c)}
    return DNSystem(n, orders, [[a11, a12], [a21, a22]], meta)


def scalar_shift(sys: DNSystem, shift: complex) -> DNSystem:
    """Add ``shift`` to the order-zero constant of every diagonal entry."""
    N, n = sys.N, sys.n
    zero = (0,) * n
    cells = [[list(cell) for cell in row] for row in sys.entries]
    for j in range(N):
        for i, term in enumerate(cells[j][j]):
            if term.alpha == zero:
                cells[j][j][i] = Term(zero, term.coeff + Coefficient(shift))
                break
        else:
            cells[j][j].append(Term(zero, Coefficient(shift)))
    return DNSystem(n, sys.orders, cells, dict(sys.metadata))


def random_system(rng: np.random.Generator, n: int, s, t, n_bumps: int = 1,
                  lower_order: bool = True) -> DNSystem:
    """Random DN system with the given orders (used for property checks)."""
    orders = validate_orders(s, t)
    N = orders.N
    cells = [[[] for _ in range(N)] for _ in range(N)]
    for j, k in itertools.product(range(N), repeat=2):
        cap = orders.s[j] + orders.t[k]
        for order in range(0 if lower_order else cap, cap + 1):
            for alpha in itertools.product(range(order + 1), repeat=n):
                if sum(alpha) != order:
                    continue
                bumps = tuple(
                    Bump(complex(*rng.normal(size=2)) * 0.5, tuple(rng.uniform(1.0, 5.0, size=n)),
                         rng.uniform(0.4, 1.0))
                    for _ in range(n_bumps))
                const = complex(*rng.normal(size=2))
                cells[j][k].append(Term(alpha, Coefficient(const, bumps)))
    return DNSystem(n, orders, cells, {"model": "random"})
