"""Independent reference computations used by the tests.

Nothing here calls into dnlab's symbol or solver code; formulas are
written out by hand for the coupled example diag(Delta^2, -Delta) - c.
"""
import numpy as np


def coupled_kappa(r, theta_min, theta_max, n_rho=4001, n_theta=4001):
    """Brute-force kappa_r of the principal part diag(|xi|^4, |xi|^2) on the
    constraint set <xi, lam>_{k_r} = 1 (isotropic, so only |xi| matters)."""
    theta = np.linspace(theta_min, theta_max, n_theta)[None, :]
    if r == 1:
        # |xi|^2 + |lam|^(1/2) = 1
        rho = np.linspace(0.0, 1.0, n_rho)[:, None]
        lam = (1.0 - rho ** 2) ** 2 * np.exp(1j * theta)
        return float(np.min(np.abs(rho ** 4 - lam)))
    # |xi|^2 + |lam| = 1, det / |xi|^4 = | |xi|^2 - lam |
    rho = np.linspace(1e-3, 1.0, n_rho)[:, None]
    lam = (1.0 - rho ** 2) * np.exp(1j * theta)
    return float(np.min(np.abs(rho ** 2 - lam)))


def coupled_threshold_ratio(c, R, theta, decades=3.0, n_mag=400, n_rho=2000):
    """max over |lam| in [R, R 10^decades], sector angles and |xi| of
    |det(A - lam) - det(A0 - lam)| / (<xi,lam>_1^4 <xi,lam>_2^2) for c * I shift."""
    mags = R * np.logspace(0.0, decades, n_mag)
    lam = (mags[:, None] * np.exp(1j * np.asarray(theta))[None, :]).ravel()[:, None]
    s = np.abs(lam) ** 0.5
    rho = np.concatenate([[0.0], np.logspace(-3, 3, n_rho)])[None, :] * np.sqrt(s)
    a, b = rho ** 4, rho ** 2
    diff = (a - c - lam) * (b - c - lam) - (a - lam) * (b - lam)
    w1 = (rho ** 2 + np.abs(lam) ** 0.5) ** 2
    w2 = rho ** 2 + np.abs(lam)
    return float(np.max(np.abs(diff) / (w1 * w2)))


def coupled_apriori(lam, wavenumbers, L, c=1.0):
    """Exact sup of |||u|||_(t) / |||(A - lam) u|||_(-s) for the constant
    coupled system on the 1D torus, p = 2.

    The optimum concentrates on one component; for a diagonal system the
    objective sqrt(<a, mu>) + c_l sqrt(<b, mu>) over probability vectors mu
    is maximized on a segment between two frequencies, where the optimal
    mixing weight has a closed form.
    """
    k = 2 * np.pi / L * np.asarray(wavenumbers, dtype=float)
    best = 0.0
    for order, m in ((4, 4), (2, 2)):
        d = np.abs(k ** order - c - lam)
        S = sum(k ** (2 * j) for j in range(order + 1))
        a = S / (4 * d ** 2)
        b = 1 / (4 * d ** 2)
        cl = abs(lam) ** (order / m)
        best = max(best, float(np.max(np.sqrt(a) + cl * np.sqrt(b))))
        A1, A2 = np.meshgrid(a, a, indexing="ij")
        B1, B2 = np.meshgrid(b, b, indexing="ij")
        da, db = A1 - A2, B1 - B2
        with np.errstate(all="ignore"):
            p = (cl ** 2 * db ** 2 * A2 - da ** 2 * B2) / (da ** 2 * db - cl ** 2 * db ** 2 * da)
        p = np.clip(np.nan_to_num(p), 0.0, 1.0)
        val = np.sqrt(p * A1 + (1 - p) * A2) + cl * np.sqrt(p * B1 + (1 - p) * B2)
        best = max(best, float(np.max(val)))
    return best


def coupled_eigenvalues(M, L, c, n=1):
    """Analytic spectrum {|xi|^4 - c} U {|xi|^2 - c} of the unperturbed example on the torus grid."""
    k = 2 * np.pi / L * np.fft.fftfreq(M, 1.0 / M)
    grids = np.meshgrid(*([k] * n), indexing="ij")
    r2 = sum(g ** 2 for g in grids).ravel()
    return np.sort(np.concatenate([r2 ** 2 - c, r2 - c]))
