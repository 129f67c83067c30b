"""Command-line interface: ``dn <command> [flags]``.

Exit codes
----------
0  success
1  ellipticity check failed
2  file could not be read or written
3  malformed JSON
4  semantic validation error (message carries a JSON-pointer path)
5  computation failure (singular frequency, degenerate resolution, size cap, ...)
64 command-line usage error
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .ellipticity import (EllipticityConfig, Resolution, ResolutionError, ThresholdNotReached,
                          check_parameter_ellipticity)
from .fourier import GridField, GridSpec, SingularFrequencyError, frozen_resolvent_apply
from .spectral import EigensolverError, SizeCapExceeded
from .specfile import dumps, load_spec, write_json
from .symbols import DNValidationError

EXIT_OK = 0
EXIT_NOT_ELLIPTIC = 1
EXIT_IO = 2
EXIT_JSON = 3
EXIT_SEMANTIC = 4
EXIT_COMPUTE = 5
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class ComputationError(Exception):
    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# flag parsing


def parse_complex(text: str) -> complex:
    parts = [p.strip() for p in str(text).split(",")]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"cannot parse lambda {text!r}; expected 're,im'") from None
    if len(vals) == 1:
        vals.append(0.0)
    if len(vals) != 2 or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"cannot parse lambda {text!r}; expected 're,im'")
    return complex(vals[0], vals[1])


def parse_point(text: str, n: int) -> np.ndarray:
    try:
        vals = np.array([float(p) for p in str(text).split(",")])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"point {text!r} must have {n} coordinates")
    return vals


def _jobs(args) -> int:
    env = os.environ.get("DN_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"DN_JOBS must be an integer, got {env!r}") from None
    return max(1, args.jobs)


def _grid(args, spec) -> GridSpec:
    n = spec.system.n
    M = args.grid if args.grid is not None else (spec.grid or {}).get("M", 32)
    L = args.period if args.period is not None else (spec.grid or {}).get("L", 2.0 * math.pi)
    try:
        return GridSpec(n, float(L), int(M))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(obj, out: str | None, default_name: str) -> None:
    if out is None:
        sys.stdout.write(dumps(obj))
        return
    path = out
    if os.path.isdir(out) or out.endswith(os.sep):
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, default_name)
    write_json(path, obj)


def _out_dir(out: str | None, default: str) -> str:
    path = out or default
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    s = spec.system
    print(f"ok: n={s.n} N={s.N} s={list(s.orders.s)} t={list(s.orders.t)} "
          f"groups={list(s.orders.groups)} constant={s.is_constant}")
    return EXIT_OK


def cmd_check_ellipticity(args) -> int:
    spec = load_spec(args.spec)
    if spec.sector is None:
        raise DNValidationError("a sector is required for the ellipticity check", "/sector")
    try:
        resolution = Resolution.parse(args.resolution) if args.resolution else Resolution()
    except ValueError as exc:
        raise ComputationError(f"degenerate resolution: {exc}") from None
    tol = spec.tolerances
    config = EllipticityConfig(resolution=resolution,
                               kappa_floor=float(tol.get("kappa_floor", 1e-6)),
                               xi_floor=float(tol.get("xi_floor", 1e-3)),
                               n_jobs=_jobs(args), estimate_constants=not args.no_constants)
    report = check_parameter_ellipticity(spec.system, spec.sector, config)
    _emit(report.to_dict(), args.out, "ellipticity.json")
    return EXIT_OK if report.passed else EXIT_NOT_ELLIPTIC


def _rhs(args, grid: GridSpec, N: int) -> GridField:
    if args.rhs:
        with open(args.rhs, "rb") as fh:
            field = GridField.from_bytes(fh.read())
        if field.grid != grid or field.N != N:
            raise DNValidationError(f"right-hand side grid/components do not match ({field.grid}, N={field.N})",
                                    "/rhs")
        return field
    return GridField.random_bandlimited(grid, N, np.random.default_rng(args.seed))


def _singular_witness(exc: SingularFrequencyError) -> dict:
    return {"xi": exc.xi.tolist(), "nearest_symbol_eigenvalue": exc.eigenvalue,
            "condition_number": exc.cond, "lambda": exc.lam}


def cmd_solve(args) -> int:
    from .fourier import OperatorApplier, _check_conditioning
    from .norms import product_norms
    from .spectral import assemble

    spec = load_spec(args.spec)
    sys_ = spec.system
    lam = parse_complex(args.lam)
    grid = _grid(args, spec)
    f = _rhs(args, grid, sys_.N)
    applier = OperatorApplier(sys_, grid)
    try:
        if args.x0 is not None:
            mode = "frozen principal part"
            x0 = parse_point(args.x0, sys_.n)
            u = frozen_resolvent_apply(sys_, x0, lam, f)
            residual_op = sys_.frozen_principal(x0)
            res_hat = OperatorApplier(residual_op, grid).apply_hat(u.hat(), lam) - f.hat()
        elif sys_.is_constant:
            mode = "constant coefficients"
            xi = grid.frequencies()
            base = sys_.symbol(np.zeros(sys_.n), xi)
            mats = base - lam * np.eye(sys_.N)
            _check_conditioning(mats, xi, lam, base)
            uh = np.linalg.solve(mats, np.moveaxis(f.hat(), 0, -1)[..., None])[..., 0]
            u = GridField.from_hat(grid, np.moveaxis(uh, -1, 0))
            res_hat = applier.apply_hat(u.hat(), lam) - f.hat()
        else:
            mode = "assembled matrix"
            op = assemble(sys_, grid, n_jobs=_jobs(args))
            mat = op.matrix - lam * np.eye(op.dim)
            sv = np.linalg.svd(mat, compute_uv=False)
            if sv[-1] <= 1e-14 * sv[0]:
                raise ComputationError("discretized operator is numerically singular",
                                       {"lambda": lam, "sigma_min": float(sv[-1]), "sigma_max": float(sv[0])})
            u = op.from_vector(np.linalg.solve(mat, op.to_vector(f)))
            res_hat = applier.apply_hat(u.hat(), lam) - f.hat()
    except SingularFrequencyError as exc:
        raise ComputationError(str(exc), _singular_witness(exc)) from None
    residual = float(np.sqrt(np.sum(np.abs(res_hat) ** 2)) / max(np.sqrt(np.sum(np.abs(f.hat()) ** 2)), 1e-300))
    out = _out_dir(args.out, ".")
    with open(os.path.join(out, "solution.bin"), "wb") as fh:
        fh.write(u.to_bytes())
    report = {"lambda": lam, "mode": mode, "grid": {"n": grid.n, "M": grid.M, "L": grid.L},
              "seed": args.seed, "rhs": args.rhs or "random band-limited",
              "relative_residual": residual}
    if lam != 0:
        ut, _ = product_norms(u, 2.0, lam, sys_.orders)
        _, fs = product_norms(f, 2.0, lam, sys_.orders)
        report["norm_t_solution"] = ut
        report["norm_minus_s_rhs"] = fs
    write_json(os.path.join(out, "solve.json"), report)
    return EXIT_OK


def _field(args, grid: GridSpec, N: int) -> GridField:
    if args.field in (None, "zero"):
        return GridField.zeros(grid, N)
    if args.field == "random":
        return GridField.random_bandlimited(grid, N, np.random.default_rng(args.seed))
    with open(args.field, "rb") as fh:
        return GridField.from_bytes(fh.read())


def cmd_norms(args) -> int:
    from .norms import NormSpec, apriori_ratio, bessel_norm, param_norm, product_norms

    spec = load_spec(args.spec)
    sys_ = spec.system
    orders = sys_.orders
    lam = parse_complex(args.lam)
    if lam == 0:
        raise DNValidationError("parameter-dependent norms need a nonzero lambda", "/lambda")
    grid = _grid(args, spec)
    u = _field(args, grid, sys_.N)
    if u.N != sys_.N:
        raise DNValidationError(f"field has {u.N} components, system has {sys_.N}", "/field")
    comps = []
    for k in range(sys_.N):
        uk = GridField(u.grid, u.values[k:k + 1])
        comps.append({
            "component": k + 1,
            "bessel_t": bessel_norm(uk, NormSpec(orders.t[k], args.p)),
            "bessel_minus_s": bessel_norm(uk, NormSpec(-orders.s[k], args.p)),
            "param_t": param_norm(uk, NormSpec(orders.t[k], args.p, lam, k + 1), orders),
            "param_minus_s": param_norm(uk, NormSpec(-orders.s[k], args.p, lam, k + 1), orders),
        })
    t_norm, s_norm = product_norms(u, args.p, lam, orders)
    report = {"lambda": lam, "p": args.p, "kind": "exact" if args.p == 2 else "quadrature",
              "grid": {"n": grid.n, "M": grid.M, "L": grid.L}, "field": args.field or "zero",
              "components": comps, "product_t": t_norm, "product_minus_s": s_norm}
    if args.apriori != "none":
        try:
            res = apriori_ratio(sys_, lam, grid, args.apriori, seed=args.seed, p=args.p, n_jobs=_jobs(args))
        except SingularFrequencyError as exc:
            raise ComputationError(str(exc), _singular_witness(exc)) from None
        except ValueError as exc:
            raise ComputationError(str(exc)) from None
        report["apriori"] = {"mode": res.mode, "ratio": res.ratio, "forward_ratio": res.forward_ratio,
                             "details": res.details}
    _emit(report, args.out, "norms.json")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .spectral import assemble, classify, index_probe, spectrum

    spec = load_spec(args.spec)
    sys_ = spec.system
    grid = _grid(args, spec)
    start = float(sys_.metadata.get("halfline_start", args.halfline))
    try:
        op = assemble(sys_, grid, n_jobs=_jobs(args))
        rep = spectrum(op, start)
        report = {"grid": {"n": grid.n, "M": grid.M, "L": grid.L}, "dim": op.dim,
                  "basis": op.basis, "halfline_start": start}
        if args.refine:
            fine = spectrum(assemble(sys_, grid.doubled(), n_jobs=_jobs(args)), start)
            ref = classify(rep, fine, args.tol)
            report["class_counts"] = ref.counts()
            report["isolated_candidates"] = [[float(z.real), float(z.imag)] for z in rep.eigenvalues[ref.isolated]]
        report["index_probes"] = [index_probe(op, parse_complex(text)).to_dict() for text in args.lam or []]
    except (SizeCapExceeded, EigensolverError) as exc:
        raise ComputationError(str(exc)) from None
    out = _out_dir(args.out, ".")
    write_json(os.path.join(out, "spectrum.json"), report)
    with open(os.path.join(out, "eigenvalues.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rep.to_csv())
    return EXIT_OK


def _parse_ladder(text: str):
    levels = []
    for item in text.split(";"):
        M, L = item.split(":")
        levels.append((int(M), float(eval_period(L))))
    return tuple(levels)


def eval_period(text: str) -> float:
    """``"8pi"``, ``"2*pi"`` or a plain number."""
    t = text.strip().replace("*", "")
    if t.endswith("pi"):
        head = t[:-2]
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def cmd_reproduce_example(args) -> int:
    from .example import ExampleConfig, reproduce_example

    try:
        ladder = _parse_ladder(args.ladder) if args.ladder else None
        strength = args.strength
        try:
            strength = float(strength)
        except ValueError:
            pass
        config = ExampleConfig(n=args.n, c=args.c, epsilon=args.epsilon, strength=strength, ladder=ladder,
                               seed=args.seed, n_jobs=_jobs(args),
                               estimate_constants=not args.no_constants)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad example configuration: {exc}") from None
    result = reproduce_example(config)
    result.write(_out_dir(args.out, "example_out"))
    return EXIT_OK if not result.report["errors"] else EXIT_COMPUTE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dn", description="Douglis-Nirenberg system toolkit on the torus")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, spec=True, grid=False):
        if spec:
            p.add_argument("spec", help="system specification (JSON)")
        p.add_argument("--out", default=None, help="output file or directory")
        p.add_argument("--jobs", type=int, default=1, help="worker threads (DN_JOBS overrides)")
        p.add_argument("--seed", type=int, default=42)
        if grid:
            p.add_argument("--grid", type=int, default=None, help="points per axis M")
            p.add_argument("--period", type=float, default=None, help="torus period L")

    p = sub.add_parser("validate", help="validate a specification file")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("check-ellipticity", help="parameter-ellipticity check")
    common(p)
    p.add_argument("--resolution", default=None, help="'k' or 'directions,radial,args'")
    p.add_argument("--no-constants", action="store_true", help="skip C0 and lambda-dagger")
    p.set_defaults(func=cmd_check_ellipticity)

    p = sub.add_parser("solve", help="solve (A - lambda) u = f on the torus")
    common(p, grid=True)
    p.add_argument("--lambda", dest="lam", required=True, help="'re,im'")
    p.add_argument("--x0", default=None, help="freeze the principal part at this point")
    p.add_argument("--rhs", default=None, help="right-hand side field (binary); random if absent")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("norms", help="parameter-dependent norms and a-priori ratio")
    common(p, grid=True)
    p.add_argument("--lambda", dest="lam", required=True, help="'re,im'")
    p.add_argument("--field", default=None, help="'zero', 'random' or a binary field file")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--apriori", choices=("none", "exact", "sampled"), default="none")
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("spectrum", help="assembled spectrum and probes")
    common(p, grid=True)
    p.add_argument("--lambda", dest="lam", action="append", help="index probe point 're,im' (repeatable)")
    p.add_argument("--refine", action="store_true", help="classify against the doubled grid")
    p.add_argument("--tol", type=float, default=1e-6, help="relative stability tolerance")
    p.add_argument("--halfline", type=float, default=0.0, help="start of the reference half-line")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("reproduce-example", help="run the coupled example end to end")
    common(p, spec=False)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=math.pi / 6.0)
    p.add_argument("--strength", default="0", help="number or none|weak|strong")
    p.add_argument("--ladder", default=None, help="'M:L;M:L;...', L may be written like 8pi")
    p.add_argument("--no-constants", action="store_true")
    p.set_defaults(func=cmd_reproduce_example)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"dn: malformed JSON: {exc}", file=sys.stderr)
        return EXIT_JSON
    except UnicodeDecodeError as exc:
        print(f"dn: malformed JSON: {exc}", file=sys.stderr)
        return EXIT_JSON
    except OSError as exc:
        print(f"dn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DNValidationError as exc:
        where = exc.path or "/"
        print(f"dn: invalid specification at {where}: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    except ComputationError as exc:
        print(f"dn: computation failed: {exc}", file=sys.stderr)
        if exc.witness:
            print(dumps({"witness": exc.witness}), file=sys.stderr, end="")
        return EXIT_COMPUTE
    except (SingularFrequencyError, ThresholdNotReached, ResolutionError, SizeCapExceeded,
            EigensolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"dn: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
