"""End-to-end run on the coupled fourth/second order example.

Runs the ellipticity check, the constants ``C0`` and lambda-dagger, the
spectrum on a ladder of grids with refinement classification, a resolvent
sweep along the negative axis and kernel/cokernel probes on a circle
around ``-c``.  Stage failures are recorded in the report instead of
aborting the run.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .ellipticity import EllipticityConfig, Resolution, check_parameter_ellipticity
from .fourier import GridSpec
from .models import PERTURBATION_STRENGTHS, coupled_system
from .spectral import (ESSENTIAL, ISOLATED, assemble, classify, gap_statistics, index_probe,
                       resolvent_probe, spectrum)
from .symbols import Sector

DEFAULT_LADDERS = {
    1: ((128, 8.0 * math.pi), (256, 16.0 * math.pi), (512, 32.0 * math.pi)),
    2: ((8, 2.0 * math.pi), (16, 4.0 * math.pi), (32, 8.0 * math.pi)),
}


@dataclass
class ExampleConfig:
    n: int = 1
    c: float = 1.0
    epsilon: float = math.pi / 6.0
    strength: float = 0.0
    ladder: tuple[tuple[int, float], ...] | None = None
    window_max: float = 10.0
    tol_rel: float = 1e-6
    resolvent_moduli: tuple[float, ...] = (10.0, 100.0, 1000.0, 10000.0)
    ratio_mode: str = "sampled"
    index_radius: float = 2.0
    index_phases: tuple[float, ...] = (0.5 * math.pi, 0.75 * math.pi, math.pi, 1.25 * math.pi, 1.5 * math.pi)
    seed: int = 42
    samples: int = 64
    resolution: tuple[int, int, int] = (16, 41, 41)
    estimate_constants: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if isinstance(self.strength, str):
            self.strength = PERTURBATION_STRENGTHS[self.strength]
        if self.n not in (1, 2):
            raise ValueError(f"n must be 1 or 2, got {self.n}")
        if self.c < 0:
            raise ValueError(f"c must be non-negative, got {self.c}")
        if self.ladder is None:
            self.ladder = DEFAULT_LADDERS[self.n]
        self.ladder = tuple((int(M), float(L)) for M, L in self.ladder)
        if len(self.ladder) < 2:
            raise ValueError("the grid ladder needs at least two levels")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ladder"] = [list(level) for level in self.ladder]
        for key in ("resolvent_moduli", "index_phases", "resolution"):
            out[key] = list(out[key])
        return out


@dataclass
class ExampleResult:
    report: dict
    csv: dict[str, str] = field(default_factory=dict)

    def write(self, out_dir) -> list[str]:
        from .specfile import write_json

        os.makedirs(out_dir, exist_ok=True)
        paths = [os.path.join(out_dir, "report.json")]
        write_json(paths[0], self.report)
        for name, text in self.csv.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            paths.append(path)
        return paths


def _ellipticity_stage(sys, config: ExampleConfig) -> dict:
    sector = Sector.from_epsilon(config.epsilon)
    cfg = EllipticityConfig(resolution=Resolution(*config.resolution), n_jobs=config.n_jobs,
                            estimate_constants=config.estimate_constants)
    return check_parameter_ellipticity(sys, sector, cfg).to_dict()


def _spectrum_stage(sys, config: ExampleConfig, csv: dict) -> tuple[dict, list]:
    lo, hi = -config.c, config.window_max
    reports = []
    for M, L in config.ladder:
        op = assemble(sys, GridSpec(config.n, L, M), n_jobs=config.n_jobs)
        reports.append((op, spectrum(op, -config.c)))
    levels = []
    isolated_counts = []
    for i, (op, rep) in enumerate(reports):
        entry = {"M": op.grid.M, "L": op.grid.L, "dim": op.dim, "eigenvalue_count": int(len(rep.eigenvalues))}
        if i + 1 < len(reports):
            ref = classify(rep, reports[i + 1][1], config.tol_rel)
            counts = ref.counts()
            isolated_counts.append(counts[ISOLATED])
            ess = rep.eigenvalues[np.array([c == ESSENTIAL for c in rep.classes])]
            entry["class_counts"] = counts
            entry["essential_start"] = float(ess.real.min()) if len(ess) else None
            entry["isolated_candidates"] = [[float(z.real), float(z.imag)]
                                            for z in rep.eigenvalues[ref.isolated]]
        gaps = gap_statistics(rep.eigenvalues, lo, hi)
        entry["gaps"] = {"window": [lo, hi], "pieces": gaps.pieces, "mean_gap": gaps.mean_gap,
                         "max_gap": gaps.max_gap}
        levels.append(entry)
        csv[f"eigenvalues_level{i}.csv"] = rep.to_csv()
    csv["eigenvalues.csv"] = reports[-2][1].to_csv()
    shrink = [levels[i + 1]["gaps"]["pieces"] / levels[i]["gaps"]["pieces"] for i in range(len(levels) - 1)]
    out = {"levels": levels, "gap_shrink_factors": shrink, "isolated_counts": isolated_counts,
           "isolated_count_stable": len(set(isolated_counts)) == 1,
           "tol_rel": config.tol_rel}
    return out, [op for op, _ in reports]


def _resolvent_stage(ops, config: ExampleConfig) -> list:
    lambdas = [-r for r in config.resolvent_moduli]
    table = []
    for op in ops[:2]:
        probes = resolvent_probe(op, lambdas, samples=config.samples, seed=config.seed,
                                 ratio_mode=config.ratio_mode)
        table.append({"M": op.grid.M, "L": op.grid.L, "probes": [p.to_dict() for p in probes]})
    return table


def _index_stage(op, config: ExampleConfig) -> list:
    out = []
    for phi in config.index_phases:
        lam = -config.c + config.index_radius * complex(math.cos(phi), math.sin(phi))
        out.append(index_probe(op, lam).to_dict())
    return out


def reproduce_example(config: ExampleConfig | None = None) -> ExampleResult:
    """Run every stage; a failing stage is recorded under ``errors``."""
    config = config or ExampleConfig()
    sys = coupled_system(config.n, config.c, config.strength)
    report: dict = {"config": config.to_dict()}
    csv: dict[str, str] = {}
    errors = []
    try:
        report["ellipticity"] = _ellipticity_stage(sys, config)
    except Exception as exc:  # recorded, not fatal
        errors.append({"stage": "ellipticity", "error": f"{type(exc).__name__}: {exc}"})
    ops = []
    try:
        report["spectrum"], ops = _spectrum_stage(sys, config, csv)
    except Exception as exc:
        errors.append({"stage": "spectrum", "error": f"{type(exc).__name__}: {exc}"})
    if ops:
        try:
            report["resolvent_sweep"] = _resolvent_stage(ops, config)
        except Exception as exc:
            errors.append({"stage": "resolvent", "error": f"{type(exc).__name__}: {exc}"})
        try:
            report["index_probes"] = _index_stage(ops[0], config)
        except Exception as exc:
            errors.append({"stage": "index", "error": f"{type(exc).__name__}: {exc}"})
    report["errors"] = errors
    return ExampleResult(report, csv)
