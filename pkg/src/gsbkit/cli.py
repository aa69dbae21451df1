"""Command-line driver: ``gsbkit run CONFIG`` and ``gsbkit schema``.

Exit status is 0 when every selected check passes, 1 when a numerical check
fails (the failing invariant is printed) and 2 for usage or config errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import STUDIES, ConfigError, RunConfig, build_spec, cutoff_schedule, load_config
from .errors import BasisSizeError, NearSpectrumError, SingularFormulaError
from .gsb import (
    ModelSpec,
    assemble_hamiltonian,
    block_residual,
    common_eigenbasis,
    hermiticity_residual,
    low_spectra,
    relative_bound_slack,
    validate_interaction,
)
from .modes import analytic_case
from .renorm import RATIO_SPREAD_LIMIT, convergence_study, dressing_ladder
from .resolvent import ResolventContext, krein_check, resolvent_vanishing_study

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2

KREIN_RTOL = 1e-8
ADJOINT_TOL = 1e-10
BOUND_SLACK = -1e-10
GROUND_TOL = 1e-8
UNITARITY_TOL = 1e-12
SPECTRUM_ROWS = 20

REPORT_COLUMNS = {
    "validate": ("check", "subject", "value", "passed"),
    "spectrum": ("index", "free", "interacting"),
    "resolvent-check": ("z_re", "z_im", "dist", "rel_error", "condition_number", "adjoint_residual"),
    "converge": ("cutoff", "z_re", "z_im", "h_minus1_dist", "resolvent_dist", "tmin_dist", "ratio"),
    "dress": ("n_max", "self_energy", "ground_energy", "unitarity_residual", "conjugation_residual",
              "spectral_distance"),
    "vanish": ("s", "z_re", "z_im", "dist", "norm_measured", "norm_bound"),
}

REPORT_METRICS = {
    "validate": ("assumption_verdict", "eigenbasis_residual", "min_bound_slack"),
    "spectrum": ("hermiticity_residual", "ground_free", "ground_interacting"),
    "resolvent-check": ("max_rel_error", "max_adjoint_residual"),
    "converge": ("ratio_spread", "constants", "decreasing"),
    "dress": ("self_energy", "ground_energy", "max_unitarity_residual", "conjugation_decreasing"),
    "vanish": ("exponents", "expected_exponents"),
}


def summary_schema(study: str) -> dict:
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"{study} summary",
        "type": "object",
        "additionalProperties": False,
        "required": ["study", "passed", "failures", "columns", "metrics"],
        "properties": {
            "study": {"const": study},
            "passed": {"type": "boolean"},
            "failures": {"type": "array", "items": {"type": "string"}},
            "columns": {"const": list(REPORT_COLUMNS[study])},
            "metrics": {
                "type": "object",
                "required": list(REPORT_METRICS[study]),
                "additionalProperties": False,
                "properties": {k: {} for k in REPORT_METRICS[study]},
            },
        },
    }


def report_schema() -> str:
    """CSV column contracts and JSON summary schemas for every study."""
    lines = ["# CSV columns (one header row, numbers formatted with %.17g)"]
    for study in STUDIES:
        lines.append(f"{study}.csv: {','.join(REPORT_COLUMNS[study])}")
    lines.append("")
    lines.append("# JSON summaries")
    lines.append(json.dumps({s: summary_schema(s) for s in STUDIES}, indent=2, sort_keys=True))
    return "\n".join(lines)


@dataclass
class StudyResult:
    study: str
    rows: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return io.format_number(x)


def _json_ready(x):
    if isinstance(x, dict):
        return {str(k) if not isinstance(k, complex) else io.complex_text(k): _json_ready(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_ready(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, (np.integer, int)):
        return int(x)
    return x


def _study_validate(spec: ModelSpec, cfg: RunConfig) -> StudyResult:
    res = StudyResult("validate")
    rep = validate_interaction(spec.spin)
    for j, r in enumerate(rep.normality_residuals):
        res.rows.append(("normality", f"B{j + 1}", r, rep.normal[j]))
    for (j, l), r in sorted(rep.commutator_residuals.items()):
        res.rows.append(("commutation", f"B{j + 1},B{l + 1}", r, r < 1e-10))
    res.rows.append(("joint_kernel", "stacked", rep.smallest_stacked_singular_value, rep.joint_kernel_trivial))
    for j, f in enumerate(spec.factors):
        if f.tail is not None:
            res.rows.append(("uv_case", f"f{j + 1}", int(analytic_case(f.tail)), True))
    eig_res = float("nan")
    if rep.verdict:
        eig = common_eigenbasis(spec.spin, seed=cfg.seed)
        eig_res = max(max(eig.residuals(spec.spin)), block_residual(spec, eig))
        res.rows.append(("eigenbasis", "U", eig_res, eig_res < 1e-9))
        if eig_res >= 1e-9:
            res.failures.append(f"eigenbasis: residual {eig_res:.3e}")
    else:
        res.failures.extend(f"interaction assumption: {m}" for m in rep.failures())
    rng = np.random.default_rng(cfg.seed)
    slacks = []
    for _ in range(cfg.samples):
        psi = rng.standard_normal(spec.dim) + 1j * rng.standard_normal(spec.dim)
        slacks.append(relative_bound_slack(spec, psi))
    min_slack = min(slacks)
    res.rows.append(("relative_bound", f"{cfg.samples} samples", min_slack, min_slack >= BOUND_SLACK))
    if min_slack < BOUND_SLACK:
        res.failures.append(f"relative bound: slack {min_slack:.3e}")
    res.metrics = {"assumption_verdict": rep.verdict, "eigenbasis_residual": eig_res, "min_bound_slack": min_slack}
    return res


def _study_spectrum(spec: ModelSpec, cfg: RunConfig) -> StudyResult:
    res = StudyResult("spectrum")
    free, full = low_spectra(spec, min(SPECTRUM_ROWS, spec.dim))
    res.rows = [(i, a, b) for i, (a, b) in enumerate(zip(free, full))]
    herm = hermiticity_residual(spec)
    if herm != 0.0:
        res.failures.append(f"hermiticity: residual {herm:.3e}")
    res.metrics = {"hermiticity_residual": herm, "ground_free": free[0], "ground_interacting": full[0]}
    return res


def _study_resolvent(spec: ModelSpec, cfg: RunConfig) -> StudyResult:
    res = StudyResult("resolvent-check")
    rows = krein_check(ResolventContext.from_spec(spec, cfg.z0), cfg.z)
    for r in rows:
        res.rows.append((r.z.real, r.z.imag, r.dist, r.rel_error, r.condition_number, r.adjoint_residual))
        if r.rel_error >= KREIN_RTOL:
            res.failures.append(f"krein-direct equivalence at z={r.z}: relative error {r.rel_error:.3e}")
        if r.adjoint_residual >= ADJOINT_TOL:
            res.failures.append(f"adjoint symmetry at z={r.z}: residual {r.adjoint_residual:.3e}")
    res.metrics = {"max_rel_error": max(r.rel_error for r in rows),
                   "max_adjoint_residual": max(r.adjoint_residual for r in rows)}
    return res


def _study_converge(spec: ModelSpec, cfg: RunConfig) -> StudyResult:
    res = StudyResult("converge")
    rep = convergence_study(spec, cutoff_schedule(cfg, spec.grid), cfg.z, cfg.z0)
    for r in rep.rows:
        res.rows.append((r.cutoff, r.z.real, r.z.imag, r.h_minus1_dist, r.resolvent_dist, r.tmin_dist, r.ratio))
    if not rep.verdict:
        for z in cfg.z:
            if not rep.decreasing[z]:
                res.failures.append(f"norm-resolvent convergence at z={z}: distances not strictly decreasing")
            if rep.ratio_spread[z] >= RATIO_SPREAD_LIMIT:
                res.failures.append(f"norm-resolvent convergence at z={z}: ratio spread {rep.ratio_spread[z]:.3g}")
    res.metrics = {"ratio_spread": rep.ratio_spread, "constants": rep.constants, "decreasing": rep.decreasing}
    return res


def _study_dress(spec: ModelSpec, cfg: RunConfig) -> StudyResult:
    res = StudyResult("dress")
    if spec.spin.dim != 1 or spec.spin.n_couplings != 1:
        raise ConfigError("dress: the dressing study needs the van_hove preset (one level, one coupling)")
    lad = dressing_ladder(spec.factors[0], spec.grid, cfg.dress_n_max)
    for r in lad.reports:
        res.rows.append((r.n_max, r.self_energy, r.ground_energy, r.unitarity_residual, r.conjugation_residual,
                         r.spectral_distance))
    # energies exclude the constant atom level K
    top = lad.reports[-1]
    gap = abs(top.ground_energy - top.self_energy)
    if gap > GROUND_TOL:
        res.failures.append(f"self-energy: ground energy misses E by {gap:.3e}")
    worst_unitarity = max(r.unitarity_residual for r in lad.reports)
    if worst_unitarity >= UNITARITY_TOL:
        res.failures.append(f"dressing unitarity: residual {worst_unitarity:.3e}")
    if not lad.decreasing:
        res.failures.append("dressing conjugation: residual not decreasing in n_max")
    res.metrics = {"self_energy": top.self_energy, "ground_energy": top.ground_energy,
                   "max_unitarity_residual": worst_unitarity, "conjugation_decreasing": lad.decreasing}
    return res


def _study_vanish(spec: ModelSpec, cfg: RunConfig) -> StudyResult:
    res = StudyResult("vanish")
    ctx = ResolventContext.from_spec(spec, cfg.z0)
    lo, hi = cfg.vanish_n
    zs = [-(2.0 ** n) for n in range(lo, hi + 1)]
    exponents, expected = {}, {}
    for s in cfg.vanish_s:
        rep = resolvent_vanishing_study(ctx, s, zs)
        for r in rep.rows:
            res.rows.append((s, r.z.real, r.z.imag, r.dist, r.norm_measured, r.norm_bound))
        exponents[io.format_number(s)] = rep.exponent
        expected[io.format_number(s)] = rep.expected_exponent
        if not rep.within_bound:
            res.failures.append(f"resolvent vanishing (s={s}): measured norm above the spectral bound")
        if not rep.decreasing:
            res.failures.append(f"resolvent vanishing (s={s}): norms not decreasing")
        if not rep.exponent_ok:
            res.failures.append(f"resolvent vanishing (s={s}): exponent {rep.exponent:.3f} vs {rep.expected_exponent:.3f}")
    res.metrics = {"exponents": exponents, "expected_exponents": expected}
    return res


STUDY_RUNNERS = {
    "validate": _study_validate,
    "spectrum": _study_spectrum,
    "resolvent-check": _study_resolvent,
    "converge": _study_converge,
    "dress": _study_dress,
    "vanish": _study_vanish,
}


def write_study(result: StudyResult, out: Path) -> None:
    with open(out / f"{result.study}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS[result.study])
        for row in result.rows:
            w.writerow([_cell(x) for x in row])
    summary = {
        "study": result.study,
        "passed": result.passed,
        "failures": list(result.failures),
        "columns": list(REPORT_COLUMNS[result.study]),
        "metrics": _json_ready(result.metrics),
    }
    (out / f"{result.study}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def run(cfg: RunConfig, out: Path | None = None, log=print) -> int:
    """Execute the selected studies in sorted order and write artifacts; returns the exit status."""
    out = Path(cfg.output if out is None else out)
    spec = build_spec(cfg)
    if cfg.require_assumption:
        failures = validate_interaction(spec.spin).failures()
        if failures:
            for msg in failures:
                log(f"FAIL interaction assumption: {msg}")
            return EXIT_CHECK
    if not cfg.studies and not cfg.export:
        log("no studies selected")
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    if "binary" in cfg.export:
        io.write_matrix_binary(out / "hamiltonian.bin", assemble_hamiltonian(spec).dense())
    if "mtx" in cfg.export:
        io.write_matrix_market(out / "hamiltonian.mtx", assemble_hamiltonian(spec).dense())
    results = [STUDY_RUNNERS[name](spec, cfg) for name in sorted(cfg.studies)]
    lines = [f"model: {spec.preset}, D={spec.spin.dim}, modes={spec.grid.size}, n_max={spec.basis.n_max}, "
             f"dim={spec.dim}, seed={cfg.seed}"]
    for r in results:
        write_study(r, out)
        lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.study}")
        lines.extend(f"  - {m}" for m in r.failures)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        log(line)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsbkit", description="Generalized spin-boson operator checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the studies selected in a YAML config")
    p_run.add_argument("config", help="path to the YAML run config")
    p_run.add_argument("--out", help="output directory (overrides the config)")
    p_run.add_argument("--seed", type=int, help="seed for randomized checks (overrides the config)")
    p_run.add_argument("--study", action="append", choices=STUDIES,
                       help="study to run; repeatable; replaces the config's list")
    sub.add_parser("schema", help="print the report column contracts and JSON schemas")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(report_schema())
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.study:
            overrides["studies"] = tuple(dict.fromkeys(args.study))
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        return run(cfg, None if args.out is None else Path(args.out))
    except (ConfigError, BasisSizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NearSpectrumError, SingularFormulaError) as exc:
        print(f"FAIL {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
