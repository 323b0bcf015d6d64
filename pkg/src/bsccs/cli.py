"""Command-line front end.

Exit codes: 0 success, 1 input or validation error, 2 internal correctness
failure, 3 non-convergence. Every command writes ``manifest.txt`` next to
its outputs; ``bsccs replay --manifest PATH`` reruns it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import engine
from .bench import format_bench, run_bench
from .bootstrap import BootstrapConfig, format_report, report_ranked_intervals, run_bootstrap
from .data import DrugDictionary, read_long_format, write_long_format
from .eras import build_subject_records, parse_raw_files
from .errors import (BootstrapError, BSCCSError, DatasetError, EngineError, IngestError,
                     SelectionError, StepError)
from .manifest import RunManifest, read_manifest, stale_inputs
from .priors import PriorSpec
from .selection import CVConfig, default_grid, grid_search_cv
from .simkit import load_scenario, scenario_config, write_simulation
from .solver import SolverConfig, fit

logger = logging.getLogger("bsccs")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL, EXIT_NONCONVERGED = 0, 1, 2, 3
CONVERGENCE_FLAGS = {"raw": "raw_sum", "normalized": "normalized"}


class InputError(Exception):
    """Bad flags or inputs detected by the CLI itself."""


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _grid(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def _data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="long-format era file (TSV)")
    src.add_argument("--scenario", help="use a shipped simulation scenario instead of a file")
    p.add_argument("--drugs", help="drug dictionary, one label per line; unknown labels are an error")


def _solver_args(p: argparse.ArgumentParser, prior_default: str = "laplace") -> None:
    p.add_argument("--prior", choices=("normal", "laplace", "none"), default=prior_default)
    p.add_argument("--variance", type=float, default=None, help="prior variance")
    p.add_argument("--epsilon", type=float, default=0.0005)
    p.add_argument("--max-cycles", type=int, default=1000)
    p.add_argument("--convergence", choices=tuple(CONVERGENCE_FLAGS), default="raw")
    p.add_argument("--precision", choices=("single", "double"), default="double")
    p.add_argument("--partitions", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)


def _cv_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--grid", type=_grid, default=None, help="comma-separated variances")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsccs", description=(
        "MAP estimation for the Bayesian self-controlled case series model"))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model and write coefficients.tsv")
    _data_args(p)
    _solver_args(p)
    p.add_argument("--output-dir", default=".")

    p = sub.add_parser("cv", help="select the prior variance by k-fold cross-validation")
    _data_args(p)
    _solver_args(p)
    _cv_args(p)
    p.add_argument("--cold", action="store_true", help="disable warm starts along the grid")
    p.add_argument("--output-dir", default=".")

    p = sub.add_parser("bootstrap", help="bootstrap intervals and nonzero proportions")
    _data_args(p)
    _solver_args(p)
    _cv_args(p)
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--output-dir", default=".")

    p = sub.add_parser("bench", help="time the dense, sparse and partitioned paths")
    _data_args(p)
    _solver_args(p)
    p.set_defaults(partitions=4)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--output-dir", default=".")

    p = sub.add_parser("simulate", help="write a seeded synthetic era file and its truth")
    p.add_argument("--scenario", default="default")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--subjects", type=int, default=None, help="override the number of subjects drawn")
    p.add_argument("--output-dir", default=".")

    p = sub.add_parser("ingest", help="build a long-format era file from raw interval files")
    p.add_argument("--exposures", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--observation", required=True)
    p.add_argument("--drugs", default=None)
    p.add_argument("--output-dir", default=".")

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output-dir", default=None, help="write outputs here instead")
    return parser


def _solver_config(args) -> SolverConfig:
    return SolverConfig(epsilon=args.epsilon, max_cycles=args.max_cycles,
                        convergence=CONVERGENCE_FLAGS[args.convergence],
                        precision=args.precision, partitions=args.partitions)


def _load(args, manifest: RunManifest):
    drugs = None
    if args.drugs:
        manifest.add_input("drugs", args.drugs)
        drugs = DrugDictionary.from_file(args.drugs)
    if args.input:
        manifest.add_input("eras", args.input)
        return read_long_format(args.input, drugs)
    if drugs is not None:
        raise InputError("--drugs applies to --input files only")
    manifest.set("scenario", args.scenario)
    return load_scenario(args.scenario)[0]


def _record_solver(manifest: RunManifest, args, cfg: SolverConfig) -> None:
    manifest.update("solver", {
        "epsilon": cfg.epsilon, "max_cycles": cfg.max_cycles, "convergence": cfg.convergence,
        "precision": cfg.precision, "partitions": cfg.partitions, "threads": args.threads})


def _output_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _coefficients(drug_ids, beta) -> str:
    lines = ["drug_id\tbeta_map"] + [f"{d}\t{float(b)!r}" for d, b in zip(drug_ids, beta)]
    return "\n".join(lines) + "\n"


def _cv_table(cv) -> str:
    k = cv.fold_values.shape[1]
    header = ["variance", "mean_predictive_ll"] + [f"fold_{f + 1}" for f in range(k)]
    lines = ["\t".join(header)]
    for v, mean, row in zip(cv.grid, cv.mean_values, cv.fold_values):
        lines.append("\t".join([repr(float(v)), repr(float(mean))] + [repr(float(x)) for x in row]))
    return "\n".join(lines) + "\n"


def _cv_config(args, cfg: SolverConfig, warm: bool = True) -> CVConfig:
    if args.prior == "none":
        raise InputError("cross-validation needs a normal or laplace prior")
    grid = args.grid if args.grid is not None else default_grid()
    return CVConfig(k=args.k, grid=grid, seed=args.seed, solver=cfg, prior_kind=args.prior,
                    warm_start=warm, threads=args.threads)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(args, manifest: RunManifest) -> int:
    cfg = _solver_config(args)
    prior = PriorSpec(args.prior, 1.0 if args.variance is None else args.variance)
    with manifest.phase("load"):
        ds = _load(args, manifest)
    _record_solver(manifest, args, cfg)
    manifest.update("prior", {"kind": prior.kind, "variance": prior.variance})
    with manifest.phase("fit"):
        res = fit(ds, prior, cfg)
    out = _output_dir(args)
    _write(out / "coefficients.tsv", _coefficients(ds.drug_ids, res.beta_map))
    manifest.update("result", {"log_posterior": res.log_posterior, "cycles": res.cycles_run,
                               "converged": res.converged, "criterion": res.final_criterion})
    print(f"log_posterior\t{res.log_posterior!r}")
    print(f"cycles\t{res.cycles_run}")
    print(f"converged\t{res.converged}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_cv(args, manifest: RunManifest) -> int:
    cfg = _solver_config(args)
    ccfg = _cv_config(args, cfg, warm=not args.cold)
    with manifest.phase("load"):
        ds = _load(args, manifest)
    _record_solver(manifest, args, cfg)
    manifest.update("cv", {"k": ccfg.k, "grid": ",".join(map(repr, ccfg.grid)), "seed": ccfg.seed,
                           "prior": ccfg.prior_kind, "warm_start": ccfg.warm_start})
    with manifest.phase("cv"):
        cv = grid_search_cv(ds, ccfg)
    out = _output_dir(args)
    _write(out / "cv.tsv", _cv_table(cv))
    all_converged = bool(cv.converged[cv.valid].all())
    manifest.update("result", {"selected_variance": cv.selected_variance,
                               "total_cycles": cv.total_cycles, "all_converged": all_converged})
    print(f"selected_variance\t{cv.selected_variance!r}")
    return EXIT_OK if all_converged else EXIT_NONCONVERGED


def cmd_bootstrap(args, manifest: RunManifest) -> int:
    cfg = _solver_config(args)
    with manifest.phase("load"):
        ds = _load(args, manifest)
    _record_solver(manifest, args, cfg)
    variance = args.variance
    if variance is None and args.prior != "none":
        ccfg = _cv_config(args, cfg)
        with manifest.phase("cv"):
            variance = grid_search_cv(ds, ccfg).selected_variance
        manifest.set("cv.selected_variance", variance)
    prior = PriorSpec(args.prior, 1.0 if variance is None else variance)
    bcfg = BootstrapConfig(prior=prior, replicates=args.replicates, level=args.level,
                           seed=args.seed, solver=cfg, threads=args.threads)
    manifest.update("prior", {"kind": prior.kind, "variance": prior.variance})
    manifest.update("bootstrap", {"replicates": bcfg.replicates, "level": bcfg.level,
                                  "seed": bcfg.seed, "threshold": args.threshold})
    with manifest.phase("bootstrap"):
        result = run_bootstrap(ds, bcfg)
    rows = report_ranked_intervals(result, args.threshold)
    out = _output_dir(args)
    _write(out / "intervals.tsv", format_report(rows))
    converged = result.full_fit.converged
    manifest.update("result", {"full_fit_converged": converged, "failed_replicates": result.n_failed,
                               "reported_drugs": len(rows)})
    if result.n_failed:
        logger.warning("%d of %d replicates did not converge and were excluded",
                       result.n_failed, bcfg.replicates)
    print(f"reported_drugs\t{len(rows)}")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_bench(args, manifest: RunManifest) -> int:
    cfg = _solver_config(args).with_(partitions=1)
    prior = PriorSpec(args.prior, 1.0 if args.variance is None else args.variance)
    with manifest.phase("load"):
        ds = _load(args, manifest)
    _record_solver(manifest, args, cfg)
    manifest.update("prior", {"kind": prior.kind, "variance": prior.variance})
    manifest.update("bench", {"partitions": args.partitions, "repeats": args.repeats,
                              "max_column_density": float(ds.column_density().max())})
    with manifest.phase("bench"):
        result = run_bench(ds, prior, cfg, partitions=args.partitions, repeats=args.repeats)
    out = _output_dir(args)
    _write(out / "bench.tsv", format_bench(result))
    ref = result.timings[1].result
    _write(out / "coefficients.tsv", _coefficients(ds.drug_ids, ref.beta_map))
    manifest.update("result", {"max_disagreement": result.max_disagreement,
                               "agree": result.agree,
                               "converged": all(t.result.converged for t in result.timings)})
    sys.stdout.write(format_bench(result))
    if not result.agree:
        print(f"paths disagree: max |beta difference| = {result.max_disagreement:.3g}",
              file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK if all(t.result.converged for t in result.timings) else EXIT_NONCONVERGED


def cmd_simulate(args, manifest: RunManifest) -> int:
    cfg = scenario_config(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.subjects is not None:
        changes["n_subjects"] = args.subjects
    if changes:
        cfg = replace(cfg, **changes)
    manifest.update("simulate", {"scenario": args.scenario, "seed": cfg.seed,
                                 "n_subjects": cfg.n_subjects, "n_drugs": cfg.n_drugs})
    out = _output_dir(args)
    with manifest.phase("simulate"):
        truth = write_simulation(cfg, out / "eras.tsv", out / "truth.tsv", out / "drugs.txt")
    manifest.update("result", {"kept": truth.kept, "rejected": truth.rejected})
    return EXIT_OK


def cmd_ingest(args, manifest: RunManifest) -> int:
    for role in ("exposures", "events", "observation"):
        manifest.add_input(role, getattr(args, role))
    drugs = DrugDictionary()
    if args.drugs:
        manifest.add_input("drugs", args.drugs)
        drugs = DrugDictionary.from_file(args.drugs)
    with manifest.phase("ingest"):
        groups = parse_raw_files(args.exposures, args.events, args.observation)
        records, dropped = build_subject_records(groups, drugs)
    out = _output_dir(args)
    write_long_format(out / "eras.tsv", records, drugs.labels)
    drugs.to_file(out / "drugs.txt")
    manifest.update("result", {"subjects": len(records), "dropped_intervals": dropped,
                               "drugs": len(drugs)})
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit, "cv": cmd_cv, "bootstrap": cmd_bootstrap, "bench": cmd_bench,
    "simulate": cmd_simulate, "ingest": cmd_ingest,
}

_ERROR_CODES = (
    ((InputError, DatasetError, IngestError, OSError, ValueError), EXIT_INPUT),
    ((BootstrapError,), EXIT_NONCONVERGED),
    ((EngineError, StepError, SelectionError, BSCCSError), EXIT_INTERNAL),
)


def _replay_argv(args) -> list[str]:
    entries = read_manifest(args.manifest)
    stale = stale_inputs(entries)
    if stale:
        raise InputError("inputs changed since the manifest was written: " + ", ".join(stale))
    argv = json.loads(entries["argv"])
    if args.output_dir is not None:
        argv = _with_output_dir(argv, args.output_dir)
    return argv


def _with_output_dir(argv: list[str], out: str) -> list[str]:
    argv = list(argv)
    for i, a in enumerate(argv):
        if a == "--output-dir" and i + 1 < len(argv):
            argv[i + 1] = out
            return argv
        if a.startswith("--output-dir="):
            argv[i] = f"--output-dir={out}"
            return argv
    return argv + ["--output-dir", out]


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            argv = _replay_argv(args)
            args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1 or getattr(args, "partitions", 1) < 1:
            raise InputError("--threads and --partitions must be positive")
        if hasattr(args, "threads"):
            engine.set_threads(max(args.threads, args.partitions))
        manifest = RunManifest(args.command, argv)
        code = COMMANDS[args.command](args, manifest)
        manifest.set("exit_code", code)
        manifest.write(args.output_dir)
        return code
    except Exception as exc:
        for types, code in _ERROR_CODES:
            if isinstance(exc, types):
                print(f"bsccs {args.command}: error: {exc}", file=sys.stderr)
                return code
        raise


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
