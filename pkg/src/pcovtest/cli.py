"""Command-line entry point: pcov-test {global-test, multiple-test, simulate}.

Test commands read an observation matrix (CSV or the binary container)
and a hypothesis description — a column layout for problems (a)/(b)/(c)
or an explicit pairs file for problem "custom" — run the monolithic
(K=0) or distributed (K >= 1) engine, and write a report.  Reports go
to --out in the chosen --format; with no --out the JSON report goes to
stdout.  Unless --no-figures is given, a diagnostic PNG lands next to
the report file.

simulate runs one experiment cell of the built-in data-generating
processes and writes the aggregated rate tables (CSV, text, JSON, and
a rates figure) into --out treated as a directory.

Every flag can also be supplied through a JSON --config file holding
the same keys; explicit flags win over file values.  --threads falls
back to the PCOV_THREADS environment variable, then to 1.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

from .errors import PcovError, ValidationError
from .families import (build_family_a, build_family_b, build_family_c,
                       build_family_custom)
from .global_test import run_global_test
from .multiple_test import run_multiple_test
from .distributed import run_dist_global_test, run_dist_multiple_test
from .io import (RunConfig, emit_report, global_report, load_config_file,
                 load_layout, load_matrix, multiple_report)
from .simulate import SCENARIOS, SimConfig, run_experiment


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a comma-separated integer list, got {text!r}"
        ) from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flag defaults")
    p.add_argument("--B", type=int, help="subgroup length (default 5)")
    p.add_argument("--K", type=int,
                   help="blocks: 0 = monolithic engine, >= 1 distributed")
    p.add_argument("--block-sizes", dest="block_sizes", type=_int_list,
                   help="explicit per-block row counts (overrides --K)")
    p.add_argument("--L", type=_int_list, help="comma list of L values")
    p.add_argument("--N", type=int, help="Monte-Carlo draws (default 5000)")
    p.add_argument("--alpha", type=float, help="level (default 0.05)")
    p.add_argument("--seed", type=int, help="seed (default 0)")
    p.add_argument("--threads", type=int,
                   help="worker processes (default PCOV_THREADS or 1)")
    p.add_argument("--out", help="output path (simulate: directory)")
    p.add_argument("--format", choices=("json", "csv", "text"),
                   help="report format (default json)")
    p.add_argument("--no-figures", dest="figures", action="store_const",
                   const=False, help="skip figure rendering")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="observation matrix (.csv or binary)")
    p.add_argument("--layout", help="column layout JSON")
    p.add_argument("--problem", choices=("a", "b", "c", "custom"),
                   help="hypothesis family (default a)")
    p.add_argument("--pairs", help="pairs JSON (problem=custom)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcov-test",
        description="Independence tests built on squared projection "
                    "covariances over moving subgroups.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("global-test", "one global independence test over all hypotheses"),
        ("multiple-test", "FDR-controlled tests of every hypothesis"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_data_args(p)
        _add_common(p)

    p = sub.add_parser("simulate", help="run one simulation experiment cell")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--test", choices=("global", "multiple"),
                   help="which test the cell runs (default global)")
    p.add_argument("--problem", choices=("a", "b", "c"))
    p.add_argument("--G", type=int, help="regions (default 16)")
    p.add_argument("--V", type=int, help="voxels, a perfect square (default 1600)")
    p.add_argument("--n", type=int, help="subjects per replicate (default 300)")
    p.add_argument("--J", type=int, help="modalities (default 3)")
    p.add_argument("--reps", type=int, help="replications (default 500)")
    _add_common(p)
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cli_values = {k: v for k, v in vars(args).items()
                  if k not in ("command", "config")}
    file_values = load_config_file(args.config) if args.config else {}
    return RunConfig.from_sources(args.command, file_values, cli_values)


def _build_family(config: RunConfig):
    if config.problem == "custom":
        with open(config.pairs) as fh:
            spec = json.load(fh)
        pair_lists = [[(pr[0], pr[1]) for pr in h["pairs"]] for h in spec]
        labels = [h["label"] for h in spec] if all("label" in h for h in spec) else None
        return build_family_custom(pair_lists, labels=labels)
    layout = load_layout(config.layout)
    builder = {"a": build_family_a, "b": build_family_b, "c": build_family_c}
    return builder[config.problem](layout)


def _engine_k(config: RunConfig):
    """The K argument for the distributed runners, or None for monolithic."""
    if config.block_sizes:
        return list(config.block_sizes)
    return config.K if config.K >= 1 else None


def _figure_path(out: str) -> str:
    stem = out.rsplit(".", 1)[0] if "." in out.rsplit("/", 1)[-1] else out
    return stem + ".png"


def _emit(report: dict, config: RunConfig) -> None:
    if config.out is None:
        sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
        return
    emit_report(report, config.out, config.format)


def _run_global(config: RunConfig) -> int:
    data = load_matrix(config.data)
    family = _build_family(config)
    k = _engine_k(config)
    t0 = time.perf_counter()
    if k is None:
        results = run_global_test(data, family, B=config.B, L=list(config.L),
                                  N=config.N, alpha=config.alpha,
                                  seed=config.seed)
    else:
        results = run_dist_global_test(data, family, B=config.B, K=k,
                                       L=list(config.L), N=config.N,
                                       alpha=config.alpha, seed=config.seed)
    report = global_report(results, config, time.perf_counter() - t0)
    _emit(report, config)
    if config.out and config.figures:
        from .figures import global_figure
        global_figure(results, _figure_path(config.out))
    return 0


def _run_multiple(config: RunConfig) -> int:
    data = load_matrix(config.data)
    family = _build_family(config)
    k = _engine_k(config)
    t0 = time.perf_counter()
    if k is None:
        result = run_multiple_test(data, family, B=config.B, L=config.L[0],
                                   N=config.N, alpha=config.alpha,
                                   seed=config.seed)
    else:
        result = run_dist_multiple_test(data, family, B=config.B, K=k,
                                        L=config.L[0], N=config.N,
                                        alpha=config.alpha, seed=config.seed)
    report = multiple_report(result, family.labels, config,
                             time.perf_counter() - t0)
    _emit(report, config)
    if config.out and config.figures:
        from .figures import multiple_figure
        multiple_figure(result, family.labels, _figure_path(config.out))
    return 0


def _run_simulate(config: RunConfig) -> int:
    sim = SimConfig(
        G=config.G, V=config.V, n=config.n, J=config.J,
        scenario=config.scenario, problem=config.problem, test=config.test,
        B=config.B, K=config.K, L=tuple(config.L), N=config.N,
        alpha=config.alpha, replications=config.reps, seed=config.seed,
    )
    result = run_experiment(sim, out_dir=config.out, threads=config.threads,
                            figures=config.figures)
    sys.stdout.write(result.text_table())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        runner = {"global-test": _run_global,
                  "multiple-test": _run_multiple,
                  "simulate": _run_simulate}[config.command]
        return runner(config)
    except PcovError as exc:
        sys.stderr.write(f"pcov-test: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
