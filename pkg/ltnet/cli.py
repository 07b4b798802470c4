"""Entry point for the `ltnet` command.

Exit codes: 0 affirmative verdict / success, 1 negative verdict,
2 marginal or indeterminate, 3 malformed input or Dale violation,
4 any other ltnet error, 5 unexpected failure.
"""

import argparse
import csv
import io
import json
import logging
import signal
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ltnet import __version__, config, criteria, regions, schemas
from ltnet.errors import DaleViolation, DimensionError, InputError, LtnetError
from ltnet.model import ensure_valid, flatten_ei_pair_network, validate_network

logger = logging.getLogger("ltnet")

EXIT_OK, EXIT_NEGATIVE, EXIT_INDETERMINATE = 0, 1, 2
EXIT_INPUT, EXIT_ERROR, EXIT_UNEXPECTED = 3, 4, 5


class _Parser(argparse.ArgumentParser):
    """Usage errors become InputError (exit 3) instead of argparse's exit 2."""

    def error(self, message):
        raise InputError(message, location="command line")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as e:
        raise InputError(f"expected comma-separated numbers, got {text!r}", location="command line") from e


def _emit(args, payload, text: str | None = None) -> None:
    """Write a JSON document (or preformatted text) to --out or standard output."""
    body = text if text is not None else schemas.dumps(payload) + "\n"
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(body)
        logger.info("Wrote %s", out)
    else:
        sys.stdout.write(body)


def _verdict_code(satisfied: bool, marginal: bool) -> int:
    if marginal:
        return EXIT_INDETERMINATE
    return EXIT_OK if satisfied else EXIT_NEGATIVE


# === Commands ===


def cmd_validate(args) -> int:
    net = schemas.load_network(args.network)
    report = validate_network(net, require_dale=args.dale)
    _emit(args, schemas.validation_report_to_dict(report))
    ensure_valid(net, require_dale=args.dale)
    return EXIT_OK


def cmd_equilibria(args) -> int:
    net = schemas.load_network(args.network)
    ensure_valid(net)
    reports = regions.enumerate_equilibria(net)
    if args.contained:
        reports = [r for r in reports if r.contained]
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pattern", "index", "stability", "contained", "abscissa"] + [f"x{i + 1}" for i in range(net.N)])
        for r in reports:
            d = schemas.region_report_to_dict(r)
            candidate = [repr(v) for v in d["candidate"]] if d["candidate"] is not None else [""] * net.N
            writer.writerow([d["pattern"], d["index"], d["stability"], d["contained"], repr(d["abscissa"])] + candidate)
        _emit(args, None, text=buf.getvalue())
    else:
        _emit(args, None, text="".join(json.dumps(schemas.region_report_to_dict(r)) + "\n" for r in reports))
    return EXIT_OK


def cmd_lose(args) -> int:
    net = schemas.load_network(args.network)
    ensure_valid(net, require_dale=args.dale)
    verdict = regions.lose(net)
    _emit(args, schemas.lose_verdict_to_dict(verdict))
    if verdict.indeterminate or (not verdict.lose and not verdict.stable_contained):
        return EXIT_INDETERMINATE
    return EXIT_OK if verdict.lose else EXIT_NEGATIVE


def cmd_check(args) -> int:
    kind = args.kind
    if kind == "ei-pair":
        verdict = criteria.ei_pair_limit_cycle(schemas.load_ei_pair(args.network))
        _emit(args, schemas.condition_verdict_to_dict(verdict))
        return _verdict_code(verdict.satisfied, verdict.is_marginal)

    if kind == "single-inh":
        net = schemas.load_single_inhibitory(args.network)
        exact = criteria.single_inhibitory_in_Y(net)
        body = {
            "in_Y": schemas.condition_verdict_to_dict(exact),
            "sufficient": schemas.condition_verdict_to_dict(criteria.single_inhibitory_sufficient(net)),
        }
        if args.u_inh is not None:
            body["cross_section"] = [schemas.y_orthant_to_dict(p) for p in criteria.y_cross_section(net, args.u_inh)]
        _emit(args, body)
        return _verdict_code(exact.satisfied, exact.is_marginal)

    if kind == "ei-net":
        pn = schemas.load_ei_pair_network(args.network)
        exact = not np.any(pn.Ai != 0)
        verdict = criteria.e2e_coupled_lose(pn) if exact else criteria.e2all_coupled_lose(pn)
        body = {"test": "e2e" if exact else "e2all", "exact": exact, **schemas.condition_verdict_to_dict(verdict)}
        if args.enumerate:
            body["enumeration"] = schemas.lose_verdict_to_dict(regions.lose(flatten_ei_pair_network(pn)))
        _emit(args, body)
        return _verdict_code(verdict.satisfied, verdict.is_marginal)

    net = schemas.load_network(args.network)
    ensure_valid(net)
    analysis = criteria.analyze_inhibitory(net.W, net.u, net.m)
    _emit(args, schemas.inhibitory_analysis_to_dict(analysis))
    if analysis.lose is None:
        return EXIT_INDETERMINATE
    return EXIT_OK if analysis.lose else EXIT_NEGATIVE


def cmd_simulate(args) -> int:
    from ltnet.experiments import resolve_seed
    from ltnet.simulate import integrate, random_initial_conditions

    net = schemas.load_network(args.network)
    ensure_valid(net)
    seed = None
    if args.x0 is None or args.x0.startswith("random"):
        _, _, given = (args.x0 or "random").partition(":")
        seed = resolve_seed(int(given) if given else getattr(args, "seed", None))
        x0 = random_initial_conditions(net.m, 1, seed)[0]
    else:
        x0 = _vector(args.x0)
    tr = integrate(net, x0, t_end=args.tend, dt=args.dt, seed=seed)
    out = getattr(args, "out", None)
    schemas.write_trajectory_csv(tr, out if out else sys.stdout)
    logger.info("Integrated %d samples (network %s)", len(tr), tr.provenance.network_hash[:12])
    return EXIT_OK


def cmd_metrics(args) -> int:
    from ltnet.metrics import oscillation_index

    tr = schemas.read_trajectory_csv(args.trajectory)
    m = _vector(args.m)
    if m.shape[0] != tr.states.shape[1]:
        raise InputError(f"--m has {m.shape[0]} entries, trajectory has {tr.states.shape[1]} nodes", location="command line")
    metrics = oscillation_index(tr, m, epsilon=args.epsilon, window_fraction=args.window)
    if args.format == "csv":
        rows = ["node,chi_reg,frequency,chi_pp\n"] + [
            f"{i + 1},{c.chi_reg!r},{c.frequency!r},{c.chi_pp!r}\n" for i, c in enumerate(metrics.per_channel)
        ]
        _emit(args, None, text="".join(rows))
    else:
        _emit(args, schemas.metrics_to_dict(metrics))
    return EXIT_OK


@contextmanager
def _interruptible(pool):
    def shutdown_handler(signum, frame):
        logger.info("Received signal %s, cancelling pending study tasks...", signum)
        pool.shutdown()

    previous = signal.signal(signal.SIGINT, shutdown_handler)
    try:
        yield pool
    finally:
        signal.signal(signal.SIGINT, previous)


def _out_dir(args) -> Path:
    out = getattr(args, "out", None)
    if not out:
        raise InputError("studies need --out DIR", location="command line")
    return Path(out)


def cmd_study(args) -> int:
    from ltnet import experiments
    from ltnet.study_pool import StudyPool

    out_dir = _out_dir(args)
    pool = StudyPool(label=f"{args.kind} study")
    seed = getattr(args, "seed", None)

    with _interruptible(pool):
        if args.kind == "global":
            cfg = (schemas.load_model(args.config, experiments.GlobalStudyConfig) if args.config
                   else experiments.GlobalStudyConfig())
            if args.n_networks:
                cfg = cfg.model_copy(update={"n_networks": args.n_networks})
            if seed is not None:
                cfg = cfg.model_copy(update={"master_seed": seed})
            result = experiments.run_global_study(cfg, out_dir=out_dir, record_db=args.record_db, pool=pool)
        elif args.kind == "eta":
            cfg = (schemas.load_model(args.config, experiments.EtaStudyConfig) if args.config
                   else experiments.EtaStudyConfig())
            if args.n_networks:
                cfg = cfg.model_copy(update={"n_networks": args.n_networks})
            if seed is not None:
                cfg = cfg.model_copy(update={"master_seed": seed})
            result = experiments.run_eta_study(cfg, out_dir=out_dir, record_db=args.record_db, pool=pool)
        else:
            master = experiments.resolve_seed(seed)
            if args.pairs:
                theta, steps, pairs = schemas.load_sweep_pairs(args.pairs)
            elif args.from_global:
                networks, records, fit = schemas.load_global_run(args.from_global)
                theta, steps = fit.theta, args.steps
                pairs = experiments.select_sweep_pairs(
                    networks, records, fit, args.n_pairs, experiments.derive_seed(master, 1 << 20)
                )
            else:
                raise InputError("study sweep needs --pairs FILE or --from-global DIR", location="command line")
            result = experiments.run_sweep_study(
                pairs, theta, steps=steps, master_seed=master, out_dir=out_dir,
                t_end=args.t_end, dt=args.dt, pool=pool,
            )
    sys.stdout.write(schemas.dumps(result.summary()) + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    from ltnet import server

    server.run(host=args.host, port=args.port)
    return EXIT_OK


def cmd_config(args) -> int:
    config.print_config(stream=sys.stdout)
    errors = config.validate_environment()
    for err in errors:
        logger.error("  - %s", err)
    return EXIT_ERROR if errors else EXIT_OK


# === Parser ===


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides LTNET_SEED)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes for studies")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="relative tolerance (LTNET_TOL)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file, or directory for studies")
    common.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="ltnet", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"ltnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check dimensions, positivity and Dale's law")
    p.add_argument("network")
    p.add_argument("--dale", action="store_true", help="require every column to be sign-pure")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("equilibria", parents=[common], help="report every switching region (JSON lines)")
    p.add_argument("network")
    p.add_argument("--contained", action="store_true", help="only regions containing their candidate")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("lose", parents=[common], help="decide lack of stable equilibria by enumeration")
    p.add_argument("network")
    p.add_argument("--dale", action="store_true")
    p.set_defaults(func=cmd_lose)

    p = sub.add_parser("check", parents=[common], help="closed-form criteria")
    p.add_argument("kind", choices=("ei-pair", "single-inh", "inhibitory", "ei-net"))
    p.add_argument("network")
    p.add_argument("--u-inh", type=float, default=None, help="single-inh: also report the Y cross-section at this input")
    p.add_argument("--enumerate", action="store_true", help="ei-net: also run region enumeration")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", parents=[common], help="integrate and write a trajectory CSV")
    p.add_argument("network")
    p.add_argument("--x0", default=None, help="comma-separated vector or random[:SEED]")
    p.add_argument("--tend", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", parents=[common], help="oscillation index of a trajectory CSV")
    p.add_argument("trajectory")
    p.add_argument("--m", required=True, help="comma-separated maximum rates")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--window", type=float, default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("study", parents=[common], help="Monte-Carlo studies")
    p.add_argument("kind", choices=("global", "sweep", "eta"))
    p.add_argument("--config", default=None, help="global/eta: study config JSON")
    p.add_argument("--n-networks", type=int, default=None)
    p.add_argument("--pairs", default=None, help="sweep: pairs JSON")
    p.add_argument("--from-global", default=None, help="sweep: select pairs from a global study directory")
    p.add_argument("--n-pairs", type=int, default=50)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--record-db", action="store_true", help="also store results in the sqlite results store")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("serve", parents=[common], help="start the analysis API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("config", parents=[common], help="print effective settings")
    p.set_defaults(func=cmd_config)
    return parser


def _apply_globals(args) -> None:
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
        force=True,
    )
    if hasattr(args, "tol"):
        if not args.tol > 0:
            raise InputError(f"--tol must be positive (got {args.tol})", location="command line")
        config.REL_TOL = args.tol
    if hasattr(args, "threads"):
        if args.threads < 1:
            raise InputError(f"--threads must be at least 1 (got {args.threads})", location="command line")
        config.WORKERS = args.threads
    if not hasattr(args, "format"):
        args.format = "json"


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _apply_globals(args)
        return args.func(args)
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)
    except (InputError, DimensionError, DaleViolation) as e:
        logger.error("%s", e)
        return EXIT_INPUT
    except LtnetError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_UNEXPECTED
