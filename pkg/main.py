"""
Command-line surface: simulate | serve | client | report | audit.

Every run ends with one machine-readable line on stdout:
    RESULT status=<pass|fail|inconclusive|error> reason=<slug>
Exit codes: 0 pass, 1 fail or protocol error, 2 invalid configuration,
inconclusive or scale too large, 3 connection failure.

TSV columns
    simulate/client: iteration d download_shares download_pir upload_shares
                     upload_combos download upload overall trainer_calls codec_ops
    report:          N r s row proposed_formula proposed naive_formula naive
"""

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np
from rich.console import Console
from rich.table import Table

from audit.ledger import (
    DOWNLOAD_NAIVE,
    DOWNLOAD_PIR,
    DOWNLOAD_SHARES,
    FORMULAS,
    NAIVE,
    PROPOSED,
    SCHEMES,
    UPLOAD_COMBOS,
    UPLOAD_NAIVE,
    UPLOAD_SHARES,
    assert_ledger,
    closed_form,
    lower_bound_report,
    overall_difference,
)
from audit.privacy import (
    DEFAULT_BUDGET,
    FOUND,
    INCONCLUSIVE,
    SCOPES,
    STORED_STATE,
    ScaleTooLargeError,
    TranscriptView,
    sampled_pir_privacy,
    view_distribution_equality,
    witness_search,
)
from config.checks import (
    CARRIERS,
    FORMATS,
    MIXING_KINDS,
    SOCKET,
    RunConfig,
    format_config_report,
    load_run_config,
    run_config_checks,
)
from config.parser import ConfigSyntaxError
from mdscode.mdscode import AUTO, VANDERMONDE, share_bounds
from protocol.database import DatabaseServer
from protocol.machine import LocalMachine
from protocol.protocol import ConfigError, IterationAborted, Variant, bootstrap, random_params
from protocol.simulation import Simulation, SimulationError
from protocol.trainer import TRAINER_KINDS, TrainerOracle
from transport.sockets import DatabaseService, SocketChannel, parse_endpoint
from transport.transport import RemoteError, TransportConnectError, TransportError

logger = logging.getLogger("main")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_CONNECT = 0, 1, 2, 3

LEDGER_COLUMNS = [
    "iteration", "d", DOWNLOAD_SHARES, DOWNLOAD_PIR, UPLOAD_SHARES, UPLOAD_COMBOS,
    "download", "upload", "overall", "trainer_calls", "codec_ops",
]
NAIVE_COLUMNS = [
    "iteration", "d", DOWNLOAD_NAIVE, UPLOAD_NAIVE, "download", "upload", "overall", "trainer_calls",
]


# =============================================================================
# SAÍDA
# =============================================================================
def finish(status: str, reason: str, code: int) -> int:
    print(f"RESULT status={status} reason={reason}")
    return code


def emit_table(title, columns, rows, fmt):
    if fmt == "tsv":
        print("\t".join(columns))
        for row in rows:
            print("\t".join(str(x) for x in row))
        return
    table = Table(title=title)
    for col in columns:
        table.add_column(col, justify="right" if col not in ("row", "phase") else "left")
    for row in rows:
        table.add_row(*[str(x) for x in row])
    Console(file=sys.stdout, color_system=None, width=160).print(table)


def ledger_row(label, d, ledger, scheme):
    if scheme == NAIVE:
        return [label, d, ledger.phases.get(DOWNLOAD_NAIVE, 0), ledger.phases.get(UPLOAD_NAIVE, 0),
                ledger.download, ledger.upload, ledger.overall, ledger.trainer_calls]
    return [
        label, d,
        ledger.phases.get(DOWNLOAD_SHARES, 0), ledger.phases.get(DOWNLOAD_PIR, 0),
        ledger.phases.get(UPLOAD_SHARES, 0), ledger.phases.get(UPLOAD_COMBOS, 0),
        ledger.download, ledger.upload, ledger.overall, ledger.trainer_calls, ledger.codec_ops,
    ]


def print_check(report):
    print("=" * 60)
    print(f"CLOSED-FORM CHECK ({report.scheme})".center(60))
    print("=" * 60)
    for line in report.lines():
        print(f"  {line}")


# =============================================================================
# CONFIGURAÇÃO
# =============================================================================
def flags_from_args(args):
    endpoints = None
    if getattr(args, "endpoints", None):
        endpoints = [parse_endpoint(e) for e in args.endpoints.split(",")]
    return {
        "n_dbs": args.N, "r": args.r, "s": args.s, "q": args.q, "T": args.T,
        "scheme": args.scheme, "seed": args.seed, "trainer": args.trainer,
        "carrier": args.carrier, "endpoints": endpoints, "output": args.format,
        "mixing": args.mixing, "balanced_shares": args.balanced_shares, "timeout": args.timeout,
    }


def resolve_config(args, adjust=None):
    """RunConfig or an exit code after printing the problems."""
    try:
        cfg = load_run_config(args.config, flags_from_args(args))
    except (ConfigSyntaxError, ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}")
        return None, finish("error", "invalid-config", EXIT_CONFIG)
    if adjust is not None:
        cfg = adjust(cfg)
    errors = run_config_checks(cfg)
    if errors:
        for line in format_config_report(errors):
            print(line)
        reason = "divisibility" if any(e["category"] == "DIVISIBILITY" for e in errors) else "invalid-config"
        return None, finish("error", reason, EXIT_CONFIG)
    return cfg, None


# =============================================================================
# SUBCOMANDOS
# =============================================================================
def cmd_simulate(args) -> int:
    cfg, code = resolve_config(args)
    if cfg is None:
        return code
    if cfg.carrier == SOCKET:
        print("simulate runs in-process; use serve and client for the socket carrier")
        return finish("error", "invalid-config", EXIT_CONFIG)
    sim = Simulation(cfg.scheme_config(), cfg.seed, scheme=cfg.scheme, trainer_kind=cfg.trainer)
    try:
        report = sim.run(cfg.T)
    except SimulationError as exc:
        print(f"correctness failure: {exc}")
        return finish("fail", "oracle-mismatch", EXIT_FAIL)
    except IterationAborted as exc:
        print(f"protocol error: {exc}")
        return finish("fail", "iteration-aborted", EXIT_FAIL)

    columns = NAIVE_COLUMNS if cfg.scheme == NAIVE else LEDGER_COLUMNS
    rows = [ledger_row(t, d, led, cfg.scheme) for t, (d, led) in enumerate(zip(report.schedule, report.iterations), 1)]
    rows.append(ledger_row("total", "-", report.total, cfg.scheme))
    emit_table("per-iteration ledger", columns, rows, cfg.output)
    bits = sim.cfg.modulus.bits
    print(f"symbol size: {bits} bits; overall {report.total.overall * bits} bits")

    check = assert_ledger(report.total, cfg.n_dbs, cfg.r, cfg.s, cfg.scheme, iterations=cfg.T)
    print_check(check)
    if not check.passed:
        return finish("fail", "ledger-mismatch", EXIT_FAIL)
    return finish("pass", "ledger-match", EXIT_PASS)


def cmd_serve(args) -> int:
    cfg, code = resolve_config(args)
    if cfg is None:
        return code
    if not 1 <= args.db_index <= cfg.n_dbs:
        print(f"db-index must be in [1, {cfg.n_dbs}]")
        return finish("error", "invalid-config", EXIT_CONFIG)
    pcfg = cfg.protocol_config()
    states, _ = bootstrap(pcfg, random_params(pcfg, cfg.seed))
    server = DatabaseServer(pcfg, states[args.db_index - 1])
    host, port = "127.0.0.1", args.port
    if cfg.endpoints and port is None:
        host, port = cfg.endpoints[args.db_index - 1]
    try:
        service = DatabaseService(args.db_index, server.handle, host, port or 0)
    except OSError as exc:
        print(f"cannot listen: {exc}")
        return finish("error", "port-unavailable", EXIT_CONNECT)
    print(f"DB {args.db_index} listening on {service.address[0]}:{service.address[1]}", flush=True)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    return finish("pass", "terminated", EXIT_PASS)


def cmd_client(args) -> int:
    cfg, code = resolve_config(args, adjust=lambda c: replace(c, carrier=SOCKET))
    if cfg is None:
        return code
    pcfg = cfg.protocol_config()
    if not 1 <= args.d <= cfg.r:
        print(f"d must be in [1, {cfg.r}]")
        return finish("error", "invalid-config", EXIT_CONFIG)
    channel = SocketChannel(cfg.endpoints, cfg.timeout)
    trainer = TrainerOracle(cfg.trainer, cfg.seed, pcfg.modulus)
    machine = LocalMachine(pcfg, channel, trainer, np.random.default_rng(cfg.seed))
    try:
        result = machine.run_iteration(args.d)
    except TransportConnectError as exc:
        print(f"connection failure: {exc}")
        return finish("error", "connection-failed", EXIT_CONNECT)
    except IterationAborted as exc:
        print(f"protocol error: {exc}")
        if exc.phase == "commit":
            return finish("fail", "partial-commit", EXIT_FAIL)
        if isinstance(exc.cause, TransportConnectError):
            return finish("error", "connection-failed", EXIT_CONNECT)
        if isinstance(exc.cause, RemoteError):
            return finish("fail", "remote-error", EXIT_FAIL)
        return finish("fail", "iteration-aborted", EXIT_FAIL)
    except TransportError as exc:
        print(f"transport failure: {exc}")
        return finish("error", "connection-failed", EXIT_CONNECT)

    emit_table("client ledger", LEDGER_COLUMNS, [ledger_row(result.iteration, args.d, result.ledger, PROPOSED)], cfg.output)
    check = assert_ledger(result.ledger, cfg.n_dbs, cfg.r, cfg.s, PROPOSED, iterations=1)
    print_check(check)
    if not check.passed:
        return finish("fail", "ledger-mismatch", EXIT_FAIL)
    return finish("pass", "ledger-match", EXIT_PASS)


def default_grid():
    """Smallest s = N^r per (N, r), plus the large-r case where the proposed scheme wins."""
    return [(n, r, n**r) for n in (2, 3) for r in (2, 3, 4)] + [(2, 8, 256)]


def report_rows(n, r, s):
    rows = []
    forms = {scheme: closed_form(n, r, s, scheme) for scheme in SCHEMES}
    for label in ("computation", "download", "upload", "overall"):
        values = []
        for scheme in SCHEMES:
            form = forms[scheme]
            if label == "computation":
                value = f"{form.trainer_calls}f(s)+{form.codec_ops}codec"
            else:
                value = getattr(form, label)
            values.extend([FORMULAS[scheme][label], value])
        rows.append([n, r, s, label] + values)
    return rows


def cmd_report(args) -> int:
    fmt = args.format or "tsv"
    if args.N or args.r or args.s:
        # the table prints both schemes, so the proposed constraints apply
        cfg, code = resolve_config(args, adjust=lambda c: replace(c, scheme=PROPOSED))
        if cfg is None:
            return code
        grid = [(cfg.n_dbs, cfg.r, cfg.s)]
        fmt = cfg.output
    else:
        grid = default_grid()
    rows = []
    for n, r, s in grid:
        rows.extend(report_rows(n, r, s))
    emit_table(
        "Overhead comparison",
        ["N", "r", "s", "row", "proposed_formula", "proposed", "naive_formula", "naive"],
        rows, fmt,
    )
    print("=" * 60)
    print("PROPOSED - NAIVE OVERALL: 2r + (3 - r + beta) s".center(60))
    print("=" * 60)
    for n, r, s in grid:
        diff = overall_difference(n, r, s)
        winner = "proposed" if diff < 0 else "naive" if diff > 0 else "tie"
        print(f"  N={n} r={r} s={s}: difference={diff:+d} ({winner} smaller)")
    return finish("pass", "report", EXIT_PASS)


# -----------------------------------------------------------------------------
# AUDITORIA
# -----------------------------------------------------------------------------
def _small_field_mixing(cfg: RunConfig) -> RunConfig:
    if cfg.mixing == VANDERMONDE and cfg.q <= cfg.r + cfg.s:
        logger.info("q=%d <= r+s=%d: using the dense mixing matrix", cfg.q, cfg.r + cfg.s)
        return replace(cfg, mixing=AUTO)
    return cfg


def audit_ledger(cfg: RunConfig) -> int:
    sim = Simulation(cfg.scheme_config(), cfg.seed, scheme=cfg.scheme, trainer_kind=cfg.trainer)
    report = sim.run(cfg.T)
    check = assert_ledger(report.total, cfg.n_dbs, cfg.r, cfg.s, cfg.scheme, iterations=cfg.T)
    print_check(check)
    passed = check.passed
    if cfg.scheme == PROPOSED:
        print("=" * 60)
        print("LOWER-BOUND GAPS".center(60))
        print("=" * 60)
        for row in lower_bound_report(cfg.n_dbs, cfg.r, cfg.s, report.total):
            mark = "ok" if row.ok else "MISMATCH"
            print(f"  {row.quantity:<12} bound={row.bound:<8} achieved={row.achieved:<8} "
                  f"gap={row.gap:<6} expected={row.expected_gap:<6} {mark}")
            passed = passed and row.ok
    return finish("pass", "ledger-match", EXIT_PASS) if passed else finish("fail", "ledger-mismatch", EXIT_FAIL)


def audit_privacy(cfg: RunConfig, args) -> int:
    variant = Variant(args.variant)
    pcfg = cfg.protocol_config()
    try:
        verdicts = view_distribution_equality(
            pcfg, cfg.T, scope=args.scope, variant=variant, budget=args.budget
        )
    except ScaleTooLargeError as exc:
        print(str(exc))
        return finish("inconclusive", "scale-too-large", EXIT_CONFIG)
    for v in verdicts:
        print(f"  {v.line()}")
    print("  note: each local machine learns the previous chooser's row p from alpha_{t-1}")
    n = pcfg.message_len
    for i, (lo, hi) in enumerate(share_bounds(n, pcfg.n_dbs, pcfg.balanced_shares), 1):
        print(f"  note: db={i} holds {pcfg.mixing.block_rank(range(lo, hi))} of {n} equations on M_t")
    if all(v.equal for v in verdicts):
        return finish("pass", "views-identical", EXIT_PASS)
    return finish("fail", "views-differ", EXIT_FAIL)


def audit_witness(cfg: RunConfig, args) -> int:
    variant = Variant(args.variant)
    scheme_cfg = cfg.scheme_config()
    sim = Simulation(scheme_cfg, cfg.seed, scheme=cfg.scheme, trainer_kind=cfg.trainer, variant=variant)
    sim.run(cfg.T)
    statuses = []
    for db in sim.databases:
        view = TranscriptView.from_database(db, args.scope)
        for d_alt in range(1, cfg.r + 1):
            result = witness_search(view, d_alt, scheme_cfg, sim.initial, args.budget, variant)
            statuses.append(result.status)
            print(f"  db={db.db_index} d_alt={d_alt} status={result.status} explored={result.explored}")
    if all(s == FOUND for s in statuses):
        return finish("pass", "witnesses-found", EXIT_PASS)
    if INCONCLUSIVE in statuses:
        return finish("inconclusive", "budget-exhausted", EXIT_CONFIG)
    return finish("fail", "no-witness", EXIT_FAIL)


def audit_sampled(cfg: RunConfig, args) -> int:
    verdicts = sampled_pir_privacy(cfg.protocol_config().pir_config(), args.samples, cfg.seed)
    for v in verdicts:
        print(f"  db={v.db_index} chi2={v.statistic:.3f} dof={v.dof} p={v.p_value:.4f} "
              f"structure={'ok' if v.structural_ok else 'BROKEN'}")
    if all(v.passed for v in verdicts):
        return finish("pass", "homogeneous", EXIT_PASS)
    return finish("fail", "heterogeneous", EXIT_FAIL)


def cmd_audit(args) -> int:
    adjust = _small_field_mixing if args.mode in ("privacy", "witness") else None
    cfg, code = resolve_config(args, adjust)
    if cfg is None:
        return code
    if args.mode == "ledger":
        return audit_ledger(cfg)
    if args.mode == "privacy":
        return audit_privacy(cfg, args)
    if args.mode == "witness":
        return audit_witness(cfg, args)
    return audit_sampled(cfg, args)


# =============================================================================
# ARGUMENTOS
# =============================================================================
def add_common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--N", type=int, help="number of databases")
    p.add_argument("--r", type=int, help="number of submodels")
    p.add_argument("--s", type=int, help="parameters per submodel")
    p.add_argument("--q", type=int, help="prime field modulus")
    p.add_argument("--T", type=int, help="iterations")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--seed", type=int, help="64-bit seed")
    p.add_argument("--trainer", choices=TRAINER_KINDS)
    p.add_argument("--carrier", choices=CARRIERS)
    p.add_argument("--endpoints", help="host:port,host:port,... one per database")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--mixing", choices=MIXING_KINDS)
    p.add_argument("--balanced-shares", dest="balanced_shares", action="store_const", const=True)
    p.add_argument("--timeout", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="submodel-pir", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run T seeded iterations in-process")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="host one database on a TCP port")
    add_common(p)
    p.add_argument("--db-index", dest="db_index", type=int, required=True)
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client", help="run one iteration against N endpoints")
    add_common(p)
    p.add_argument("--d", type=int, required=True, help="submodel to train (1-based)")
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("report", help="overhead comparison table")
    add_common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("audit", help="ledger, privacy, witness or sampled audit")
    add_common(p)
    p.add_argument("--mode", choices=("ledger", "privacy", "witness", "sampled"), default="ledger")
    p.add_argument("--scope", choices=SCOPES, default=STORED_STATE)
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.HONEST.value)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
