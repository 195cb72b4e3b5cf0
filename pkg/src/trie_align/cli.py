"""Command-line front end: trie building, checking, serving, simulation,
oracle comparison, and benchmarking.

Exit codes: 0 on success, 2 on input errors, 3 on connection errors. Every
subcommand prints a human-readable report by default and a single JSON
document with ``--json``. Set ``TRIE_ALIGN_LOG`` to a logging level name
(e.g. ``debug``) for verbose output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
import time
from pathlib import Path
from statistics import median

from . import oracle as oracle_mod
from .engine import DecayPolicy, Engine, EngineConfig, parse_engine_settings
from .events import ParseError, parse_event_log, parse_proxy_log
from .stream import (
    EngineSink,
    NoiseConfig,
    Noiser,
    StreamFrame,
    TcpSink,
    replay,
    serve as serve_stream,
)
from .trie import Trie, TrieError, TrieFormatError, build_trie, load_trie, serialize_trie

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONNECT = 3

ORACLE_CELL_GUARD = 10_000_000


def _setup_logging() -> None:
    level_name = os.environ.get("TRIE_ALIGN_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_trie_file(path: str) -> Trie:
    return load_trie(Path(path).read_bytes())


def _decay_policy(args: argparse.Namespace) -> DecayPolicy:
    if getattr(args, "engine_config", None):
        policy, _ = parse_engine_settings(_read_text(args.engine_config))
        return policy
    choice = args.decay
    if choice == "discounted":
        return DecayPolicy.discounted(df=args.df, min_dt=args.min_dt)
    if choice.startswith("fixed:"):
        return DecayPolicy.fixed(int(choice.split(":", 1)[1]))
    raise ValueError(f"--decay must be 'fixed:N' or 'discounted', got {choice!r}")


def _add_decay_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--decay", default="discounted", help="fixed:N or discounted (default)")
    parser.add_argument("--df", type=float, default=0.3, help="discounting factor (default 0.3)")
    parser.add_argument("--min-dt", type=int, default=3, help="minimum decay time (default 3)")
    parser.add_argument(
        "--engine-config",
        default=None,
        help="JSON settings file overriding the decay flags",
    )


def _emit(report: dict, as_json: bool, human_lines: list[str]) -> None:
    if as_json:
        print(json.dumps(report, indent=2))
    else:
        for line in human_lines:
            print(line)


# -- subcommands ------------------------------------------------------------


def cmd_build_trie(args: argparse.Namespace) -> int:
    try:
        text = _read_text(args.proxy_log)
    except OSError as exc:
        return _fail(f"cannot read proxy log: {exc}", EXIT_INPUT)
    try:
        proxy = parse_proxy_log(text)
        started = time.perf_counter()
        trie = build_trie(proxy)
        build_ms = (time.perf_counter() - started) * 1000.0
    except (ParseError, TrieError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    try:
        Path(args.out).write_bytes(serialize_trie(trie))
    except OSError as exc:
        return _fail(f"cannot write trie: {exc}", EXIT_INPUT)

    report = {
        "node_count": trie.node_count,
        "end_count": trie.end_count,
        "avg_leaf_depth": trie.avg_leaf_depth,
        "max_branching": trie.max_branching,
        "build_ms": round(build_ms, 3),
        "out": args.out,
    }
    _emit(
        report,
        args.json,
        [
            f"trie written to {args.out}",
            f"  node_count (incl. root): {trie.node_count}",
            f"  end_count:               {trie.end_count}",
            f"  avg_leaf_depth:          {trie.avg_leaf_depth:g}",
            f"  max_branching:           {trie.max_branching}",
            f"  build time:              {build_ms:.1f} ms",
        ],
    )
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    try:
        trie = _load_trie_file(args.trie)
    except (OSError, TrieFormatError) as exc:
        return _fail(f"cannot load trie: {exc}", EXIT_INPUT)
    try:
        traces = parse_event_log(_read_text(args.log))
    except OSError as exc:
        return _fail(f"cannot read log: {exc}", EXIT_INPUT)
    except ParseError as exc:
        return _fail(str(exc), EXIT_INPUT)
    try:
        policy = _decay_policy(args)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    emit_alignments = args.records is not None
    if args.engine_config:
        _, emit_alignments = parse_engine_settings(_read_text(args.engine_config))
    engine = Engine(
        EngineConfig(trie=trie, decay=policy, emit_per_event_alignment=emit_alignments)
    )
    records_file = open(args.records, "w", encoding="utf-8") if args.records else None
    per_trace = []
    total_micros = 0.0
    total_events = 0
    for trace in traces:
        events_micros = 0.0
        per_event_costs = []
        for ev in trace.events:
            result = engine.process(trace.case_id, ev.activity, ev.timestamp)
            events_micros += result.processing_micros
            if args.per_event:
                per_event_costs.append(result.best_cost)
            if records_file is not None:
                records_file.write(json.dumps(result.to_record(trie.alphabet.label)) + "\n")
        best = engine.best_state(trace.case_id)
        prefix_cost = best.cost
        complete_cost = best.cost + trie.min_to_end[best.node]
        row = {
            "case_id": trace.case_id,
            "events": len(trace),
            "prefix_cost": prefix_cost,
            "complete_cost": complete_cost,
            "micros": round(events_micros, 1),
        }
        if args.per_event:
            row["per_event_costs"] = per_event_costs
        per_trace.append(row)
        total_micros += events_micros
        total_events += len(trace)
    if records_file is not None:
        records_file.close()

    n = len(per_trace)
    aggregate = {
        "traces": n,
        "events": total_events,
        "mean_cost_per_trace": round(sum(r["prefix_cost"] for r in per_trace) / n, 4) if n else 0.0,
        "mean_complete_cost_per_trace": round(sum(r["complete_cost"] for r in per_trace) / n, 4)
        if n
        else 0.0,
        "mean_ms_per_trace": round(total_micros / 1000.0 / n, 4) if n else 0.0,
        "mean_ms_per_event": round(total_micros / 1000.0 / total_events, 4) if total_events else 0.0,
    }
    report = {"per_trace": per_trace, "aggregate": aggregate}
    lines = [
        f"{r['case_id']}: prefix={r['prefix_cost']} complete={r['complete_cost']} events={r['events']}"
        + (f" per_event={r['per_event_costs']}" if args.per_event else "")
        for r in per_trace
    ]
    lines.append(
        f"-- {aggregate['traces']} traces, {aggregate['events']} events | "
        f"mean cost/trace {aggregate['mean_cost_per_trace']} | "
        f"mean ms/trace {aggregate['mean_ms_per_trace']} | "
        f"mean ms/event {aggregate['mean_ms_per_event']}"
    )
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    try:
        trie = _load_trie_file(args.trie)
        traces = parse_event_log(_read_text(args.log))
    except (OSError, TrieFormatError, ParseError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    for trace in traces:
        cells = len(trace) * trie.node_count
        if cells > ORACLE_CELL_GUARD:
            return _fail(
                f"case {trace.case_id}: {len(trace)} events x {trie.node_count} nodes = "
                f"{cells} DP cells exceeds the {ORACLE_CELL_GUARD} guard; shorten the trace, "
                "use a smaller trie, or rely on the streaming engine instead",
                EXIT_INPUT,
            )

    table = trie.alphabet
    compute = oracle_mod.optimal_prefix if args.mode == "prefix" else oracle_mod.optimal_complete
    engine = Engine(EngineConfig(trie=trie)) if args.compare else None

    per_trace = []
    exact_matches = 0
    total_opt = 0
    total_engine = 0
    for trace in traces:
        codes = [table.intern(a) for a in trace.activities]
        result = compute(codes, trie)
        row = {"case_id": trace.case_id, "optimal_cost": result.cost}
        if engine is not None:
            for ev in trace.events:
                engine.process(trace.case_id, ev.activity, ev.timestamp)
            best = engine.best_state(trace.case_id)
            engine_cost = best.cost
            if args.mode == "complete":
                engine_cost += trie.min_to_end[best.node]
            row["engine_cost"] = engine_cost
            row["error"] = engine_cost - result.cost
            total_opt += result.cost
            total_engine += engine_cost
            if engine_cost == result.cost:
                exact_matches += 1
        per_trace.append(row)

    report: dict = {"mode": args.mode, "per_trace": per_trace}
    lines = [
        f"{r['case_id']}: optimal={r['optimal_cost']}"
        + (f" engine={r['engine_cost']} error={r['error']}" if "engine_cost" in r else "")
        for r in per_trace
    ]
    if engine is not None:
        ratio = (total_engine / total_opt) if total_opt else None
        aggregate = {
            "traces": len(per_trace),
            "total_optimal_cost": total_opt,
            "total_engine_cost": total_engine,
            "cost_ratio": round(ratio, 4) if ratio is not None else None,
            "exact_matches": exact_matches,
        }
        report["aggregate"] = aggregate
        if ratio is None:
            lines.append(
                f"-- all costs zero; exact matches {exact_matches}/{len(per_trace)}"
            )
        else:
            lines.append(
                f"-- cost ratio (engine/optimal) {aggregate['cost_ratio']} | "
                f"exact matches {exact_matches}/{len(per_trace)}"
            )
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        trie = _load_trie_file(args.trie)
        policy = _decay_policy(args)
    except (OSError, TrieFormatError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)
    host, port = _parse_addr(args.listen)
    engine = Engine(EngineConfig(trie=trie, decay=policy))
    try:
        report = serve_stream(engine, host=host, port=port, queue_size=args.queue_size)
    except OSError as exc:
        return _fail(f"cannot bind {args.listen}: {exc}", EXIT_CONNECT)
    print(json.dumps(report))
    return EXIT_OK


def _parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def simulate_stream(
    trie: Trie,
    noise_level: float,
    seed: int,
    max_events: int | None,
    duration: float | None,
    cases_in_flight: int = 32,
):
    """Generate an endless interleaved stream of noisy model traces.

    Traces are root-to-end paths of the trie sampled with replacement;
    each sampled trace becomes a fresh case. Yields frames until the event
    budget or the duration runs out. Fully deterministic for a fixed seed
    when bounded by ``max_events``.
    """
    rng = random.Random(seed)
    noiser = Noiser(NoiseConfig(level=noise_level, seed=seed + 1), trie.model_activity_labels())
    end_ids = trie.end_node_ids()
    label_of = trie.alphabet.label

    active: list[tuple[str, list[str], int]] = []  # case id, activities, position
    case_counter = 0
    emitted = 0
    deadline = time.monotonic() + duration if duration else None

    while True:
        if max_events is not None and emitted >= max_events:
            return
        if deadline is not None and time.monotonic() >= deadline:
            return
        while len(active) < cases_in_flight:
            end = end_ids[rng.randrange(len(end_ids))]
            activities = noiser.apply([label_of(c) for c in trie.end_path_codes(end)])
            case_counter += 1
            if activities:
                active.append((f"sim-{case_counter}", activities, 0))
        case_id, activities, pos = active.pop(0)
        yield StreamFrame(case_id, activities[pos])
        emitted += 1
        if pos + 1 < len(activities):
            active.append((case_id, activities, pos + 1))


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        trie = _load_trie_file(args.trie)
        policy = _decay_policy(args)
    except (OSError, TrieFormatError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    frames = simulate_stream(
        trie,
        noise_level=args.noise,
        seed=args.seed,
        max_events=args.max_events,
        duration=args.duration,
        cases_in_flight=args.cases_in_flight,
    )

    if args.connect:
        host, port = _parse_addr(args.connect)
        try:
            sink = TcpSink(host, port)
        except ConnectionError as exc:
            return _fail(str(exc), EXIT_CONNECT)
        sent = 0
        started = time.perf_counter()
        for frame in frames:
            sink.send(frame)
            sent += 1
        server_metrics = sink.request_metrics()
        sink.close()
        wall = (time.perf_counter() - started) * 1e6
        report = {"sent": sent, "wall_micros": round(wall, 1), "server": server_metrics}
        _emit(report, args.json, [f"sent {sent} frames", f"server metrics: {server_metrics}"])
        return EXIT_OK

    engine = Engine(EngineConfig(trie=trie, decay=policy))
    sink = EngineSink(engine)
    started = time.perf_counter()
    period = 1.0 / args.rate if args.rate else 0.0
    idle = 0.0
    next_due = started
    count = 0
    for frame in frames:
        if period:
            now = time.perf_counter()
            if now < next_due:
                time.sleep(next_due - now)
                idle += (time.perf_counter() - now) * 1e6
            next_due += period
        sink.send(frame)
        count += 1
    wall = (time.perf_counter() - started) * 1e6

    latencies = sink.latencies
    completed_costs: list[int] = []
    for case_id in engine.case_ids():
        completed_costs.append(engine.conformance_cost(case_id))
    stats = engine.buffer_stats()
    report = {
        "events_processed": count,
        "cases": stats.cases,
        "mean_case_cost": round(sum(completed_costs) / len(completed_costs), 4)
        if completed_costs
        else 0.0,
        "computation_micros": round(sum(latencies), 1),
        "idle_micros": round(max(idle, wall - sum(latencies)), 1),
        "wall_micros": round(wall, 1),
        "mean_event_micros": round(sum(latencies) / len(latencies), 3) if latencies else 0.0,
        "p50_event_micros": round(median(latencies), 3) if latencies else 0.0,
        "max_event_micros": round(max(latencies), 3) if latencies else 0.0,
        "max_buffer_states": engine.peak_total_states,
        "max_resident_cases": stats.cases,
        "noise": args.noise,
        "seed": args.seed,
    }
    _emit(
        report,
        args.json,
        [
            f"processed {count} events over {stats.cases} cases "
            f"(noise {args.noise}, seed {args.seed})",
            f"  mean case cost:    {report['mean_case_cost']}",
            f"  mean event micros: {report['mean_event_micros']}",
            f"  p50 event micros:  {report['p50_event_micros']}",
            f"  max buffer states: {report['max_buffer_states']}",
        ],
    )
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        trie = _load_trie_file(args.trie)
        traces = parse_event_log(_read_text(args.log))
        policy = _decay_policy(args)
    except (OSError, TrieFormatError, ParseError, ValueError) as exc:
        return _fail(str(exc), EXIT_INPUT)

    def one_run() -> tuple[list[float], Engine]:
        engine = Engine(EngineConfig(trie=trie, decay=policy))
        sink = EngineSink(engine)
        replay(traces, sink)
        return sink.latencies, engine

    if args.repeat > 1:
        one_run()  # warm-up excluded from stats
    pooled: list[float] = []
    max_states = 0
    bound_violations = 0
    for _ in range(args.repeat):
        latencies, engine = one_run()
        pooled.extend(latencies)
        max_states = max(max_states, engine.peak_total_states)
        limit_factor = trie.max_branching + 1
        for case_id in engine.case_ids():
            stats = engine.case_stats(case_id)
            if stats.peak_states > limit_factor * stats.max_decay_issued:
                bound_violations += 1

    pooled.sort()
    n = len(pooled)
    report = {
        "runs": args.repeat,
        "events_per_run": n // args.repeat if args.repeat else 0,
        "p50_micros": round(pooled[n // 2], 3) if n else 0.0,
        "p95_micros": round(pooled[min(n - 1, int(n * 0.95))], 3) if n else 0.0,
        "max_micros": round(pooled[-1], 3) if n else 0.0,
        "max_buffer_states": max_states,
        "buffer_bound_violations": bound_violations,
    }
    _emit(
        report,
        args.json,
        [
            f"{args.repeat} run(s), {report['events_per_run']} events each",
            f"  p50:  {report['p50_micros']} us",
            f"  p95:  {report['p95_micros']} us",
            f"  max:  {report['max_micros']} us",
            f"  max buffer states: {max_states}",
            f"  buffer bound violations: {bound_violations}",
        ],
    )
    return EXIT_OK if bound_violations == 0 else 1


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trie-align",
        description="Streaming conformance checking against a prefix trie of modeled behavior.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-trie", help="build and serialize a trie from a proxy log")
    p.add_argument("--proxy-log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_build_trie)

    p = sub.add_parser("check", help="replay an event log through the engine")
    p.add_argument("--trie", required=True)
    p.add_argument("--log", required=True)
    _add_decay_flags(p)
    p.add_argument("--per-event", action="store_true", help="include per-event costs")
    p.add_argument(
        "--records",
        default=None,
        help="write one JSON result record per event (with alignments) to this file",
    )
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="optimal alignment costs (desk-scale inputs only)")
    p.add_argument("--trie", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--mode", choices=["prefix", "complete"], default="prefix")
    p.add_argument("--compare", action="store_true", help="also run the engine and report errors")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("serve", help="accept newline-delimited JSON frames over TCP")
    p.add_argument("--trie", required=True)
    p.add_argument("--listen", default="127.0.0.1:9099", help="host:port (default 127.0.0.1:9099)")
    p.add_argument("--queue-size", type=int, default=4096)
    _add_decay_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="stream noisy model traces into an engine or a server")
    p.add_argument("--trie", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--connect", help="host:port of a running server")
    group.add_argument("--inproc", action="store_true", help="drive an in-process engine (default)")
    p.add_argument("--noise", type=float, default=0.0, help="mutation probability (e.g. 0.05)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=None, help="run for N seconds")
    p.add_argument("--max-events", type=int, default=None, help="stop after N events")
    p.add_argument("--rate", type=float, default=None, help="throttle to events/second")
    p.add_argument("--cases-in-flight", type=int, default=32)
    _add_decay_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="per-event latency distribution over repeated replays")
    p.add_argument("--trie", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--repeat", type=int, default=1)
    _add_decay_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "simulate" and args.duration is None and args.max_events is None:
        args.max_events = 10_000
    try:
        code = args.func(args)
    except KeyboardInterrupt:
        code = 130
    if argv is None:  # invoked as a console script
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
