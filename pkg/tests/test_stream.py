from __future__ import annotations

import json
import math
import socket

import pytest

from trie_align import (
    DecayPolicy,
    Engine,
    EngineConfig,
    NoiseConfig,
    Noiser,
    StreamFrame,
    StreamServer,
    inject_noise,
    parse_event_log,
    parse_frame,
)
from trie_align.stream import (
    EngineSink,
    FrameError,
    TcpSink,
    interleave_by_timestamp,
    interleave_round_robin,
    replay,
)

SAMPLE_LOG = """\
case,activity,timestamp
1,a,2022-08-01 15:00
1,b,2022-08-01 15:02
2,a,2022-08-01 15:03
2,b,2022-08-01 15:06
1,c,2022-08-01 15:06
"""


def sample_traces():
    return parse_event_log(SAMPLE_LOG)


class TestFrames:
    def test_json_line_round_trip(self):
        frame = StreamFrame("17", "a", "2022-08-01 15:00")
        assert parse_frame(frame.to_json_line()) == frame

    def test_timestamp_optional(self):
        assert parse_frame('{"case": "1", "activity": "a"}') == StreamFrame("1", "a")

    @pytest.mark.parametrize(
        "line",
        [
            "not json",
            "[1, 2]",
            '{"case": "1"}',
            '{"activity": "a"}',
            '{"case": "", "activity": "a"}',
            '{"case": "1", "activity": "a", "ts": 5}',
        ],
    )
    def test_malformed_lines_rejected(self, line):
        with pytest.raises(FrameError):
            parse_frame(line)


class TestInterleaving:
    def test_round_robin_order(self):
        frames = interleave_round_robin(sample_traces())
        assert [(f.case_id, f.activity) for f in frames] == [
            ("1", "a"),
            ("2", "a"),
            ("1", "b"),
            ("2", "b"),
            ("1", "c"),
        ]

    def test_by_timestamp_matches_file_order_on_ties(self):
        frames = interleave_by_timestamp(sample_traces())
        assert [(f.case_id, f.activity) for f in frames] == [
            ("1", "a"),
            ("1", "b"),
            ("2", "a"),
            ("2", "b"),
            ("1", "c"),
        ]

    def test_empty_log(self):
        assert interleave_round_robin([]) == []


class TestReplay:
    def test_exactly_once_in_order_delivery(self, workflow_trie):
        class Recorder:
            def __init__(self):
                self.seen = []

            def send(self, frame):
                self.seen.append((frame.case_id, frame.activity))
                return None

        recorder = Recorder()
        metrics = replay(sample_traces(), recorder)
        assert metrics.events_processed == 5
        assert sorted(recorder.seen) == sorted(
            (ev.case_id, ev.activity) for tr in sample_traces() for ev in tr.events
        )
        per_case: dict[str, list[str]] = {}
        for case_id, activity in recorder.seen:
            per_case.setdefault(case_id, []).append(activity)
        assert per_case == {"1": ["a", "b", "c"], "2": ["a", "b"]}

    def test_engine_sink_metrics(self, workflow_trie):
        engine = Engine(EngineConfig(trie=workflow_trie, decay=DecayPolicy.fixed(2)))
        sink = EngineSink(engine)
        metrics = replay(sample_traces(), sink)
        assert metrics.events_processed == 5
        assert metrics.mean_event_micros > 0
        assert metrics.max_buffer_states >= metrics.max_resident_cases == 2
        assert metrics.computation_micros + metrics.idle_micros == pytest.approx(
            metrics.wall_micros, rel=0.25
        )

    def test_empty_replay(self, workflow_trie):
        engine = Engine(EngineConfig(trie=workflow_trie))
        metrics = replay([], EngineSink(engine))
        assert metrics.events_processed == 0
        assert metrics.computation_micros == 0

    def test_throttled_replay_accrues_idle_time(self, workflow_trie):
        engine = Engine(EngineConfig(trie=workflow_trie))
        metrics = replay(sample_traces(), EngineSink(engine), rate=200.0)
        assert metrics.idle_micros > 0
        assert metrics.wall_micros >= 4 * 5000  # four inter-event gaps at 5 ms


class TestNoise:
    def test_zero_level_is_identity(self):
        trace = list("abcde")
        assert inject_noise(trace, NoiseConfig(level=0.0, seed=1), "abcde") == trace

    def test_forced_deletion_empties_trace(self):
        out = inject_noise(["a", "b"], NoiseConfig(level=1.0, ops=("delete",), seed=3), "ab")
        assert out == []

    def test_seeded_runs_are_bit_reproducible(self):
        config = NoiseConfig(level=0.3, seed=42)
        one = Noiser(config, "abcde")
        two = Noiser(config, "abcde")
        traces = [list("abcdeabcde") for _ in range(20)]
        assert [one.apply(t) for t in traces] == [two.apply(t) for t in traces]

    def test_mutation_count_within_binomial_interval(self):
        # 10,000 positions at 5%: binomial mean 500, sd ~21.8; 99% interval.
        noiser = Noiser(NoiseConfig(level=0.05, seed=42), "abcde")
        for _ in range(1000):
            noiser.apply(list("abcdeabcde"))
        n, p = noiser.positions, 0.05
        assert n == 10_000
        sd = math.sqrt(n * p * (1 - p))
        low, high = n * p - 2.576 * sd, n * p + 2.576 * sd
        assert low <= noiser.mutations <= high

    def test_insert_can_introduce_fresh_symbols(self):
        noiser = Noiser(NoiseConfig(level=1.0, ops=("insert",), seed=0), "ab")
        out = noiser.apply(list("abababab"))
        assert len(out) == 16
        assert any(symbol.startswith("noise_") for symbol in out)

    def test_swap_exchanges_neighbors(self):
        out = inject_noise(["a", "b"], NoiseConfig(level=1.0, ops=("swap",), seed=5), "ab")
        assert out == ["b", "a"]

    def test_level_validation(self):
        with pytest.raises(ValueError):
            NoiseConfig(level=1.5)
        with pytest.raises(ValueError):
            NoiseConfig(level=0.5, ops=())
        with pytest.raises(ValueError):
            NoiseConfig(level=0.5, ops=("scramble",))


@pytest.fixture
def running_server(workflow_trie):
    engine = Engine(EngineConfig(trie=workflow_trie, decay=DecayPolicy.fixed(2)))
    server = StreamServer(engine, port=0)
    server.start()
    yield server
    server.stop()


def send_lines(address, lines: list[str]) -> list[str]:
    """Send raw lines; returns one response line per trailing read request."""
    with socket.create_connection(address, timeout=5.0) as sock:
        file = sock.makefile("rw", encoding="utf-8", newline="\n")
        for line in lines:
            file.write(line + "\n")
        file.flush()
        return [file.readline()]


class TestStreamServer:
    def test_frames_feed_engine_in_order(self, running_server, workflow_trie):
        frames = [StreamFrame("c1", a).to_json_line() for a in "ab"]
        answer = send_lines(running_server.address, frames + ['{"cmd":"metrics"}'])
        metrics = json.loads(answer[0])
        assert metrics["events_processed"] == 2
        assert running_server.engine.conformance_cost("c1") == 0

    def test_malformed_frame_is_counted_and_skipped(self, running_server):
        lines = [
            StreamFrame("c2", "a").to_json_line(),
            "this is not json",
            StreamFrame("c2", "b").to_json_line(),
            '{"cmd":"metrics"}',
        ]
        metrics = json.loads(send_lines(running_server.address, lines)[0])
        assert metrics["events_processed"] == 2
        assert metrics["frames_malformed"] == 1

    def test_shutdown_flushes_final_report(self, workflow_trie):
        engine = Engine(EngineConfig(trie=workflow_trie))
        server = StreamServer(engine, port=0)
        server.start()
        try:
            lines = [StreamFrame("c1", "a").to_json_line(), '{"cmd":"shutdown"}']
            final = json.loads(send_lines(server.address, lines)[0])
            assert final["events_processed"] == 1
            assert server.wait(timeout=5.0)
        finally:
            server.stop()

    def test_tcp_sink_round_trip(self, running_server):
        host, port = running_server.address
        sink = TcpSink(host, port)
        for activity in "abce":
            sink.send(StreamFrame("c9", activity))
        metrics = sink.request_metrics()
        sink.close()
        assert metrics["events_processed"] == 4
        assert running_server.engine.conformance_cost("c9") == 0

    def test_tcp_sink_connect_failure_reports_retries(self):
        with pytest.raises(ConnectionError, match="3 attempts"):
            TcpSink("127.0.0.1", 9, retries=3, retry_delay=0.01)
