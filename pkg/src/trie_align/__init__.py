"""Streaming conformance checking over a prefix trie of modeled behavior.

The package ingests unbounded multi-case event streams and incrementally
maintains prefix-alignments between each case and the behavior stored in
an immutable prefix trie built from sample model traces. Per-case survivor
states age out under a decay policy, and a bounded look-ahead search keeps
model-move exploration cheap. A dynamic-programming oracle provides true
optimal alignment costs for verification, and a replay/noise/TCP harness
supports stress testing.
"""

from .alignment import (
    Alignment,
    InvalidMoveError,
    Move,
    alignment_pairs,
    complete_alignment,
    cost as alignment_cost,
    log_move,
    model_move,
    render_text,
    sync_move,
    validate,
)
from .engine import (
    BufferStats,
    DecayPolicy,
    Engine,
    EngineConfig,
    ProcessResult,
    State,
    UnknownCaseError,
    decay_time,
    expand_model_moves,
    parse_engine_settings,
)
from .events import (
    ActivityTable,
    Event,
    ParseError,
    ProxyLog,
    Trace,
    parse_event_log,
    parse_proxy_log,
    serialize_event_log,
    serialize_proxy_log,
)
from .oracle import (
    BoundTooSmallError,
    exhaustive_prefix,
    optimal_complete,
    optimal_prefix,
    optimal_prefix_costs,
)
from .stream import (
    NoiseConfig,
    Noiser,
    RunMetrics,
    StreamFrame,
    StreamServer,
    inject_noise,
    parse_frame,
    replay,
)
from .trie import Trie, TrieError, TrieFormatError, build_trie, load_trie, serialize_trie

__version__ = "0.1.0"

__all__ = [
    "ActivityTable",
    "Alignment",
    "BoundTooSmallError",
    "BufferStats",
    "DecayPolicy",
    "Engine",
    "EngineConfig",
    "Event",
    "InvalidMoveError",
    "Move",
    "NoiseConfig",
    "Noiser",
    "ParseError",
    "ProcessResult",
    "ProxyLog",
    "RunMetrics",
    "State",
    "StreamFrame",
    "StreamServer",
    "Trace",
    "Trie",
    "TrieError",
    "TrieFormatError",
    "UnknownCaseError",
    "alignment_cost",
    "alignment_pairs",
    "build_trie",
    "complete_alignment",
    "decay_time",
    "exhaustive_prefix",
    "expand_model_moves",
    "inject_noise",
    "load_trie",
    "log_move",
    "model_move",
    "optimal_complete",
    "optimal_prefix",
    "optimal_prefix_costs",
    "parse_engine_settings",
    "parse_event_log",
    "parse_frame",
    "parse_proxy_log",
    "render_text",
    "replay",
    "serialize_event_log",
    "serialize_proxy_log",
    "serialize_trie",
    "sync_move",
    "validate",
]
