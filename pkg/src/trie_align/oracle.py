"""Brute-force optimal alignment costs over the trie, for verification.

Dynamic programming over (trie node, trace position) cells gives the true
optimal prefix and complete alignment costs; a plain enumerative search
over move sequences double-checks the DP on tiny instances. Everything
here is a correctness oracle, deliberately independent of the streaming
engine's data structures, and makes no attempt at being fast.

Recurrence, for node ``n`` with parent ``p`` and the 1-based trace
position ``i``::

    cost[n][i] = min( cost[p][i-1] + (0 if label(n) == trace[i] else 2),
                      cost[p][i]   + 1,      # model move onto n
                      cost[n][i-1] + 1 )     # log move at n

with ``cost[root][0] = 0``, ``cost[n][0] = level(n)`` and
``cost[root][i] = i``. The mismatch (substitution) branch costs a log
move plus a model move and is never strictly cheaper than composing the
two single-move branches, so reconstruction only ever uses synchronous,
model, and log steps, preferred in that order.

The optimal prefix cost is the minimum of the last column over all nodes;
the complete cost additionally pays each node's remaining distance to an
end node. All functions are pure.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

from .alignment import Alignment, Move, log_move, model_move, sync_move
from .trie import ROOT, Trie

_SYNC, _MODEL, _LOG = 1, 2, 3


class BoundTooSmallError(ValueError):
    """Raised when the enumeration bound cannot certify an optimal cost."""


class OracleResult(NamedTuple):
    cost: int
    alignment: Alignment


def _dp_table(trace: Sequence[int], trie: Trie) -> tuple[list[list[int]], list[bytearray]]:
    """All DP columns and backpointers; column i covers trace[:i]."""
    n = trie.node_count
    parents = trie.parents
    labels = trie.labels

    col0 = [trie.levels[node] for node in range(n)]
    columns = [col0]
    pointers = [bytearray(n)]  # column 0 is all model moves, no pointers needed

    prev = col0
    for i in range(1, len(trace) + 1):
        symbol = trace[i - 1]
        cur = [0] * n
        back = bytearray(n)
        cur[ROOT] = i
        back[ROOT] = _LOG
        for node in range(1, n):  # parent ids precede child ids
            parent = parents[node]
            if labels[node] == symbol:
                best = prev[parent]
                tag = _SYNC
            else:
                best = prev[parent] + 2  # log+model composition bound
                tag = _MODEL
            via_model = cur[parent] + 1
            if via_model < best:
                best = via_model
                tag = _MODEL
            via_log = prev[node] + 1
            if via_log < best:
                best = via_log
                tag = _LOG
            cur[node] = best
            back[node] = tag
        columns.append(cur)
        pointers.append(back)
        prev = cur
    return columns, pointers


def _reconstruct(
    trace: Sequence[int],
    trie: Trie,
    pointers: list[bytearray],
    end_node: int,
) -> list[Move]:
    moves: list[Move] = []
    node, i = end_node, len(trace)
    while node != ROOT or i > 0:
        if node == ROOT:
            moves.append(log_move(trace[i - 1]))
            i -= 1
            continue
        tag = pointers[i][node] if i > 0 else _MODEL
        if tag == _SYNC:
            moves.append(sync_move(trace[i - 1]))
            node = trie.parents[node]
            i -= 1
        elif tag == _MODEL:
            moves.append(model_move(trie.labels[node]))
            node = trie.parents[node]
        else:
            moves.append(log_move(trace[i - 1]))
            i -= 1
    moves.reverse()
    return moves


def optimal_prefix(trace: Sequence[int], trie: Trie) -> OracleResult:
    """True optimal prefix-alignment of ``trace`` against the trie.

    The model path may stop at any node (including the root). An empty
    trace costs zero with an empty alignment. Ties between end nodes fall
    to the smaller node id, and reconstruction prefers synchronous over
    model over log steps, so the returned alignment is deterministic.
    """
    if not trace:
        return OracleResult(0, Alignment((), kind="prefix"))
    columns, pointers = _dp_table(trace, trie)
    last = columns[-1]
    end_node = min(range(trie.node_count), key=lambda n: (last[n], n))
    moves = _reconstruct(trace, trie, pointers, end_node)
    return OracleResult(last[end_node], Alignment(tuple(moves), kind="prefix"))


def optimal_prefix_costs(trace: Sequence[int], trie: Trie) -> list[int]:
    """Optimal prefix cost for every prefix of ``trace`` in one DP pass.

    Entry ``i`` is the optimal cost for ``trace[:i]``; entry 0 is always 0.
    """
    if not trace:
        return [0]
    columns, _ = _dp_table(trace, trie)
    return [min(column) for column in columns]


def optimal_complete(trace: Sequence[int], trie: Trie) -> OracleResult:
    """True optimal complete alignment: the model path must reach an end node."""
    columns, pointers = _dp_table(trace, trie)
    last = columns[-1]
    min_to_end = trie.min_to_end
    end_node = min(range(trie.node_count), key=lambda n: (last[n] + min_to_end[n], n))
    moves = _reconstruct(trace, trie, pointers, end_node)
    moves.extend(model_move(code) for code in trie.min_completion_path(end_node))
    total = last[end_node] + min_to_end[end_node]
    return OracleResult(total, Alignment(tuple(moves), kind="complete"))


def exhaustive_prefix(trace: Sequence[int], trie: Trie, depth_bound: int) -> int:
    """Optimal prefix cost by enumerating move sequences up to ``depth_bound``.

    Every legal sequence interleaves synchronous, log, and model moves; a
    sequence of length L consuming the whole trace carries at least
    ``L - len(trace)`` model moves and at least that much cost. A solution
    longer than the bound therefore costs at least
    ``depth_bound + 1 - len(trace)``, so a found cost B with
    ``B <= depth_bound - len(trace) + 1`` cannot be beaten and the
    enumeration is provably complete.

    Intended for tiny instances only (the search is exponential).

    Raises:
        BoundTooSmallError: if the bound cannot certify optimality.
    """
    trace = list(trace)
    children = trie.children
    best = len(trace)  # all-log-moves solution always exists

    def search(node: int, pos: int, cost: int, depth: int) -> None:
        nonlocal best
        if cost >= best:
            return
        if pos == len(trace):
            best = cost
            return
        if depth == depth_bound:
            return
        symbol = trace[pos]
        child = children[node].get(symbol)
        if child is not None:
            search(child, pos + 1, cost, depth + 1)
        search(node, pos + 1, cost + 1, depth + 1)
        for kid in children[node].values():
            search(kid, pos, cost + 1, depth + 1)

    search(ROOT, 0, 0, 0)
    if best > depth_bound - len(trace) + 1:
        raise BoundTooSmallError(
            f"depth bound {depth_bound} cannot certify optimality for a "
            f"length-{len(trace)} trace (best found: {best})"
        )
    return best
