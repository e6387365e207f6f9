"""Finite-state acceptor for the outer-ring alternation rule.

A ring of labels over ``{d, s, l}`` is accepted when, read cyclically, it
consists of exactly two ``l`` arcs and two ``d`` arcs that alternate, every arc
is 2–8 pixels long, and arcs of different labels are separated by ``s`` runs
of at most two pixels (``l s l`` and ``d s d`` are rejected).

The rule is checked in one left-to-right pass. The scanner remembers the run
that starts at index 0 so the run that ends the string can be merged with it,
which is what makes a linear pass sufficient for a cyclic string. Scanner
states are enumerated once into a dense transition table so that whole arrays
of rings can be advanced together with numpy fancy indexing.
"""

from __future__ import annotations

import sys
import time
from typing import NamedTuple

import numpy as np
from aws_lambda_powertools import Logger

logger = Logger(service="saddle", stream=sys.stderr)

LABEL_DARK = 0
LABEL_SIMILAR = 1
LABEL_LIGHT = 2

SYMBOLS = "dsl"

MIN_ARC = 2
MAX_ARC = 8
MAX_SIMILAR_RUN = 2
REQUIRED_ARCS = 4

_NONE = -1


class _ScanState(NamedTuple):
    head: int        # label of the run starting at index 0
    head_len: int
    in_head: bool    # still inside that first run
    first_arc: int   # label of the first l/d run, or _NONE
    last_arc: int    # label of the most recent l/d run, or _NONE
    arcs: int        # closed l/d runs, head run excluded
    cur: int         # label of the run being read
    cur_len: int


_START = "start"
_DEAD = "dead"


def _run_limit(label: int) -> int:
    return MAX_SIMILAR_RUN if label == LABEL_SIMILAR else MAX_ARC


def _open_run(state: _ScanState, label: int) -> _ScanState | str:
    """Start a new run after a label change."""
    first_arc, last_arc = state.first_arc, state.last_arc
    if label != LABEL_SIMILAR:
        if last_arc == label:
            return _DEAD
        if first_arc == _NONE:
            first_arc = label
        last_arc = label
    return state._replace(first_arc=first_arc, last_arc=last_arc, cur=label, cur_len=1)


def _step(state: _ScanState | str, label: int) -> _ScanState | str:
    if state == _DEAD:
        return _DEAD
    if state == _START:
        arc = _NONE if label == LABEL_SIMILAR else label
        return _ScanState(label, 1, True, arc, arc, 0, label, 1)

    if state.in_head:
        if label == state.head:
            grown = state.head_len + 1
            if grown > _run_limit(label):
                return _DEAD
            return state._replace(head_len=grown, cur_len=grown)
        return _open_run(state._replace(in_head=False), label)

    if label == state.cur:
        grown = state.cur_len + 1
        if grown > _run_limit(label):
            return _DEAD
        return state._replace(cur_len=grown)

    # The run being read closes here; it is not the head run.
    arcs = state.arcs
    if state.cur != LABEL_SIMILAR:
        if state.cur_len < MIN_ARC:
            return _DEAD
        arcs += 1
        if arcs > REQUIRED_ARCS:
            return _DEAD
    return _open_run(state._replace(arcs=arcs), label)


def _accepting(state: _ScanState | str) -> bool:
    """Close the last run against the head run and check the arc count."""
    if state in (_START, _DEAD) or state.in_head:
        return False

    head_is_arc = state.head != LABEL_SIMILAR
    cur_is_arc = state.cur != LABEL_SIMILAR
    if state.cur == state.head:
        merged = state.head_len + state.cur_len
        if head_is_arc:
            if not MIN_ARC <= merged <= MAX_ARC:
                return False
            return state.arcs + 1 == REQUIRED_ARCS
        if merged > MAX_SIMILAR_RUN:
            return False
        total = state.arcs
    else:
        if head_is_arc and state.head_len < MIN_ARC:
            return False
        if cur_is_arc and state.cur_len < MIN_ARC:
            return False
        total = state.arcs + int(head_is_arc) + int(cur_is_arc)

    # Arcs on either side of the wrap-around must differ.
    if state.first_arc == _NONE or state.first_arc == state.last_arc:
        return False
    return total == REQUIRED_ARCS


# ---------------------------------------------------------------------------
# Compiled table
# ---------------------------------------------------------------------------


class CompiledAutomaton(NamedTuple):
    """Dense form of the scanner.

    Attributes:
        transitions: ``int32`` array ``[n_states, 3]``; state 0 is the start.
        accepting:   ``bool`` array ``[n_states]``.
    """

    transitions: np.ndarray
    accepting: np.ndarray


# Built on first use and reused for the lifetime of the process.
_compiled: CompiledAutomaton | None = None


def compile_automaton() -> CompiledAutomaton:
    """Enumerate every reachable scanner state into a transition table."""
    global _compiled
    if _compiled is not None:
        return _compiled

    start = time.perf_counter()
    index: dict[object, int] = {_START: 0, _DEAD: 1}
    order: list[object] = [_START, _DEAD]
    rows: list[list[int]] = []
    cursor = 0
    while cursor < len(order):
        state = order[cursor]
        row = []
        for label in (LABEL_DARK, LABEL_SIMILAR, LABEL_LIGHT):
            nxt = _step(state, label)
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
            row.append(index[nxt])
        rows.append(row)
        cursor += 1

    _compiled = CompiledAutomaton(
        transitions=np.asarray(rows, dtype=np.int32),
        accepting=np.asarray([_accepting(s) for s in order], dtype=bool),
    )
    logger.debug(
        "Outer-ring automaton compiled",
        extra={
            "states": len(order),
            "duration_ms": round((time.perf_counter() - start) * 1000, 3),
        },
    )
    return _compiled


def accepts_many(labels: np.ndarray) -> np.ndarray:
    """Run the automaton over each row of ``labels``.

    Args:
        labels: Integer array ``[n, ring_length]`` of label codes
                (0 = d, 1 = s, 2 = l).

    Returns:
        Boolean array ``[n]``.
    """
    table = compile_automaton()
    n_symbols = table.transitions.shape[1]
    flat = table.transitions.ravel().astype(np.intp)
    columns = np.ascontiguousarray(np.asarray(labels, dtype=np.intp).T)
    state = np.zeros(columns.shape[1], dtype=np.intp)
    for column in columns:
        state = flat[state * n_symbols + column]
    return table.accepting[state]


def accepts(labels: str) -> bool:
    """Single-string convenience wrapper; ``labels`` uses the letters d, s, l."""
    return bool(accepts_many(encode(labels)[np.newaxis, :])[0])


def encode(labels: str) -> np.ndarray:
    """Convert a ``d``/``s``/``l`` string (spaces ignored) to label codes."""
    from src.cli import ParameterError

    cleaned = labels.replace(" ", "")
    try:
        return np.asarray([SYMBOLS.index(ch) for ch in cleaned], dtype=np.uint8)
    except ValueError as exc:
        raise ParameterError(f"Ring labels may only contain d, s, l; got {labels!r}") from exc


def decode(codes: np.ndarray) -> str:
    return "".join(SYMBOLS[int(c)] for c in codes)
