"""Lowering of large convolution kernels to cascades of 3x3 kernels.

A ``(2k+1) x (2k+1)`` kernel is split into nine blocks (four corners, four
edges and the interior). Each block becomes a ``(2k-1) x (2k-1)`` kernel that
is applied after a one-pixel shift, which is exact under constant and
periodic padding. Repeating the split ``k-1`` times leaves 3x3 kernels.

Only shift sequences whose kernels can be nonzero are kept. A sequence is in
one of three zero patterns (a single corner entry, one full edge, or a full
kernel) and the pattern of a child is fixed by the move that produced it::

    full     --(0,0)-->      full
    full     --edge move-->  boundary on that edge
    full     --corner move-> corner
    boundary --same edge-->  boundary
    boundary --adjacent corner--> corner
    corner   --same corner--> corner

This leaves ``(2n+1)**2`` sequences after ``n`` splits instead of ``9**n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import InvalidDimension, InvalidKernel, ParseError
from .serialization import require, tensor_from_json, tensor_to_json
from .tensor import as_padding, check_kernel, check_tensor, conv2d, shift_kernel

Move = Tuple[int, int]

MOVES: Tuple[Move, ...] = tuple((i, j) for i in (-1, 0, 1) for j in (-1, 0, 1))

CORNER, BOUNDARY, FULL = "corner", "boundary", "full"


def _advance(state, move: Move):
    """Pattern state after ``move``; ``None`` when the child kernel is zero."""
    tag, where = state
    i, j = move
    if tag == FULL:
        if move == (0, 0):
            return state
        return (BOUNDARY if abs(i) + abs(j) == 1 else CORNER, move)
    if tag == BOUNDARY:
        if move == where:
            return state
        oi, oj = where
        if abs(i) + abs(j) == 2 and (i == oi if oi else j == oj):
            return (CORNER, move)
        return None
    return state if move == where else None


_ROOT = (FULL, None)


@dataclass(frozen=True)
class IndexSeq:
    """A sequence of shift moves, first-applied move first."""

    moves: Tuple[Move, ...]
    tag: str

    @classmethod
    def from_moves(cls, moves) -> "IndexSeq":
        moves = tuple((int(i), int(j)) for i, j in moves)
        state = _ROOT
        for move in moves:
            if move not in MOVES:
                raise InvalidKernel(f"shift move {move} outside -1..1")
            state = _advance(state, move)
            if state is None:
                raise InvalidKernel(f"sequence {moves} leads to a zero kernel")
        return cls(moves, state[0])

    def __len__(self):
        return len(self.moves)

    def prefix(self) -> "IndexSeq":
        return IndexSeq.from_moves(self.moves[:-1])


def build_index_set(n: int) -> List[IndexSeq]:
    """All surviving shift sequences of length ``n`` in lexicographic order."""
    if n < 1:
        raise InvalidDimension(f"index set length must be >= 1, got {n}")
    level = [((), _ROOT)]
    for _ in range(n):
        nxt = []
        for moves, state in level:
            for move in MOVES:
                child = _advance(state, move)
                if child is not None:
                    nxt.append((moves + (move,), child))
        level = nxt
    return [IndexSeq(moves, state[0]) for moves, state in level]


def pattern_census(index_set) -> Dict[str, int]:
    census = {CORNER: 0, BOUNDARY: 0, FULL: 0}
    for seq in index_set:
        census[seq.tag] += 1
    return census


def _as_single(kernel) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 4:
        if kernel.shape[:2] != (1, 1):
            raise InvalidKernel(f"expected a single-channel kernel, got shape {kernel.shape}")
        kernel = kernel[0, 0]
    if kernel.ndim != 2:
        raise InvalidKernel(f"expected a 2-D kernel, got shape {kernel.shape}")
    check_kernel(kernel[None, None])
    return kernel


def _split(kernel: np.ndarray) -> Dict[Move, np.ndarray]:
    size = kernel.shape[0]
    src = {-1: slice(0, 1), 0: slice(1, size - 1), 1: slice(size - 1, size)}
    dst = {-1: slice(0, 1), 0: slice(0, size - 2), 1: slice(size - 3, size - 2)}
    blocks = {}
    for i, j in MOVES:
        block = np.zeros((size - 2, size - 2))
        block[dst[i], dst[j]] = kernel[src[i], src[j]]
        blocks[(i, j)] = block
    return blocks


def split_k_tilde(kernel) -> Dict[Move, np.ndarray]:
    """Split a ``(2k+1)``-square kernel into the nine ``(2k-1)``-square blocks.

    Corner blocks keep one corner weight, edge blocks keep the interior of
    one outer row or column, and the ``(0, 0)`` block is the inner kernel.
    Requires ``k >= 2``.
    """
    kernel = _as_single(kernel)
    if kernel.shape[0] < 5:
        raise InvalidKernel(f"splitting needs k >= 2, got a {kernel.shape[0]}x{kernel.shape[0]} kernel")
    return _split(kernel)


def reembed(blocks: Dict[Move, np.ndarray]) -> np.ndarray:
    """Sum of the blocks placed back at their offsets; inverse of the split."""
    inner = next(iter(blocks.values())).shape[0]
    out = np.zeros((inner + 2, inner + 2))
    for (i, j), block in blocks.items():
        out[i + 1 : i + 1 + inner, j + 1 : j + 1 + inner] += block
    return out


def decompose_once(kernel, d: int, pad=None) -> List[Tuple[Move, np.ndarray, np.ndarray]]:
    """One split step as ``(move, P, S)`` triples with ``K*X == sum P*(S*X)``."""
    kernel = _as_single(kernel)
    k = kernel.shape[0] // 2
    if pad is not None:
        as_padding(pad)
    if d <= k:
        raise InvalidDimension(f"need d > k, got d={d}, k={k}")
    blocks = split_k_tilde(kernel)
    return [(move, blocks[move], shift_kernel(*move)) for move in MOVES]


def apply_decomposition(pairs, x, pad) -> np.ndarray:
    x = check_tensor(x)
    out = 0.0
    for _, p, s in pairs:
        out = out + conv2d(p[None, None], conv2d(s[None, None], x, pad), pad)
    return out


def _leaf_kernels(kernel: np.ndarray, levels: int) -> Dict[Tuple[Move, ...], np.ndarray]:
    nodes = [((), _ROOT, kernel)]
    for _ in range(levels):
        nxt = []
        for moves, state, ker in nodes:
            blocks = _split(ker)
            for move in MOVES:
                child = _advance(state, move)
                if child is not None:
                    nxt.append((moves + (move,), child, blocks[move]))
        nodes = nxt
    return {moves: ker for moves, _, ker in nodes}


@dataclass(frozen=True)
class LoweredPlan:
    """A kernel lowered to ``terminal * stages[-1] * ... * stages[0]``.

    ``stages[n-1]`` maps ``(2n-1)**2`` channels to ``(2n+1)**2`` channels with
    one-hot 3x3 blocks; ``terminal`` maps ``(2k-1)**2`` channels to the
    original output channels. ``index_sets[n-1]`` orders the channels of
    stage ``n``.
    """

    k: int
    stages: Tuple[np.ndarray, ...]
    terminal: np.ndarray
    index_sets: Tuple[Tuple[IndexSeq, ...], ...] = field(default=())

    @property
    def widths(self) -> List[int]:
        return [1] + [s.shape[1] for s in self.stages] + [self.terminal.shape[1]]

    @property
    def kernels(self) -> List[np.ndarray]:
        return list(self.stages) + [self.terminal]

    def apply(self, x, pad) -> np.ndarray:
        pad = as_padding(pad)
        for kernel in self.kernels:
            x = conv2d(kernel, x, pad)
        return x

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "stages": [tensor_to_json(s) for s in self.stages],
            "terminal": tensor_to_json(self.terminal),
            "index_sets": [[[list(m) for m in seq.moves] for seq in iset] for iset in self.index_sets],
        }

    @classmethod
    def from_dict(cls, doc, path: str = "plan") -> "LoweredPlan":
        k = require(doc, "k", path)
        if not isinstance(k, int) or k < 1:
            raise ParseError(f"{path}.k", "must be a positive integer")
        stages = require(doc, "stages", path)
        if not isinstance(stages, list) or len(stages) != k - 1:
            raise ParseError(f"{path}.stages", f"expected a list of {k - 1} kernels")
        stages = tuple(tensor_from_json(s, f"{path}.stages[{n}]", ndim=4) for n, s in enumerate(stages))
        terminal = tensor_from_json(require(doc, "terminal", path), f"{path}.terminal", ndim=4)
        raw_sets = require(doc, "index_sets", path)
        if not isinstance(raw_sets, list):
            raise ParseError(f"{path}.index_sets", "expected a list")
        index_sets = []
        for n, iset in enumerate(raw_sets):
            try:
                index_sets.append(tuple(IndexSeq.from_moves(seq) for seq in iset))
            except (InvalidKernel, TypeError, ValueError) as exc:
                raise ParseError(f"{path}.index_sets[{n}]", str(exc)) from None
        return cls(k, stages, terminal, tuple(index_sets))


def lower_kernel(kernel, d: Optional[int] = None, pad=None) -> LoweredPlan:
    """Lower a ``1 x M x (2k+1) x (2k+1)`` kernel to a 3x3 cascade.

    The shift stages depend only on ``k``; the terminal kernel carries the
    weights, one column per output channel. ``d`` (if given) must exceed
    ``k``; the plan is then exact for every ``d x d`` input under constant or
    periodic padding.
    """
    kernel = check_kernel(kernel)
    if kernel.shape[0] != 1:
        raise InvalidKernel(
            f"lowering is defined for single-input-channel kernels, got {kernel.shape[0]} inputs; "
            "lower each input channel separately and sum the results"
        )
    if pad is not None:
        as_padding(pad)
    k = kernel.shape[2] // 2
    if d is not None and d <= k:
        raise InvalidDimension(f"need d > k, got d={d}, k={k}")
    if k <= 1:
        return LoweredPlan(k, (), kernel.copy(), ())

    index_sets = [build_index_set(n) for n in range(1, k)]
    stages = []
    prev_pos = {(): 0}
    for iset in index_sets:
        stage = np.zeros((len(prev_pos), len(iset), 3, 3))
        for q, seq in enumerate(iset):
            i, j = seq.moves[-1]
            stage[prev_pos[seq.moves[:-1]], q, i + 1, j + 1] = 1.0
        stages.append(stage)
        prev_pos = {seq.moves: q for q, seq in enumerate(iset)}

    last = index_sets[-1]
    terminal = np.zeros((len(last), kernel.shape[1], 3, 3))
    for m in range(kernel.shape[1]):
        leaves = _leaf_kernels(kernel[0, m], k - 1)
        for p, seq in enumerate(last):
            terminal[p, m] = leaves[seq.moves]
    return LoweredPlan(k, tuple(stages), terminal, tuple(tuple(s) for s in index_sets))
