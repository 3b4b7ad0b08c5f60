"""Lifting protographs into binary parity-check matrices.

Copy-permute lifting replaces every nonzero base entry with a sum of
non-overlapping random S x S permutation matrices, so each edge type
becomes a regular bipartite subgraph.  Locally irregular protographs
cannot be lifted that way (permutation sums force regular column
degrees); their subgraphs are realized by configuration-model stub
matching against the quantized VN degree counts, with parallel edges
repaired by degree-preserving swaps.

The result is always audited: binary with no duplicate edges, every
check-node copy has exactly the local degree of its edge type, and the
column-degree histogram of each lifted subgraph equals the quantized
counts.  Swap-based 4-cycle removal preserves all of these invariants
exactly (swaps stay inside one subgraph and only exchange endpoints).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import AuditError, InfeasibleError
from .protograph import (
    BaseMatrix,
    IrregularProtograph,
    make_regular,
    quantize_distribution,
    validate,
)


@dataclass
class SparsePcm:
    """Binary sparse parity-check matrix produced by lifting.

    Edges are kept as parallel row/column index arrays in canonical
    (column, row) order, which makes serialization deterministic.
    ``base`` and ``s`` retain the block structure: global row r belongs
    to block row r // s, global column c to block column c // s.
    """

    s: int
    base: np.ndarray
    punctured_base_cols: frozenset[int]
    edge_rows: np.ndarray
    edge_cols: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.s * self.base.shape[0]

    @property
    def n_cols(self) -> int:
        return self.s * self.base.shape[1]

    @property
    def n_edges(self) -> int:
        return int(self.edge_rows.shape[0])

    def punctured_cols(self) -> np.ndarray:
        """All lifted copies of the punctured protograph columns."""
        cols = [
            j * self.s + b
            for j in sorted(self.punctured_base_cols)
            for b in range(self.s)
        ]
        return np.array(cols, dtype=np.int64)

    def col_adj(self) -> list[np.ndarray]:
        adj: list[list[int]] = [[] for _ in range(self.n_cols)]
        for r, c in zip(self.edge_rows, self.edge_cols):
            adj[c].append(int(r))
        return [np.array(sorted(a), dtype=np.int64) for a in adj]

    def row_adj(self) -> list[np.ndarray]:
        adj: list[list[int]] = [[] for _ in range(self.n_rows)]
        for r, c in zip(self.edge_rows, self.edge_cols):
            adj[r].append(int(c))
        return [np.array(sorted(a), dtype=np.int64) for a in adj]

    def audit(self, proto: IrregularProtograph | None = None) -> None:
        """Raise AuditError unless all structural invariants hold."""
        keys = self.edge_rows.astype(np.int64) * self.n_cols + self.edge_cols
        if len(np.unique(keys)) != len(keys):
            raise AuditError("duplicate (row, col) edge after lifting")
        m, n = self.base.shape
        for i in range(m):
            row_band = (self.edge_rows >= i * self.s) & (self.edge_rows < (i + 1) * self.s)
            for j in range(n):
                d = int(self.base[i, j])
                in_block = row_band & (self.edge_cols >= j * self.s) & (self.edge_cols < (j + 1) * self.s)
                rows = self.edge_rows[in_block] - i * self.s
                counts = np.bincount(rows, minlength=self.s)
                if d == 0:
                    if in_block.any():
                        raise AuditError(f"edges present in zero block ({i},{j})")
                    continue
                if not np.all(counts == d):
                    raise AuditError(
                        f"block ({i},{j}): CN copies must all have degree {d}, "
                        f"got range [{counts.min()}, {counts.max()}]"
                    )
                if proto is not None:
                    cols = self.edge_cols[in_block] - j * self.s
                    col_deg = np.bincount(cols, minlength=self.s)
                    dist = proto.dists[(i, j)]
                    expect = quantize_distribution(dist, self.s)
                    got = np.bincount(col_deg, minlength=dist.d_max + 1)[1:dist.d_max + 1]
                    if int(col_deg.min(initial=1)) < 1 or not np.array_equal(got, expect):
                        raise AuditError(
                            f"block ({i},{j}): VN degree histogram does not match quantization"
                        )

    def sorted_copy(self) -> "SparsePcm":
        order = np.lexsort((self.edge_rows, self.edge_cols))
        return SparsePcm(
            s=self.s,
            base=self.base,
            punctured_base_cols=self.punctured_base_cols,
            edge_rows=self.edge_rows[order].copy(),
            edge_cols=self.edge_cols[order].copy(),
            provenance=dict(self.provenance),
        )


def _block_rng(seed: int, i: int, j: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), i, j, attempt]))


def _non_overlapping_permutations(s: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``count`` random permutations of S with no position mapping to the
    same image twice (their permutation matrices do not overlap)."""
    used: list[set[int]] = [set() for _ in range(s)]
    perms: list[np.ndarray] = []
    for _ in range(count):
        perm = None
        for _ in range(300):
            cand = rng.permutation(s)
            if all(cand[x] not in used[x] for x in range(s)):
                perm = cand
                break
        if perm is None:
            # Rare at small S: fix residual collisions by random transpositions.
            perm = rng.permutation(s)
            budget = 20 * s
            while budget:
                budget -= 1
                bad = [x for x in range(s) if perm[x] in used[x]]
                if not bad:
                    break
                x = bad[0]
                y = int(rng.integers(s))
                perm[x], perm[y] = perm[y], perm[x]
            if any(perm[x] in used[x] for x in range(s)):
                raise InfeasibleError(f"could not draw non-overlapping permutation (S={s})")
        for x in range(s):
            used[x].add(int(perm[x]))
        perms.append(perm)
    return perms


def lift_conventional(
    base: BaseMatrix | IrregularProtograph, s: int, seed: int = 0
) -> SparsePcm:
    """Copy-permute lifting of a conventional protograph.

    Every entry w > 0 becomes the sum of w random non-overlapping S x S
    permutation matrices.  Requires S >= max entry.
    """
    proto = base if isinstance(base, IrregularProtograph) else make_regular(base)
    validate(proto).require()
    bm = proto.base
    s = int(s)
    if s < int(bm.entries.max()):
        raise InfeasibleError(f"lifting factor {s} below largest base entry {int(bm.entries.max())}")
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for (i, j) in bm.nonzero_indices():
        w = int(bm.entries[i, j])
        rng = _block_rng(seed, i, j)
        local_rows = np.tile(np.arange(s), w)
        local_cols = np.concatenate(_non_overlapping_permutations(s, w, rng))
        rows.append(i * s + local_rows)
        cols.append(j * s + local_cols)
    pcm = SparsePcm(
        s=s,
        base=np.asarray(bm.entries),
        punctured_base_cols=frozenset(bm.punctured),
        edge_rows=np.concatenate(rows),
        edge_cols=np.concatenate(cols),
        provenance={
            "kind": "conventional",
            "protograph_digest": proto.digest(),
            "protograph_name": proto.name,
            "s": s,
            "seed": int(seed),
        },
    ).sorted_copy()
    pcm.audit()
    return pcm


def _match_block(
    s: int, d: int, col_degrees: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray] | None:
    """Stub-match one subgraph: CN copies of degree d against the given
    VN degree sequence.  Returns (rows, cols) or None when parallel-edge
    repair fails for this shuffle."""
    col_stubs = np.repeat(np.arange(s), col_degrees)
    row_stubs = np.repeat(np.arange(s), d)
    rng.shuffle(row_stubs)
    pairs = list(zip(row_stubs.tolist(), col_stubs.tolist()))
    edge_set: set[tuple[int, int]] = set()
    dups: deque[int] = deque()
    for t, e in enumerate(pairs):
        if e in edge_set:
            dups.append(t)
        else:
            edge_set.add(e)
    n_edges = len(pairs)
    attempts = 0
    while dups:
        attempts += 1
        if attempts > 200 * (len(dups) + 1) or attempts > 100_000:
            return None
        t = dups[0]
        r, c = pairs[t]
        u = int(rng.integers(n_edges))
        r2, c2 = pairs[u]
        if u == t or r2 == r or c2 == c:
            continue
        if (r, c2) in edge_set or (r2, c) in edge_set or (r2, c2) not in edge_set:
            continue
        # Exchange column endpoints: (r,c),(r2,c2) -> (r,c2),(r2,c).
        edge_set.discard((r2, c2))
        edge_set.add((r, c2))
        edge_set.add((r2, c))
        pairs[t] = (r2, c)
        pairs[u] = (r, c2)
        dups.popleft()
    rows = np.array([p[0] for p in pairs], dtype=np.int64)
    cols = np.array([p[1] for p in pairs], dtype=np.int64)
    return rows, cols


def lift_irregular(proto: IrregularProtograph, s: int, seed: int = 0) -> SparsePcm:
    """Lift a locally irregular protograph by per-block stub matching.

    Per block, the VN degree sequence is the quantized local degree
    distribution (exact counts), assigned to column copies in a random
    order; CN copies keep the regular local degree.  Parallel edges are
    removed by endpoint swaps; if a shuffle cannot be repaired the block
    is redrawn with a fresh derived seed.
    """
    validate(proto).require()
    bm = proto.base
    s = int(s)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for (i, j) in bm.nonzero_indices():
        d = int(bm.entries[i, j])
        dist = proto.dists[(i, j)]
        counts = quantize_distribution(dist, s)
        degrees = np.repeat(np.arange(1, dist.d_max + 1), counts)
        if int(degrees.max(initial=0)) > s:
            raise InfeasibleError(
                f"block ({i},{j}): VN degree {int(degrees.max())} exceeds lifting factor {s}"
            )
        block = None
        for attempt in range(20):
            rng = _block_rng(seed, i, j, attempt)
            col_degrees = degrees.copy()
            rng.shuffle(col_degrees)
            block = _match_block(s, d, col_degrees, rng)
            if block is not None:
                break
        if block is None:
            raise InfeasibleError(f"stub matching failed for block ({i},{j}) after 20 restarts")
        rows.append(i * s + block[0])
        cols.append(j * s + block[1])
    pcm = SparsePcm(
        s=s,
        base=np.asarray(bm.entries),
        punctured_base_cols=frozenset(bm.punctured),
        edge_rows=np.concatenate(rows),
        edge_cols=np.concatenate(cols),
        provenance={
            "kind": "irregular",
            "protograph_digest": proto.digest(),
            "protograph_name": proto.name,
            "s": s,
            "seed": int(seed),
        },
    ).sorted_copy()
    pcm.audit(proto)
    return pcm


def lift(proto: IrregularProtograph, s: int, seed: int = 0) -> SparsePcm:
    """Copy-permute for regular protographs, stub matching otherwise."""
    if proto.is_regular:
        return lift_conventional(proto, s, seed)
    return lift_irregular(proto, s, seed)


# ---------------------------------------------------------------------------
# 4-cycle accounting and removal


def count_4_cycles(pcm: SparsePcm) -> int:
    """Number of 4-cycles: over unordered row pairs, C(shared columns, 2)."""
    pair_sharing = _pair_sharing(pcm)
    return sum(t * (t - 1) // 2 for t in pair_sharing.values())


def _pair_sharing(pcm: SparsePcm) -> dict[tuple[int, int], int]:
    sharing: dict[tuple[int, int], int] = {}
    adj = pcm.col_adj()
    for rows in adj:
        k = len(rows)
        for a in range(k):
            ra = int(rows[a])
            for b in range(a + 1, k):
                key = (ra, int(rows[b]))
                sharing[key] = sharing.get(key, 0) + 1
    return sharing


class _SwapState:
    """Mutable edge structure with incremental 4-cycle bookkeeping."""

    def __init__(self, pcm: SparsePcm) -> None:
        self.s = pcm.s
        self.n_cols = pcm.n_cols
        self.col_rows: list[set[int]] = [set() for _ in range(pcm.n_cols)]
        self.row_cols: list[set[int]] = [set() for _ in range(pcm.n_rows)]
        self.block_edges: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for r, c in zip(pcm.edge_rows.tolist(), pcm.edge_cols.tolist()):
            self.col_rows[c].add(r)
            self.row_cols[r].add(c)
            self.block_edges.setdefault((r // self.s, c // self.s), []).append((r, c))
        self.sharing = _pair_sharing(pcm)
        self.cycles = sum(t * (t - 1) // 2 for t in self.sharing.values())

    def _bump(self, r1: int, r2: int, delta: int) -> None:
        key = (r1, r2) if r1 < r2 else (r2, r1)
        t = self.sharing.get(key, 0)
        self.cycles += ((t + delta) * (t + delta - 1) - t * (t - 1)) // 2
        t += delta
        if t:
            self.sharing[key] = t
        else:
            self.sharing.pop(key, None)

    def remove(self, r: int, c: int) -> None:
        for other in self.col_rows[c]:
            if other != r:
                self._bump(r, other, -1)
        self.col_rows[c].discard(r)
        self.row_cols[r].discard(c)

    def add(self, r: int, c: int) -> None:
        for other in self.col_rows[c]:
            self._bump(r, other, +1)
        self.col_rows[c].add(r)
        self.row_cols[r].add(c)

    def has(self, r: int, c: int) -> bool:
        return c in self.row_cols[r]

    def offenders(self) -> list[tuple[int, int]]:
        return sorted(k for k, t in self.sharing.items() if t >= 2)


def remove_4_cycles(
    pcm: SparsePcm, max_swaps: int | None = None, seed: int = 0
) -> tuple[SparsePcm, int]:
    """Drive the 4-cycle count towards zero with block-preserving swaps.

    Each step targets a row pair sharing two or more columns, picks one
    of the offending edges, and exchanges column endpoints with another
    edge of the same block when that strictly reduces the cycle count
    (occasional equal-count moves are allowed to escape plateaus).  All
    block degree invariants are preserved exactly.  Returns the new PCM
    and the residual cycle count (0 unless the swap budget ran out).
    """
    state = _SwapState(pcm)
    if max_swaps is None:
        max_swaps = 200 * state.cycles + 20_000
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 4]))
    swaps = 0
    stale_sweeps = 0
    while state.cycles > 0 and swaps < max_swaps and stale_sweeps < 30:
        progressed = False
        for r1, r2 in state.offenders():
            if swaps >= max_swaps:
                break
            if state.sharing.get((r1, r2), 0) < 2:
                continue
            shared = sorted(state.row_cols[r1] & state.row_cols[r2])
            if len(shared) < 2:
                continue
            c = shared[int(rng.integers(len(shared)))]
            r = r1 if rng.uniform() < 0.5 else r2
            block = state.block_edges[(r // state.s, c // state.s)]
            before = state.cycles
            for _ in range(60):
                idx = int(rng.integers(len(block)))
                r_b, c_b = block[idx]
                if not state.has(r_b, c_b):  # stale list entry from an old swap
                    continue
                if r_b == r or c_b == c or state.has(r, c_b) or state.has(r_b, c):
                    continue
                state.remove(r, c)
                state.remove(r_b, c_b)
                state.add(r, c_b)
                state.add(r_b, c)
                if state.cycles < before or (state.cycles == before and rng.uniform() < 0.25):
                    # Keep stale entries; sampling re-validates with has().
                    block.append((r, c_b))
                    block.append((r_b, c))
                    swaps += 1
                    if state.cycles < before:
                        progressed = True
                    break
                state.remove(r, c_b)
                state.remove(r_b, c)
                state.add(r, c)
                state.add(r_b, c_b)
        stale_sweeps = 0 if progressed else stale_sweeps + 1

    rows = []
    cols = []
    for c, rset in enumerate(state.col_rows):
        for r in sorted(rset):
            rows.append(r)
            cols.append(c)
    out = SparsePcm(
        s=pcm.s,
        base=pcm.base,
        punctured_base_cols=pcm.punctured_base_cols,
        edge_rows=np.array(rows, dtype=np.int64),
        edge_cols=np.array(cols, dtype=np.int64),
        provenance={**pcm.provenance, "girth6_seed": int(seed), "residual_4_cycles": state.cycles},
    ).sorted_copy()
    out.audit()
    return out, state.cycles
