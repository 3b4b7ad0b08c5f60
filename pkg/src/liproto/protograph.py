"""Protograph data model and degree-distribution algebra.

A protograph is a small bipartite template graph given by a base matrix
whose entry (i, j) is the local check-node degree of edge type (i, j):
the number of edges between check node i and variable node j before
lifting.  A *locally irregular* protograph additionally attaches to each
nonzero entry a local variable-node degree distribution L over
Omega = {1, ..., d_max}; the lifted subgraph of that edge type then has
VN degrees drawn with those frequencies.  A conventional protograph is
the special case where every distribution is the point mass at the base
entry.

Every distribution must satisfy two constraints: its masses sum to one,
and its mean equals the base entry (edge counting between the CN side,
which stays regular, and the VN side).  Validation is report-style so a
caller sees all violations at once.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from heapq import heappop, heappush
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InfeasibleError, InvalidProtographError, SchemaError

#: Default degree cap for Omega = {1, ..., d_max}.
DEFAULT_D_MAX = 20
#: Tolerance for constraint checks on user-supplied masses.
MASS_TOL = 1e-9
#: Masses at or below this are treated as outside the support.
SUPPORT_EPS = 1e-12


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class BaseMatrix:
    """Integer base matrix plus the set of punctured columns (0-based).

    Entries are local CN degrees; zero means "no edge type".  Instances
    are immutable (the array is marked read-only) and safe to share.
    """

    entries: np.ndarray
    punctured: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=np.int64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("base matrix must be a non-empty 2-D integer array")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        punc = frozenset(int(j) for j in self.punctured)
        if any(j < 0 or j >= arr.shape[1] for j in punc):
            raise ValueError("punctured column index out of range")
        object.__setattr__(self, "punctured", punc)

    @property
    def m(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n(self) -> int:
        return int(self.entries.shape[1])

    @property
    def n_punctured(self) -> int:
        return len(self.punctured)

    def nonzero_indices(self) -> list[tuple[int, int]]:
        """Row-major list of (i, j) with a nonzero entry."""
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.entries))]

    def column_rows(self, j: int) -> list[int]:
        """Rows with a nonzero entry in column j."""
        return [int(i) for i in np.nonzero(self.entries[:, j])[0]]

    def digest(self) -> str:
        payload = {
            "base": self.entries.tolist(),
            "punctured": sorted(self.punctured),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def __reduce__(self):
        return (BaseMatrix, (np.asarray(self.entries), frozenset(self.punctured)))


@dataclass(frozen=True, eq=False)
class LocalDegreeDistribution:
    """Probability masses of local VN degrees over Omega = {1, ..., d_max}.

    ``masses[k-1]`` is the fraction of VNs of degree k inside the lifted
    subgraph of one edge type; ``target_degree`` is that edge type's
    local CN degree, which the mean of the distribution must equal.
    """

    target_degree: int
    masses: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.masses, dtype=float, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("masses must be a non-empty 1-D array over Omega")
        arr.setflags(write=False)
        object.__setattr__(self, "masses", arr)
        object.__setattr__(self, "target_degree", int(self.target_degree))

    @property
    def d_max(self) -> int:
        return int(self.masses.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(1, self.d_max + 1)

    def support(self) -> np.ndarray:
        """Degrees with mass above SUPPORT_EPS."""
        return self.degrees[self.masses > SUPPORT_EPS]

    def mass(self, degree: int) -> float:
        if not 1 <= degree <= self.d_max:
            return 0.0
        return float(self.masses[degree - 1])

    def total(self) -> float:
        return float(self.masses.sum())

    def mean(self) -> float:
        return float(self.degrees @ self.masses)

    @property
    def is_point_mass(self) -> bool:
        sup = self.support()
        return len(sup) == 1 and abs(self.mass(int(sup[0])) - 1.0) <= MASS_TOL

    def itemized(self) -> dict[int, float]:
        """Support degrees mapped to masses (for serialization)."""
        return {int(k): float(self.masses[k - 1]) for k in self.support()}

    def constraint_errors(self) -> tuple[float, float, float]:
        """(|sum - 1|, |mean - target|, worst out-of-range mass excess)."""
        sum_err = abs(self.total() - 1.0)
        mean_err = abs(self.mean() - self.target_degree)
        range_err = float(max(0.0, -self.masses.min(), self.masses.max() - 1.0))
        return sum_err, mean_err, range_err

    def is_valid(self, tol: float = MASS_TOL) -> bool:
        s, m, r = self.constraint_errors()
        return s <= tol and m <= tol and r <= tol

    def require_valid(self, what: str = "distribution") -> None:
        if not self.is_valid():
            s, m, r = self.constraint_errors()
            raise InvalidProtographError(
                f"{what} violates constraints: |sum-1|={s:.3g}, "
                f"|mean-{self.target_degree}|={m:.3g}, range excess={r:.3g}"
            )

    def __reduce__(self):
        return (LocalDegreeDistribution, (self.target_degree, np.asarray(self.masses)))

    @classmethod
    def point_mass(cls, degree: int, d_max: int | None = None) -> "LocalDegreeDistribution":
        degree = int(degree)
        if degree < 1:
            raise ValueError("point mass degree must be >= 1")
        d_max = max(DEFAULT_D_MAX, degree) if d_max is None else int(d_max)
        if degree > d_max:
            raise ValueError(f"degree {degree} exceeds d_max {d_max}")
        masses = np.zeros(d_max)
        masses[degree - 1] = 1.0
        return cls(target_degree=degree, masses=masses)

    @classmethod
    def from_mapping(
        cls,
        mapping: Mapping[int, float],
        target_degree: int,
        d_max: int | None = None,
    ) -> "LocalDegreeDistribution":
        if not mapping:
            raise ValueError("empty degree mapping")
        top = max(int(k) for k in mapping)
        d_max = max(DEFAULT_D_MAX, top) if d_max is None else int(d_max)
        if top > d_max:
            raise ValueError(f"degree {top} exceeds d_max {d_max}")
        masses = np.zeros(d_max)
        for k, v in mapping.items():
            k = int(k)
            if k < 1:
                raise ValueError(f"degree {k} outside Omega")
            masses[k - 1] = float(v)
        return cls(target_degree=target_degree, masses=masses)


@dataclass(frozen=True, eq=False)
class EdgePerspectiveDistribution:
    """Edge-perspective masses: probability that a random edge of the
    subgraph lands on a VN of each degree."""

    masses: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.masses, dtype=float, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "masses", arr)

    @property
    def d_max(self) -> int:
        return int(self.masses.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(1, self.d_max + 1)

    def support(self) -> np.ndarray:
        return self.degrees[self.masses > SUPPORT_EPS]

    def mass(self, degree: int) -> float:
        if not 1 <= degree <= self.d_max:
            return 0.0
        return float(self.masses[degree - 1])

    def total(self) -> float:
        return float(self.masses.sum())


@dataclass(frozen=True, eq=False)
class IrregularProtograph:
    """Base matrix plus one local degree distribution per nonzero entry."""

    base: BaseMatrix
    dists: Mapping[tuple[int, int], LocalDegreeDistribution]
    name: str = ""

    def __post_init__(self) -> None:
        frozen = MappingProxyType({(int(i), int(j)): d for (i, j), d in self.dists.items()})
        object.__setattr__(self, "dists", frozen)

    @property
    def is_regular(self) -> bool:
        return all(
            d.is_point_mass and d.mass(d.target_degree) >= 1.0 - MASS_TOL
            for d in self.dists.values()
        )

    def column_dists(self, j: int) -> list[tuple[int, LocalDegreeDistribution]]:
        """(row, distribution) pairs for the nonzero entries of column j."""
        return [(i, self.dists[(i, j)]) for i in self.base.column_rows(j) if (i, j) in self.dists]

    def digest(self) -> str:
        payload = {
            "base": self.base.entries.tolist(),
            "punctured": sorted(self.base.punctured),
            "dists": {
                f"{i},{j}": {str(k): round(v, 15) for k, v in sorted(d.itemized().items())}
                for (i, j), d in sorted(self.dists.items())
            },
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def __reduce__(self):
        return (IrregularProtograph, (self.base, dict(self.dists), self.name))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    where: str
    magnitude: float
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.where}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, where: str, magnitude: float, message: str) -> None:
        self.violations.append(Violation(code, where, float(magnitude), message))

    def require(self) -> None:
        if not self.ok:
            raise InvalidProtographError(str(self))

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(str(v) for v in self.violations)


def validate(
    proto: IrregularProtograph | BaseMatrix,
    *,
    allow_zero_rate: bool = False,
    tol: float = MASS_TOL,
) -> ValidationReport:
    """Check every protograph invariant; returns a report of all violations."""
    report = ValidationReport()
    if isinstance(proto, BaseMatrix):
        base, dists = proto, None
    else:
        base, dists = proto.base, proto.dists

    entries = base.entries
    if np.any(entries < 0):
        bad = np.argwhere(entries < 0)[0]
        report.add("negative-entry", f"base[{bad[0]},{bad[1]}]", float(entries[tuple(bad)]),
                   "base entries must be non-negative")
    for i in range(base.m):
        if not np.any(entries[i, :] > 0):
            report.add("isolated-row", f"row {i}", 0.0, "check node has no edges")
    for j in range(base.n):
        if not np.any(entries[:, j] > 0):
            report.add("isolated-col", f"col {j}", 0.0, "variable node has no edges")
    if base.n_punctured >= base.n:
        report.add("all-punctured", "punctured", float(base.n_punctured),
                   "at least one column must be transmitted")
    if not allow_zero_rate and base.n <= base.m:
        report.add("non-positive-rate", "shape", float(base.n - base.m),
                   f"need n > m for positive design rate (m={base.m}, n={base.n})")

    if dists is None:
        return report

    nz = set(base.nonzero_indices())
    have = set(dists.keys())
    for idx in sorted(nz - have):
        report.add("missing-dist", f"edge {idx}", 0.0, "nonzero entry has no degree distribution")
    for idx in sorted(have - nz):
        report.add("extra-dist", f"edge {idx}", 0.0, "distribution attached to a zero entry")
    for idx in sorted(nz & have):
        d = dists[idx]
        where = f"edge {idx}"
        if d.target_degree != int(entries[idx]):
            report.add("target-mismatch", where, float(d.target_degree - entries[idx]),
                       f"distribution target {d.target_degree} != base entry {int(entries[idx])}")
        sum_err, mean_err, range_err = d.constraint_errors()
        if range_err > tol:
            report.add("mass-range", where, range_err, "masses must lie in [0, 1]")
        if sum_err > tol:
            report.add("mass-sum", where, sum_err, f"masses sum to {d.total():.12g}, expected 1")
        if mean_err > tol:
            report.add("mean", where, mean_err,
                       f"mean {d.mean():.12g} != local CN degree {d.target_degree}")
    return report


# ---------------------------------------------------------------------------
# operations


def design_rate(proto: IrregularProtograph | BaseMatrix) -> Fraction:
    """Design rate (n - m) / (n - n_punc) as an exact rational."""
    base = proto if isinstance(proto, BaseMatrix) else proto.base
    denom = base.n - base.n_punctured
    if denom <= 0:
        raise InfeasibleError("all columns punctured: design rate undefined")
    return Fraction(base.n - base.m, denom)


def make_regular(base: BaseMatrix, d_max: int | None = None, name: str = "") -> IrregularProtograph:
    """Attach the point mass at the base entry to every nonzero entry."""
    if d_max is None:
        d_max = max(DEFAULT_D_MAX, int(base.entries.max()))
    dists = {
        (i, j): LocalDegreeDistribution.point_mass(int(base.entries[i, j]), d_max)
        for (i, j) in base.nonzero_indices()
    }
    return IrregularProtograph(base=base, dists=dists, name=name)


def to_edge_perspective(dist: LocalDegreeDistribution) -> EdgePerspectiveDistribution:
    """Node-perspective to edge-perspective: lambda(k) = k L(k) / d_C."""
    if dist.target_degree == 0:
        raise InvalidProtographError("edge perspective undefined for target degree 0")
    dist.require_valid("node-perspective distribution")
    lam = dist.degrees * dist.masses / float(dist.target_degree)
    return EdgePerspectiveDistribution(masses=lam)


def joint_realizations(
    dists: Sequence[LocalDegreeDistribution],
    edge_perspective_index: int | None = None,
) -> Iterator[tuple[tuple[int, ...], float]]:
    """Stream all joint local-degree realizations with their weights.

    The joint distribution of degrees across independently lifted
    subgraphs is the product of the marginals; each yielded item is a
    degree vector (one degree per input distribution) and its
    probability.  If ``edge_perspective_index`` is given, that position
    is weighted by the edge-perspective masses instead of the node
    masses.  Zero-mass combinations are never emitted; the weights over
    the full stream sum to one.
    """
    factors: list[list[tuple[int, float]]] = []
    for pos, dist in enumerate(dists):
        if pos == edge_perspective_index:
            lam = to_edge_perspective(dist)
            items = [(int(k), lam.mass(int(k))) for k in lam.support()]
        else:
            items = [(int(k), dist.mass(int(k))) for k in dist.support()]
        if not items:
            raise InvalidProtographError(f"distribution at position {pos} has empty support")
        factors.append(items)
    for combo in itertools.product(*factors):
        weight = 1.0
        for _, w in combo:
            weight *= w
        yield tuple(k for k, _ in combo), weight


def quantize_distribution(dist: LocalDegreeDistribution, s: int) -> np.ndarray:
    """Integer VN-degree counts for a lifting factor of ``s``.

    Returns counts c over Omega with sum(c) == s and sum(k c(k)) == s*d_C
    exactly.  Counts start from largest-remainder rounding of s*L and a
    repair pass then shifts unit counts between adjacent support degrees
    until the edge total is exact (best-first over the residual, so
    overshoot-and-return sequences are found when the support gaps
    require them).  Raises InfeasibleError when no integer solution
    exists on the support (e.g. parity mismatch of the gaps).
    """
    s = int(s)
    if s < 1:
        raise ValueError("lifting factor must be >= 1")
    dist.require_valid("distribution to quantize")
    support = [int(k) for k in dist.support()]
    target_edges = s * dist.target_degree

    # Largest-remainder rounding: sum of counts is exact by construction.
    scaled = np.array([s * dist.mass(k) for k in support])
    counts = np.floor(scaled).astype(np.int64)
    short = s - int(counts.sum())
    if short < 0:
        raise InfeasibleError("rounding produced too many counts")  # cannot happen for valid L
    order = np.argsort(-(scaled - counts), kind="stable")
    counts[order[:short]] += 1

    excess = int(np.dot(support, counts)) - target_edges
    if excess != 0:
        counts = _repair_edge_total(counts, support, excess)

    out = np.zeros(dist.d_max, dtype=np.int64)
    for k, c in zip(support, counts):
        out[k - 1] = c
    if int(out.sum()) != s or int(np.dot(np.arange(1, dist.d_max + 1), out)) != target_edges:
        raise InfeasibleError("quantization repair failed to reach exact sums")
    return out


def _repair_edge_total(counts: np.ndarray, support: list[int], excess: int) -> np.ndarray:
    """Best-first search over unit shifts between adjacent support degrees.

    State: (counts, residual edge excess).  A shift moves one column from
    support degree a to an adjacent support degree b, changing the excess
    by (b - a); donors must be positive when the move is applied.  The
    search is tiny in practice (a handful of moves) but complete up to a
    node budget, after which the instance is reported infeasible.
    """
    p = len(support)
    if p == 1:
        raise InfeasibleError(
            f"edge total off by {excess} but support has a single degree {support[0]}"
        )
    moves = []
    for a in range(p - 1):
        moves.append((a, a + 1, support[a + 1] - support[a]))
        moves.append((a + 1, a, support[a] - support[a + 1]))

    start = tuple(int(c) for c in counts)
    heap = [(abs(excess), 0, excess, start, ())]
    seen: set[tuple[int, tuple[int, ...]]] = set()
    budget = 200_000
    while heap and budget:
        budget -= 1
        _, n_moves, exc, state, path = heappop(heap)
        if exc == 0:
            fixed = np.array(state, dtype=np.int64)
            return fixed
        key = (exc, state)
        if key in seen:
            continue
        seen.add(key)
        for a, b, step in moves:
            if state[a] <= 0:
                continue
            nxt = list(state)
            nxt[a] -= 1
            nxt[b] += 1
            heappush(heap, (abs(exc + step), n_moves + 1, exc + step, tuple(nxt), path + ((a, b),)))
    raise InfeasibleError(
        f"cannot reach exact edge total on support {support}: residual excess {excess}"
    )


# ---------------------------------------------------------------------------
# JSON protograph files (one-based indices on disk, zero-based in memory)


def protograph_to_dict(proto: IrregularProtograph) -> dict:
    doc: dict = {
        "m": proto.base.m,
        "n": proto.base.n,
        "base": proto.base.entries.tolist(),
        "punctured": [j + 1 for j in sorted(proto.base.punctured)],
    }
    if proto.name:
        doc["name"] = proto.name
    dists = {}
    for (i, j), d in sorted(proto.dists.items()):
        if not d.is_point_mass or d.mass(d.target_degree) < 1.0 - MASS_TOL:
            dists[f"{i + 1},{j + 1}"] = {str(k): v for k, v in sorted(d.itemized().items())}
    if dists:
        doc["dists"] = dists
    d_maxes = {d.d_max for d in proto.dists.values()}
    if len(d_maxes) == 1 and d_maxes != {DEFAULT_D_MAX}:
        doc["d_max"] = d_maxes.pop()
    return doc


def protograph_from_dict(doc: Mapping, name: str = "") -> IrregularProtograph:
    try:
        m = int(doc["m"])
        n = int(doc["n"])
        rows = doc["base"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"protograph JSON missing/invalid field: {exc}") from exc
    if len(rows) != m or any(len(r) != n for r in rows):
        raise SchemaError(f"base shape does not match m={m}, n={n}")
    punct_raw = doc.get("punctured", [])
    for j in punct_raw:
        if not isinstance(j, int) or not 1 <= j <= n:
            raise SchemaError(f"punctured column {j!r} out of range 1..{n}")
    try:
        base = BaseMatrix(entries=np.array(rows), punctured=frozenset(j - 1 for j in punct_raw))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc

    d_max = int(doc.get("d_max", max(DEFAULT_D_MAX, int(base.entries.max()))))
    proto = make_regular(base, d_max=d_max, name=str(doc.get("name", name)))
    raw_dists = doc.get("dists", {})
    if not raw_dists:
        return proto

    dists = dict(proto.dists)
    for key, mapping in raw_dists.items():
        try:
            i_s, j_s = str(key).split(",")
            i, j = int(i_s) - 1, int(j_s) - 1
        except ValueError as exc:
            raise SchemaError(f"dists key {key!r} is not 'i,j'") from exc
        if not (0 <= i < m and 0 <= j < n):
            raise SchemaError(f"dists key {key!r} out of range")
        if base.entries[i, j] == 0:
            raise SchemaError(f"dists key {key!r} refers to a zero base entry")
        try:
            masses = {int(k): float(v) for k, v in mapping.items()}
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"dists[{key!r}] has a non-numeric entry: {exc}") from exc
        if any(k < 1 for k in masses):
            raise SchemaError(f"dists[{key!r}] has a degree below 1")
        dists[(i, j)] = LocalDegreeDistribution.from_mapping(
            masses, target_degree=int(base.entries[i, j]), d_max=max(d_max, max(masses)),
        )
    return IrregularProtograph(base=base, dists=dists, name=str(doc.get("name", name)))


def save_protograph(proto: IrregularProtograph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(protograph_to_dict(proto), indent=2, sort_keys=True) + "\n")


def load_protograph(path: str | Path) -> IrregularProtograph:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top-level JSON value must be an object")
    return protograph_from_dict(doc, name=path.stem)
