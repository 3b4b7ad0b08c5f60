"""Iterative-decoding threshold analysis for (locally irregular) protographs.

Two engines share the same check-node update but differ on the variable
side:

* ``pexit_run`` — the classical protograph EXIT recursion.  All lifted
  subgraphs are regular, so each edge type contributes its base-matrix
  multiplicity deterministically.
* ``irregular_exit_run`` — the generalized recursion for local VN
  degree distributions.  The VN-to-CN message MI and the a-posteriori
  MI are averages over all joint realizations of the local degrees in a
  column: the outgoing edge's degree is weighted edge-perspective, the
  other edge types node-perspective.  For point-mass distributions the
  sums collapse term by term onto the regular recursion, which the test
  suite pins to 1e-9 per entry.

All message means are non-negative by construction; tiny negative
float residue from the extrinsic subtraction is clipped.  Every call of
the inverse transfer function counts its saturated inputs, and the sum
is reported on the trajectory so saturation is never silent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .capacity import capacity_ebn0_db
from .errors import InfeasibleError, InvalidProtographError
from .jfun import j_fun, j_inv, saturation_count
from .protograph import (
    BaseMatrix,
    IrregularProtograph,
    design_rate,
    joint_realizations,
    make_regular,
    validate,
)

DEFAULT_MAX_ITER = 500
DEFAULT_CONV_TOL = 1e-5


@dataclass(frozen=True)
class MiState:
    """Mutual-information state after one iteration."""

    i_ev: np.ndarray  # (m, n) VN-to-CN extrinsic MI
    i_ec: np.ndarray  # (m, n) CN-to-VN extrinsic MI
    i_app: np.ndarray  # (n,)  a-posteriori MI per VN


@dataclass
class MiTrajectory:
    """Per-iteration MI evolution of one EXIT run."""

    ebn0_db: float
    i_ch: np.ndarray
    states: list[MiState]
    converged: bool
    converged_at: int | None
    iterations_run: int
    saturations: int

    @property
    def final_app(self) -> np.ndarray:
        return self.states[-1].i_app if self.states else np.zeros_like(self.i_ch)


@dataclass
class ThresholdResult:
    """Decoding threshold located by bisection on Eb/N0."""

    threshold_db: float
    precision_db: float
    converged_iterations: int
    evaluations: int
    bracket_lo_db: float
    bracket_hi_db: float
    saturations: int
    max_iter: int
    conv_tol: float
    kind: str

    def gap_to_capacity_db(self, rate: float) -> float:
        return self.threshold_db - capacity_ebn0_db(rate)


def _as_protograph(proto: IrregularProtograph | BaseMatrix) -> IrregularProtograph:
    if isinstance(proto, BaseMatrix):
        return make_regular(proto)
    return proto


def init_channel_mi(proto: IrregularProtograph | BaseMatrix, ebn0_db: float) -> np.ndarray:
    """Channel MI per column: J(4 R Eb/N0) on transmitted columns, 0 on punctured."""
    base = proto if isinstance(proto, BaseMatrix) else proto.base
    rate = float(design_rate(base))
    value = j_fun(4.0 * rate * 10.0 ** (ebn0_db / 10.0))
    i_ch = np.full(base.n, value)
    for j in base.punctured:
        i_ch[j] = 0.0
    return i_ch


def _check_node_update(base: np.ndarray, mask: np.ndarray, i_ev: np.ndarray) -> tuple[np.ndarray, int]:
    """Shared CN update: extrinsic MI out of each check node, per edge type.

    Identical for regular and irregular protographs (check nodes stay
    locally regular).  Entries of zero edge types are forced to 0.
    """
    arg_in = np.where(mask, 1.0 - i_ev, 0.0)
    sats = saturation_count(arg_in[mask])
    mu = np.where(mask, j_inv(arg_in), 0.0)
    row_tot = (base * mu).sum(axis=1, keepdims=True)
    args = np.clip(row_tot - mu, 0.0, None)
    i_ec = np.where(mask, 1.0 - j_fun(args), 0.0)
    return i_ec, sats


def pexit_run(
    proto: IrregularProtograph | BaseMatrix,
    ebn0_db: float,
    max_iter: int = DEFAULT_MAX_ITER,
    conv_tol: float = DEFAULT_CONV_TOL,
    record: bool = True,
) -> MiTrajectory:
    """Classical protograph EXIT recursion for a regular protograph.

    Starting from zero-MI messages, alternates the VN-to-CN and CN-to-VN
    extrinsic updates and stops as soon as every column's a-posteriori
    MI reaches 1 - conv_tol.  Zero edge types never carry messages.
    """
    proto = _as_protograph(proto)
    if not proto.is_regular:
        raise InvalidProtographError("pexit_run requires a regular protograph; "
                                     "use irregular_exit_run for local irregularity")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    base = proto.base.entries.astype(float)
    mask = base > 0

    i_ch = init_channel_mi(proto, ebn0_db)
    sats = saturation_count(i_ch)
    mu_ch = j_inv(i_ch)

    m, n = base.shape
    i_ec = np.zeros((m, n))
    states: list[MiState] = []
    converged_at: int | None = None
    it = 0
    for it in range(1, max_iter + 1):
        sats += saturation_count(i_ec[mask])
        mu_ec = np.where(mask, j_inv(i_ec), 0.0)
        col_tot = (base * mu_ec).sum(axis=0, keepdims=True)
        args = np.clip(col_tot - mu_ec + mu_ch[None, :], 0.0, None)
        i_ev = np.where(mask, j_fun(args), 0.0)

        i_ec, s = _check_node_update(base, mask, i_ev)
        sats += s

        sats += saturation_count(i_ec[mask])
        mu_ec2 = np.where(mask, j_inv(i_ec), 0.0)
        i_app = j_fun(np.clip(mu_ch + (base * mu_ec2).sum(axis=0), 0.0, None))

        if record:
            states.append(MiState(i_ev=i_ev, i_ec=i_ec, i_app=i_app))
        if i_app.min() >= 1.0 - conv_tol:
            converged_at = it
            break

    if not record:
        states = [MiState(i_ev=i_ev, i_ec=i_ec, i_app=i_app)]
    return MiTrajectory(
        ebn0_db=float(ebn0_db),
        i_ch=i_ch,
        states=states,
        converged=converged_at is not None,
        converged_at=converged_at,
        iterations_run=it,
        saturations=sats,
    )


class _ColumnEnumeration:
    """Precomputed joint-degree realizations for one protograph column.

    ``degree_mat`` holds one realization per row: the local VN degree
    drawn for each nonzero edge type of the column.  ``w_node`` weights
    realizations by the product of node-perspective masses (a-posteriori
    update); ``w_edge[t]`` replaces factor t by its edge-perspective
    masses (VN-to-CN update on that edge type).
    """

    def __init__(self, proto: IrregularProtograph, j: int) -> None:
        pairs = proto.column_dists(j)
        self.rows = [i for i, _ in pairs]
        dists = [d for _, d in pairs]
        reals = list(joint_realizations(dists))
        self.degree_mat = np.array([k for k, _ in reals], dtype=float)
        self.w_node = np.array([w for _, w in reals])
        self.w_edge: list[np.ndarray] = []
        for t in range(len(dists)):
            reals_t = list(joint_realizations(dists, edge_perspective_index=t))
            if len(reals_t) != len(reals):
                raise InvalidProtographError(
                    f"edge-perspective support differs from node support in column {j}"
                )
            self.w_edge.append(np.array([w for _, w in reals_t]))


def _column_enumerations(proto: IrregularProtograph) -> list[_ColumnEnumeration]:
    return [_ColumnEnumeration(proto, j) for j in range(proto.base.n)]


def irregular_exit_run(
    proto: IrregularProtograph,
    ebn0_db: float,
    max_iter: int = DEFAULT_MAX_ITER,
    conv_tol: float = DEFAULT_CONV_TOL,
    record: bool = True,
) -> MiTrajectory:
    """EXIT recursion generalized to local VN degree distributions.

    The VN-to-CN MI of edge type (i, j) averages the update argument
    over all joint realizations of the column's local degrees, with the
    outgoing edge weighted edge-perspective and the incoming edge types
    node-perspective.  The CN update is the regular one.  The
    a-posteriori MI averages node-perspective over all realizations.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    report = validate(proto)
    report.require()
    base = proto.base.entries.astype(float)
    mask = base > 0
    m, n = base.shape

    cols = _column_enumerations(proto)
    i_ch = init_channel_mi(proto, ebn0_db)
    sats = saturation_count(i_ch)
    mu_ch = j_inv(i_ch)

    i_ec = np.zeros((m, n))
    states: list[MiState] = []
    converged_at: int | None = None
    it = 0
    for it in range(1, max_iter + 1):
        # VN-to-CN: one batched J evaluation across all columns and edges.
        sats += saturation_count(i_ec[mask])
        mu_ec = np.where(mask, j_inv(i_ec), 0.0)
        args_chunks: list[np.ndarray] = []
        slots: list[tuple[int, int, np.ndarray, int, int]] = []
        offset = 0
        for j, col in enumerate(cols):
            x = mu_ec[col.rows, j]
            base_arg = mu_ch[j] + col.degree_mat @ x
            for t, i in enumerate(col.rows):
                a = np.clip(base_arg - x[t], 0.0, None)
                args_chunks.append(a)
                slots.append((i, j, col.w_edge[t], offset, offset + len(a)))
                offset += len(a)
        mi = j_fun(np.concatenate(args_chunks))
        i_ev = np.zeros((m, n))
        for i, j, w, lo, hi in slots:
            i_ev[i, j] = float(w @ mi[lo:hi])

        i_ec, s = _check_node_update(base, mask, i_ev)
        sats += s

        # A-posteriori: same batching trick, node-perspective weights.
        sats += saturation_count(i_ec[mask])
        mu_ec2 = np.where(mask, j_inv(i_ec), 0.0)
        app_chunks = []
        bounds = []
        offset = 0
        for j, col in enumerate(cols):
            a = np.clip(mu_ch[j] + col.degree_mat @ mu_ec2[col.rows, j], 0.0, None)
            app_chunks.append(a)
            bounds.append((offset, offset + len(a)))
            offset += len(a)
        mi_app = j_fun(np.concatenate(app_chunks))
        i_app = np.array([float(cols[j].w_node @ mi_app[lo:hi]) for j, (lo, hi) in enumerate(bounds)])

        if record:
            states.append(MiState(i_ev=i_ev, i_ec=i_ec, i_app=i_app))
        if i_app.min() >= 1.0 - conv_tol:
            converged_at = it
            break

    if not record:
        states = [MiState(i_ev=i_ev, i_ec=i_ec, i_app=i_app)]
    return MiTrajectory(
        ebn0_db=float(ebn0_db),
        i_ch=i_ch,
        states=states,
        converged=converged_at is not None,
        converged_at=converged_at,
        iterations_run=it,
        saturations=sats,
    )


AnalysisKind = Literal["auto", "pexit", "irregular"]


def exit_runner(
    proto: IrregularProtograph | BaseMatrix,
    kind: AnalysisKind = "auto",
    max_iter: int = DEFAULT_MAX_ITER,
    conv_tol: float = DEFAULT_CONV_TOL,
) -> tuple[str, Callable[[float], MiTrajectory]]:
    """Resolve the analysis kind and return (kind, ebn0 -> trajectory)."""
    proto = _as_protograph(proto)
    if kind == "auto":
        kind = "pexit" if proto.is_regular else "irregular"
    if kind == "pexit":
        fn = lambda x: pexit_run(proto, x, max_iter=max_iter, conv_tol=conv_tol, record=False)
    elif kind == "irregular":
        fn = lambda x: irregular_exit_run(proto, x, max_iter=max_iter, conv_tol=conv_tol, record=False)
    else:
        raise ValueError(f"unknown analysis kind {kind!r}")
    return kind, fn


def find_threshold(
    proto: IrregularProtograph | BaseMatrix,
    bracket_lo_db: float | None = None,
    bracket_hi_db: float | None = None,
    precision_db: float = 0.005,
    max_iter: int = DEFAULT_MAX_ITER,
    conv_tol: float = DEFAULT_CONV_TOL,
    kind: AnalysisKind = "auto",
    expand_limit_db: float = 20.0,
) -> ThresholdResult:
    """Bisect Eb/N0 for the smallest value at which the analysis converges.

    The bracket must fail at its low end and converge at its high end;
    endpoints are expanded in 1 dB steps (up to ``expand_limit_db``)
    when they do not.  The default bracket spans from 0.3 dB below
    channel capacity to 3 dB above it.  Bisection stops once the
    bracket width is at most twice ``precision_db``; the midpoint is
    returned.
    """
    proto = _as_protograph(proto)
    rate = float(design_rate(proto))
    if bracket_lo_db is None or bracket_hi_db is None:
        cap = capacity_ebn0_db(rate)
        bracket_lo_db = cap - 0.3 if bracket_lo_db is None else bracket_lo_db
        bracket_hi_db = cap + 3.0 if bracket_hi_db is None else bracket_hi_db
    if bracket_hi_db <= bracket_lo_db:
        raise ValueError("bracket_hi_db must exceed bracket_lo_db")

    kind, run = exit_runner(proto, kind=kind, max_iter=max_iter, conv_tol=conv_tol)
    evals = 0
    sats = 0
    converged_iters = max_iter
    lo, hi = float(bracket_lo_db), float(bracket_hi_db)

    def probe(x: float) -> bool:
        nonlocal evals, sats, converged_iters
        traj = run(x)
        evals += 1
        sats += traj.saturations
        if traj.converged:
            converged_iters = traj.converged_at
        return traj.converged

    lo0, hi0 = lo, hi
    while probe(lo):
        lo -= 1.0
        if lo0 - lo > expand_limit_db:
            raise InfeasibleError(
                f"analysis converges even at {lo + 1.0:.2f} dB; no failing bracket end found"
            )
    while not probe(hi):
        hi += 1.0
        if hi - hi0 > expand_limit_db:
            raise InfeasibleError(
                f"analysis does not converge up to {hi - 1.0:.2f} dB; no converging bracket end"
            )

    while hi - lo > 2.0 * precision_db:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid

    return ThresholdResult(
        threshold_db=0.5 * (lo + hi),
        precision_db=0.5 * (hi - lo),
        converged_iterations=int(converged_iters),
        evaluations=evals,
        bracket_lo_db=lo,
        bracket_hi_db=hi,
        saturations=sats,
        max_iter=max_iter,
        conv_tol=conv_tol,
        kind=kind,
    )
