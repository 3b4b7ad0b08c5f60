"""Command-line pipeline: analyze, optimize, lift, simulate, plot-data.

Every command writes its primary outputs plus a ``<out>.manifest.json``
recording the resolved configuration, seeds, and SHA-256 digests of all
inputs and outputs.  Timing lives in a separate manifest field so two
runs of the same command with the same seed produce byte-identical
artifacts and manifests that differ only in "timing".

Exit codes: 0 success, 2 input/schema error, 3 infeasibility,
4 internal invariant (audit) failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .alist import punctured_cols_from_sidecar, read_alist, read_sidecar, write_alist
from .capacity import capacity_ebn0_db
from .codes import BUILTIN_NAMES, load_builtin, normalize_protograph
from .errors import AuditError, InfeasibleError, LiprotoError, SchemaError
from .exit import exit_runner, find_threshold
from .lifting import count_4_cycles, lift, remove_4_cycles
from .optimize import OptimizationBudget, optimize_multi_edge, optimize_single_edge
from .protograph import design_rate, load_protograph, save_protograph, validate
from .simulate import run_sweep, write_csv

logger = logging.getLogger(__name__)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


class _Manifest:
    def __init__(self, command: str, args: argparse.Namespace) -> None:
        self.command = command
        self.config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.extra: dict = {}
        self.started = datetime.now(timezone.utc).isoformat()
        self.t0 = time.monotonic()

    def add_input(self, path: Path) -> None:
        self.inputs[str(path)] = _sha256(path)

    def add_output(self, path: Path) -> None:
        self.outputs[str(path)] = _sha256(path)

    def write(self, primary_out: Path) -> Path:
        doc = {
            "tool": "liproto",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            **self.extra,
            "timing": {"started": self.started, "wall_s": time.monotonic() - self.t0},
        }
        path = primary_out.with_name(primary_out.name + ".manifest.json")
        _write_json(path, doc)
        return path


def _load_proto(spec: str, normalize: bool, manifest: _Manifest):
    if spec.lower() in BUILTIN_NAMES:
        proto = load_builtin(spec.lower())
        manifest.extra["protograph_builtin"] = spec.lower()
    else:
        path = Path(spec)
        if not path.exists():
            raise SchemaError(f"protograph file {spec!r} not found "
                              f"(builtins: {', '.join(BUILTIN_NAMES)})")
        manifest.add_input(path)
        proto = load_protograph(path)
        if normalize:
            proto = normalize_protograph(proto)
    report = validate(proto)
    if not report.ok:
        hint = "" if normalize else " (use --normalize to repair masses)"
        raise SchemaError(f"invalid protograph {spec!r}: {report}{hint}")
    manifest.extra["protograph_digest"] = proto.digest()
    return proto


def _parse_edge(text: str) -> tuple[int, int]:
    try:
        i_s, j_s = text.split(",")
        return int(i_s) - 1, int(j_s) - 1
    except ValueError as exc:
        raise SchemaError(f"--edge expects 'i,j' (one-based), got {text!r}") from exc


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args: argparse.Namespace) -> int:
    manifest = _Manifest("analyze", args)
    proto = _load_proto(args.protograph, args.normalize, manifest)
    rate = design_rate(proto)
    out = Path(args.out)

    if args.ebn0 is not None:
        kind, run = exit_runner(proto, kind=args.kind, max_iter=args.max_iter,
                                conv_tol=args.conv_tol)
        # record=True variant for trajectory output
        from .exit import irregular_exit_run, pexit_run

        traj = (pexit_run if kind == "pexit" else irregular_exit_run)(
            proto, args.ebn0, max_iter=args.max_iter, conv_tol=args.conv_tol, record=True
        )
        doc = {
            "code": proto.name or args.protograph,
            "kind": kind,
            "rate": [rate.numerator, rate.denominator],
            "ebn0_db": args.ebn0,
            "converged": traj.converged,
            "converged_at": traj.converged_at,
            "iterations_run": traj.iterations_run,
            "saturations": traj.saturations,
            "conv_tol": args.conv_tol,
            "max_iter": args.max_iter,
            "i_ch": traj.i_ch.tolist(),
            "i_app_per_iteration": [s.i_app.tolist() for s in traj.states],
            "final_i_ev": traj.states[-1].i_ev.tolist(),
            "final_i_ec": traj.states[-1].i_ec.tolist(),
        }
        _write_json(out, doc)
        print(f"{doc['code']}: Eb/N0 {args.ebn0:+.3f} dB -> "
              f"{'converged at iteration ' + str(traj.converged_at) if traj.converged else 'did not converge'}")
    else:
        res = find_threshold(
            proto,
            bracket_lo_db=args.bracket[0] if args.bracket else None,
            bracket_hi_db=args.bracket[1] if args.bracket else None,
            precision_db=args.precision,
            max_iter=args.max_iter,
            conv_tol=args.conv_tol,
            kind=args.kind,
        )
        cap = capacity_ebn0_db(float(rate))
        doc = {
            "code": proto.name or args.protograph,
            "kind": res.kind,
            "rate": [rate.numerator, rate.denominator],
            "capacity_ebn0_db": cap,
            "threshold_db": res.threshold_db,
            "gap_db": res.threshold_db - cap,
            "precision_db": res.precision_db,
            "converged_iterations": res.converged_iterations,
            "evaluations": res.evaluations,
            "saturations": res.saturations,
            "conv_tol": res.conv_tol,
            "max_iter": res.max_iter,
            "bracket": [res.bracket_lo_db, res.bracket_hi_db],
        }
        _write_json(out, doc)
        print(f"{doc['code']}: threshold {res.threshold_db:.4f} dB, "
              f"capacity {cap:.4f} dB, gap {doc['gap_db']:.4f} dB")

    manifest.add_output(out)
    manifest.write(out)
    return 0


# ---------------------------------------------------------------------------
# optimize


def cmd_optimize(args: argparse.Namespace) -> int:
    manifest = _Manifest("optimize", args)
    proto = _load_proto(args.protograph, args.normalize, manifest)
    budget = OptimizationBudget(
        population_size=args.population,
        generations=args.generations,
        max_evaluations=args.max_evals,
        rng_seed=args.seed,
        threshold_precision_db=args.fitness_precision,
        exit_max_iter=args.exit_max_iter,
        conv_tol=args.conv_tol,
        stall_generations=args.stall,
    )
    out = Path(args.out)
    log_path = Path(args.log) if args.log else None

    if args.edge is not None:
        edge = _parse_edge(args.edge)
        record = optimize_single_edge(proto, edge, budget, threads=args.threads)
        from .optimize import with_distribution  # single source for dist installation

        optimized = with_distribution(proto, edge, record.best_dist)
        records = [record]
        if log_path is not None:
            with log_path.open("a") as fh:
                doc = record.to_dict()
                doc.pop("history", None)
                doc.update({"sweep": 0, "accepted": True,
                            "current_threshold_db": record.best_threshold_db})
                fh.write(json.dumps(doc, sort_keys=True) + "\n")
    else:
        optimized, records = optimize_multi_edge(
            proto, budget, log_path=log_path, threads=args.threads
        )

    save_protograph(optimized, out)
    manifest.add_output(out)
    record_path = out.with_name(out.stem + ".records.json")
    _write_json(record_path, {"records": [r.to_dict() for r in records],
                              "threads": args.threads})
    manifest.add_output(record_path)
    if log_path is not None and log_path.exists():
        manifest.add_output(log_path)
    manifest.write(out)
    for r in records:
        print(f"edge ({r.edge[0] + 1},{r.edge[1] + 1}): "
              f"{r.initial_threshold_db:.4f} -> {r.best_threshold_db:.4f} dB "
              f"({r.evaluations} evaluations)")
    return 0


# ---------------------------------------------------------------------------
# lift


def cmd_lift(args: argparse.Namespace) -> int:
    manifest = _Manifest("lift", args)
    proto = _load_proto(args.protograph, args.normalize, manifest)
    pcm = lift(proto, args.s, seed=args.seed)
    residual = None
    if args.girth6:
        pcm, residual = remove_4_cycles(pcm, max_swaps=args.max_swaps, seed=args.seed)
        if residual > 0:
            raise InfeasibleError(
                f"{residual} 4-cycles remain after the swap budget; raise --max-swaps"
            )
    out = Path(args.out)
    extra = {"four_cycle_count": count_4_cycles(pcm)}
    if residual is not None:
        extra["girth6"] = True
    write_alist(pcm, out, extra_provenance=extra)
    manifest.add_output(out)
    from .alist import sidecar_path

    manifest.add_output(sidecar_path(out))
    manifest.write(out)
    print(f"lifted {proto.name or args.protograph} with S={args.s}: "
          f"{pcm.n_rows}x{pcm.n_cols}, {pcm.n_edges} edges, "
          f"{extra['four_cycle_count']} 4-cycles")
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = _Manifest("simulate", args)
    alist_path = Path(args.alist)
    if not alist_path.exists():
        raise SchemaError(f"alist file {args.alist!r} not found")
    manifest.add_input(alist_path)
    data = read_alist(alist_path)
    sidecar = read_sidecar(alist_path)

    if sidecar is not None:
        manifest.add_input(Path(str(alist_path) + ".json"))
        punctured = punctured_cols_from_sidecar(sidecar)
        num, den = sidecar["design_rate"]
        rate = float(Fraction(num, den))
        code_id = sidecar.get("protograph_name") or sidecar.get("protograph_digest", "")
        digest = sidecar.get("protograph_digest", "")
    elif args.punctured_cols is None:
        raise SchemaError(
            "no provenance sidecar found; pass --punctured-cols (use 'none' for an "
            "unpunctured code) so punctured positions are never guessed"
        )
    else:
        punctured = _parse_punctured(args.punctured_cols, data.n_cols)
        rate = None
        code_id = alist_path.stem
        digest = ""
    if args.rate is not None:
        rate = args.rate
    if rate is None:
        raise SchemaError("code rate unknown: pass --rate or supply a provenance sidecar")

    ebn0_list = [float(x) for x in args.ebn0_list.split(",") if x.strip()]
    if not ebn0_list:
        raise SchemaError("--ebn0-list must name at least one Eb/N0 point")

    points = run_sweep(
        data,
        rate=rate,
        ebn0_list=ebn0_list,
        min_frame_errors=args.min_frame_errors,
        max_frames=args.max_frames,
        max_iter=args.max_iter,
        seed=args.seed,
        punctured_cols=punctured,
    )
    out = Path(args.out)
    write_csv(points, out)
    manifest.add_output(out)
    doc = {
        "code": code_id,
        "provenance_digest": digest,
        "rate": rate,
        "seed": args.seed,
        "max_iter": args.max_iter,
        "min_frame_errors": args.min_frame_errors,
        "max_frames": args.max_frames,
        "threshold_db": args.threshold_db,
        "points": [p.to_dict() for p in points],
    }
    json_path = Path(args.json) if args.json else out.with_suffix(".json")
    _write_json(json_path, doc)
    manifest.add_output(json_path)
    manifest.write(out)
    for p in points:
        print(f"Eb/N0 {p.ebn0_db:+.3f} dB: FER {p.fer:.3e} BER {p.ber:.3e} "
              f"({p.frame_errors}/{p.frames_sent} frames)")
    return 0


def _parse_punctured(text: str, n_cols: int) -> np.ndarray:
    if text.strip().lower() == "none":
        return np.array([], dtype=np.int64)
    try:
        cols = sorted(int(t) - 1 for t in text.split(","))
    except ValueError as exc:
        raise SchemaError(f"--punctured-cols expects comma-separated one-based indices: {exc}")
    if any(c < 0 or c >= n_cols for c in cols):
        raise SchemaError("--punctured-cols index out of range")
    return np.array(cols, dtype=np.int64)


# ---------------------------------------------------------------------------
# plot-data


def cmd_plot_data(args: argparse.Namespace) -> int:
    manifest = _Manifest("plot-data", args)
    if not args.results:
        raise SchemaError("at least one simulate JSON result file is required")
    thresholds: dict[str, float] = {}
    for tf in args.threshold_result or []:
        path = Path(tf)
        manifest.add_input(path)
        doc = json.loads(path.read_text())
        thresholds[str(doc["code"])] = float(doc["threshold_db"])

    rows = []
    seen_digests: dict[str, str] = {}
    for rf in args.results:
        path = Path(rf)
        if not path.exists():
            raise SchemaError(f"result file {rf!r} not found")
        manifest.add_input(path)
        doc = json.loads(path.read_text())
        code = str(doc.get("code", path.stem))
        digest = str(doc.get("provenance_digest", ""))
        if code in seen_digests and digest and seen_digests[code] and seen_digests[code] != digest:
            raise SchemaError(f"conflicting provenance digests for code id {code!r}")
        seen_digests.setdefault(code, digest)
        thr = doc.get("threshold_db")
        if thr is None:
            thr = thresholds.get(code)
        for p in doc.get("points", []):
            rows.append((code, float(p["ebn0_db"]), p, thr))

    rows.sort(key=lambda r: (r[0], r[1]))
    out = Path(args.out)
    header = "code,ebn0_db,frames,frame_errors,bit_errors,bits,ber,fer,mean_iters,seed,threshold_db"
    lines = [header]
    for code, ebn0, p, thr in rows:
        lines.append(
            f"{code},{ebn0},{p['frames']},{p['frame_errors']},{p['bit_errors']},"
            f"{p['bits']},{p['ber']},{p['fer']},{p['mean_iters']},{p['seed']},"
            f"{'' if thr is None else thr}"
        )
    out.write_text("\n".join(lines) + "\n")
    manifest.add_output(out)
    manifest.write(out)
    print(f"wrote {len(rows)} rows for {len(seen_digests)} code(s) to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liproto",
        description="Protograph LDPC design with local VN-degree irregularity: "
                    "EXIT threshold analysis, degree optimization, lifting, simulation.",
    )
    parser.add_argument("--version", action="version", version=f"liproto {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_proto_arg(p: argparse.ArgumentParser) -> None:
        p.add_argument("protograph",
                       help=f"protograph JSON file or builtin ({', '.join(BUILTIN_NAMES)})")
        p.add_argument("--normalize", action="store_true",
                       help="renormalize and mean-repair distributions on load")

    p = sub.add_parser("analyze", help="EXIT analysis: decoding threshold or one trajectory")
    add_proto_arg(p)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--threshold", action="store_true", help="bisect the decoding threshold")
    mode.add_argument("--ebn0", type=float, help="run one analysis at this Eb/N0 (dB)")
    p.add_argument("--precision", type=float, default=0.005, help="threshold half-width (dB)")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--conv-tol", type=float, default=1e-5)
    p.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--kind", choices=["auto", "pexit", "irregular"], default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("optimize", help="optimize local degree distributions")
    add_proto_arg(p)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--edge", help="optimize one edge 'i,j' (one-based)")
    mode.add_argument("--sweep", action="store_true", help="element-wise sweep over all edges")
    p.add_argument("--population", type=int, default=40)
    p.add_argument("--generations", type=int, default=60)
    p.add_argument("--stall", type=int, default=12, help="stop after this many stalled generations")
    p.add_argument("--max-evals", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fitness-precision", type=float, default=0.01,
                   help="threshold bisection half-width used as fitness (dB)")
    p.add_argument("--exit-max-iter", type=int, default=500)
    p.add_argument("--conv-tol", type=float, default=1e-5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--log", help="JSON-lines log for crash-resumable sweeps")
    p.add_argument("--out", required=True, help="optimized protograph JSON")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("lift", help="lift a protograph to an alist parity-check matrix")
    add_proto_arg(p)
    p.add_argument("--s", type=int, required=True, help="lifting factor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--girth6", action="store_true", help="remove all 4-cycles")
    p.add_argument("--max-swaps", type=int, default=None)
    p.add_argument("--out", required=True, help="output alist path")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("simulate", help="BI-AWGN Monte Carlo BER/FER sweep")
    p.add_argument("alist", help="parity-check matrix (alist)")
    p.add_argument("--ebn0-list", required=True, help="comma-separated Eb/N0 points (dB)")
    p.add_argument("--rate", type=float, default=None,
                   help="code rate (defaults to the sidecar's design rate)")
    p.add_argument("--punctured-cols", default=None,
                   help="one-based punctured column list, or 'none' (required without sidecar)")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--min-frame-errors", type=int, default=100)
    p.add_argument("--max-frames", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold-db", type=float, default=None,
                   help="annotate results with this decoding threshold")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--json", default=None, help="output JSON path (default: CSV with .json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot-data", help="merge simulate JSONs into one plot-ready CSV")
    p.add_argument("results", nargs="+", help="simulate JSON result files")
    p.add_argument("--threshold-result", action="append",
                   help="analyze JSON whose threshold annotates the matching code id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except AuditError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 4
    except LiprotoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
