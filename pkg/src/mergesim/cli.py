"""Batch experiment runner.

Reads a JSON experiment spec, runs the requested sweep (merging runs, HSW
measurement sweeps, rate audits, or typical-set scans), and writes one CSV
table plus one JSON report.  Given the same spec and seed, re-running
reproduces byte-identical CSV output.

Spec format (JSON, schema_version 1)::

    {
      "schema_version": 1,
      "kind": "merge" | "hsw_sweep" | "rate_audit" | "typicality",
      "seed": 7,
      "state":    {"parts": [["A", 2], ["B", 2], ["R", 2]],
                   "amplitudes": [[re, im], ...]},     # merge / rate_audit
      "ensemble": {"weights": [w0, ...],
                   "states": [[[re, im], ...], ...]},  # hsw_sweep, pure states
      "p": [0.9, 0.1],                                 # typicality
      "grid": {"n": [...], "delta": [...], "m": [...]},
      "merge": {"mode": "plain", "m_z": "auto", "m_x": "auto",
                "top_up": "auto"},
      "hash_samples": 8,
      "out": "results"
    }

Complex amplitudes are [re, im] pairs; a state spec is normalized before
use provided its norm is within 1e-6 of one.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import hsw, protocol, typicality
from .errors import ArgumentError, MergesimError, ResourceLimitError
from .qstate import DEFAULT_MAX_DIM, Ensemble, StateVector, SubsystemLayout

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "schema_version", "kind", "row", "n", "delta", "m", "m_z", "m_x",
    "syndrome_q", "seed",
    "s_a", "s_b", "s_r", "i_ar", "s_cond_ab", "s_z_cond", "s_x_cond", "chi_r",
    "identity_gap_max",
    "k_bits", "e_consumed", "e_produced", "rate_k", "rate_e",
    "distance_avg", "distance_worst", "fidelity", "prune_prob",
    "r_marginal_gap",
    "typ_mass", "typ_dim", "typ_dim_bound",
    "epsilon", "r_param", "d_param", "lambda_param", "p_e", "p_e_stderr",
]

COLUMN_DOC = {
    "schema_version": "CSV schema version stamp (constant per file)",
    "kind": "experiment kind of this row",
    "row": "grid-point index in canonical (spec) order",
    "n": "number of copies",
    "delta": "typicality / rate slack parameter",
    "m": "hash syndrome digit count (hsw_sweep rows)",
    "m_z": "amplitude-type syndrome count",
    "m_x": "phase-type syndrome count",
    "syndrome_q": "syndrome alphabet size (2 for plain runs, prime q for pruned)",
    "seed": "seed used for this row",
    "s_a": "entropy of Alice's marginal, bits",
    "s_b": "entropy of Bob's marginal, bits",
    "s_r": "entropy of the reference marginal, bits",
    "i_ar": "mutual information between A and R, bits/copy",
    "s_cond_ab": "conditional entropy S(A|B), bits/copy",
    "s_z_cond": "conditional entropy of the amplitude observable given B",
    "s_x_cond": "conditional entropy of the phase observable given C and B",
    "chi_r": "Holevo quantity of the reference ensemble (pruned phase rate)",
    "identity_gap_max": "largest absolute gap among the three rate identities",
    "k_bits": "classical bits sent (realized syndromes)",
    "e_consumed": "ebits consumed (entanglement top-up)",
    "e_produced": "ebits produced (logical pairs)",
    "rate_k": "k_bits / n",
    "rate_e": "(e_consumed - e_produced) / n; negative = net production",
    "distance_avg": "branch-weighted trace distance to the ideal output",
    "distance_worst": "worst recorded branch distance",
    "fidelity": "branch-weighted squared overlap with the ideal output",
    "prune_prob": "probability of the typical projection succeeding",
    "r_marginal_gap": "trace distance between output and input reference marginals",
    "typ_mass": "probability mass of the typical set",
    "typ_dim": "number of typical strings",
    "typ_dim_bound": "2^(n (H + delta)) bound on typ_dim",
    "epsilon": "measured mass defect of the projector conditions",
    "r_param": "measured operator-dominance factor",
    "d_param": "measured sum-dominance factor",
    "lambda_param": "measured spectral ceiling of the averaged state",
    "p_e": "exact error probability averaged over sampled hash functions",
    "p_e_stderr": "standard error of p_e over the hash sample",
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".12g")
    return str(value)


def _parse_state(obj: dict) -> StateVector:
    try:
        parts = [(str(lbl), int(dim)) for lbl, dim in obj["parts"]]
        amps = np.array([complex(re, im) for re, im in obj["amplitudes"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArgumentError(f"malformed state spec: {exc}") from exc
    layout = SubsystemLayout(parts)
    nrm = float(np.linalg.norm(amps))
    if abs(nrm - 1.0) > 1e-6:
        raise ArgumentError(f"state norm {nrm!r} deviates from 1 by more than 1e-6")
    return StateVector.normalized(layout, amps)


def _parse_ensemble(obj: dict) -> Ensemble:
    try:
        weights = [float(w) for w in obj["weights"]]
        states = []
        for vec in obj["states"]:
            amps = np.array([complex(re, im) for re, im in vec])
            nrm = float(np.linalg.norm(amps))
            if abs(nrm - 1.0) > 1e-6:
                raise ArgumentError(f"ensemble state norm {nrm!r} off by more than 1e-6")
            layout = SubsystemLayout([("B", len(amps))])
            states.append(StateVector.normalized(layout, amps))
    except (KeyError, TypeError, ValueError) as exc:
        raise ArgumentError(f"malformed ensemble spec: {exc}") from exc
    return Ensemble.from_pure(weights, states)


def _require(spec: dict, field: str):
    if field not in spec:
        raise ArgumentError(f"spec is missing required field {field!r}")
    return spec[field]


def _grid(spec: dict, *names: str) -> list[dict]:
    grid = _require(spec, "grid")
    for name in names:
        values = grid.get(name)
        if not values:
            raise ArgumentError(f"grid.{name} must be a nonempty list")
    points = [{}]
    for name in names:
        points = [dict(pt, **{name: v}) for pt in points for v in grid[name]]
    return points


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(1)[0])


def _blank_row(kind: str, row: int, seed: int) -> dict:
    out = {c: None for c in CSV_COLUMNS}
    out.update(schema_version=SCHEMA_VERSION, kind=kind, row=row, seed=seed)
    return out


# ---------------------------------------------------------------------------
# experiment kinds


def _run_merge_point(spec, state, pt, row, seed, args) -> tuple[dict, dict]:
    merge = spec.get("merge", {})
    config = protocol.MergeConfig(
        state=state, n=int(pt["n"]), delta=float(pt["delta"]),
        mode=merge.get("mode", "plain"),
        m_z=merge.get("m_z", "auto"), m_x=merge.get("m_x", "auto"),
        top_up=merge.get("top_up", "auto"),
        seed=seed, max_dim=args.max_dim,
        exhaustive_cap=(10**9 if args.exhaustive_branches == "true"
                        else 0 if args.exhaustive_branches == "false"
                        else 4096),
        branch_samples=int(spec.get("branch_samples", 64)))
    report = protocol.run_merge(config)
    audit = report.audit
    out = _blank_row("merge", row, seed)
    out.update(
        n=report.n, delta=report.delta, m_z=report.m_z, m_x=report.m_x,
        syndrome_q=report.syndrome_alphabet,
        s_a=audit.s_a, s_b=audit.s_b, s_r=audit.s_r,
        i_ar=audit.mutual_information_ar, s_cond_ab=audit.conditional_entropy_ab,
        s_z_cond=audit.amplitude_conditional, s_x_cond=audit.phase_conditional,
        chi_r=audit.reference_holevo,
        identity_gap_max=max(audit.gap_communication, audit.gap_entanglement,
                             audit.gap_phase_identity),
        k_bits=report.k_bits, e_consumed=report.e_consumed,
        e_produced=report.e_produced, rate_k=report.rate_k, rate_e=report.rate_e,
        distance_avg=report.distance_avg, distance_worst=report.distance_worst,
        fidelity=report.fidelity_avg, prune_prob=report.prune_probability,
        r_marginal_gap=report.r_marginal_gap,
        typ_dim=report.typical_dim)
    full = protocol.report_to_json(report)
    full["row"] = row
    return out, full


def _run_rate_audit_point(state, row, seed) -> tuple[dict, dict]:
    audit = protocol.rate_audit(state)
    out = _blank_row("rate_audit", row, seed)
    out.update(
        n=1, s_a=audit.s_a, s_b=audit.s_b, s_r=audit.s_r,
        i_ar=audit.mutual_information_ar, s_cond_ab=audit.conditional_entropy_ab,
        s_z_cond=audit.amplitude_conditional, s_x_cond=audit.phase_conditional,
        chi_r=audit.reference_holevo,
        identity_gap_max=max(audit.gap_communication, audit.gap_entanglement,
                             audit.gap_phase_identity))
    return out, dict(asdict(audit), row=row)


def _run_typicality_point(spec, pt, row, seed) -> tuple[dict, dict]:
    p = _require(spec, "p")
    ts = typicality.typical_set(np.asarray(p, dtype=float), int(pt["n"]), float(pt["delta"]))
    out = _blank_row("typicality", row, seed)
    out.update(n=ts.n, delta=ts.delta, typ_mass=ts.prob_mass, typ_dim=ts.dim,
               typ_dim_bound=ts.dim_bound)
    return out, dict(typicality.descriptor_to_json(ts), row=row)


def _run_hsw_point(spec, ensemble, pt, row, seed) -> tuple[dict, dict]:
    n, delta, m = int(pt["n"]), float(pt["delta"]), int(pt["m"])
    labeled = hsw.iid_extension(ensemble, n)
    ts, q_list = hsw.conditional_typical_projectors(ensemble, n, delta)
    avg = ensemble.average()
    q_proj = typicality.typical_projector(avg, n, delta).matrix
    report = hsw.check_conditions(q_list, q_proj, labeled,
                                  targets=hsw.appendix_targets(ensemble, n, delta))
    pe = hsw.error_probability(labeled, m=m, q=2, n_samples=int(spec.get("hash_samples", 8)),
                               seed=seed)
    out = _blank_row("hsw_sweep", row, seed)
    out.update(n=n, delta=delta, m=m, typ_mass=ts.prob_mass, typ_dim=ts.dim,
               typ_dim_bound=ts.dim_bound,
               epsilon=report.epsilon, r_param=report.r, d_param=report.d,
               lambda_param=report.lam, p_e=pe.mean, p_e_stderr=pe.stderr)
    full = {"row": row, "n": n, "delta": delta, "m": m,
            "condition_report": {"epsilon": report.epsilon, "r": report.r,
                                 "d": report.d, "lambda": report.lam,
                                 "side_info_floor_bits": report.side_info_floor_bits,
                                 "satisfied": report.satisfied,
                                 "margins": report.margins,
                                 "targets": report.targets},
            "p_e": {"mean": pe.mean, "stderr": pe.stderr,
                    "values": list(pe.values), "seeds": list(pe.seeds)}}
    return out, full


def run_spec(spec: dict, args) -> tuple[list[dict], list[dict]]:
    """Execute one experiment spec; returns (csv rows, full JSON records)."""
    if int(spec.get("schema_version", -1)) != SCHEMA_VERSION:
        raise ArgumentError(
            f"spec schema_version must be {SCHEMA_VERSION}, got {spec.get('schema_version')!r}")
    kind = _require(spec, "kind")
    seed = int(args.seed if args.seed is not None else spec.get("seed", 0))

    if kind == "merge":
        state = _parse_state(_require(spec, "state"))
        points = _grid(spec, "n", "delta")
        tasks = [(lambda pt=pt, i=i: _run_merge_point(
            spec, state, pt, i, _child_seed(seed, i), args)) for i, pt in enumerate(points)]
    elif kind == "rate_audit":
        state = _parse_state(_require(spec, "state"))
        tasks = [lambda: _run_rate_audit_point(state, 0, seed)]
    elif kind == "typicality":
        points = _grid(spec, "n", "delta")
        tasks = [(lambda pt=pt, i=i: _run_typicality_point(
            spec, pt, i, _child_seed(seed, i))) for i, pt in enumerate(points)]
    elif kind == "hsw_sweep":
        ensemble = _parse_ensemble(_require(spec, "ensemble"))
        points = _grid(spec, "n", "delta", "m")
        tasks = [(lambda pt=pt, i=i: _run_hsw_point(
            spec, ensemble, pt, i, _child_seed(seed, i))) for i, pt in enumerate(points)]
    else:
        raise ArgumentError(f"unknown experiment kind {kind!r}")

    if args.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(lambda f: f(), tasks))
    else:
        results = [f() for f in tasks]
    rows = [r for r, _ in results]
    full = [f for _, f in results]
    return rows, full


def write_outputs(out_dir: str, spec: dict, rows: list[dict], full: list[dict]) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    json_path = os.path.join(out_dir, "report.json")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    payload = {"schema_version": SCHEMA_VERSION, "kind": spec.get("kind"),
               "spec": spec, "records": full}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return csv_path, json_path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def build_parser() -> argparse.ArgumentParser:
    epilog_lines = ["CSV columns (empty where not applicable):"]
    epilog_lines += [f"  {name}: {COLUMN_DOC[name]}" for name in CSV_COLUMNS]
    parser = argparse.ArgumentParser(
        prog="mergesim",
        description="Run state-merging / measurement experiments from a JSON spec.",
        epilog="\n".join(epilog_lines),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute an experiment spec",
                         epilog="\n".join(epilog_lines),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("spec", help="path to the JSON experiment spec")
    run.add_argument("--out", default=None,
                     help="output directory (default: spec's 'out' field or 'results')")
    run.add_argument("--seed", type=int, default=None,
                     help="seed override (u64); otherwise the spec's seed is used")
    run.add_argument("--max-dim", type=int,
                     default=int(os.environ.get("MERGESIM_MAX_DIM", DEFAULT_MAX_DIM)),
                     help="working-dimension cap (also via MERGESIM_MAX_DIM; "
                          f"default {DEFAULT_MAX_DIM})")
    run.add_argument("--exhaustive-branches", choices=["auto", "true", "false"],
                     default="auto",
                     help="force exhaustive or sampled syndrome branches (default auto)")
    run.add_argument("--workers", type=int, default=1,
                     help="max parallel grid points (output order stays canonical)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: spec parse failure at line {exc.lineno}, column {exc.colno}: "
              f"{exc.msg}", file=sys.stderr)
        return 2
    out_dir = args.out or spec.get("out") or "results"
    try:
        rows, full = run_spec(spec, args)
    except ResourceLimitError as exc:
        print(f"error: resource limit: {exc}", file=sys.stderr)
        return 3
    except MergesimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    csv_path, json_path = write_outputs(out_dir, spec, rows, full)
    print(f"wrote {csv_path} and {json_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
