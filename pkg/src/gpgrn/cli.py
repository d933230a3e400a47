"""Command-line interface: simulate / infer / evaluate / diagnose.

Configuration precedence for `infer`: built-in defaults, then a JSON config
file (--config), then explicit flags.  All resolved values are echoed into
the metadata sidecar next to the results file.

Exit codes: 0 success, 1 data/numerical errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from gpgrn import __version__, dataio, evaluate, sampler, simulate
from gpgrn.errors import InvalidDataError, NumericalDegeneracyError, UndefinedScoreError

WORKERS_ENV = "GPGRN_WORKERS"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpgrn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gpgrn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    sim.add_argument("--genes", type=int, default=5)
    sim.add_argument("--series", type=int, default=3)
    sim.add_argument("--points", type=int, default=21)
    sim.add_argument("--dt", type=float, default=1.0)
    sim.add_argument("--edges", type=int, default=None, help="number of off-diagonal links")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="time-series CSV (wide layout)")
    sim.add_argument("--truth-out", default=None, help="ground-truth edge list CSV")
    sim.add_argument("--ko", default=None, help="comma-separated genes to knock out")
    sim.add_argument("--perturbations-out", default=None, help="perturbations CSV for --ko")

    inf = sub.add_parser("infer", help="run the MCMC sampler and write a ranked edge list")
    inf.add_argument("--data", required=True)
    inf.add_argument("--perturbations", default=None)
    inf.add_argument("--out", required=True)
    inf.add_argument("--config", default=None, help="JSON file with SamplerConfig fields")
    inf.add_argument("--seed", type=int, default=None)
    inf.add_argument("--chains", type=int, default=None)
    inf.add_argument("--burn", type=int, default=None)
    inf.add_argument("--samples", type=int, default=None)
    inf.add_argument("--thinning", type=int, default=None)
    inf.add_argument("--eta", type=float, default=None)
    inf.add_argument("--refinement", type=int, default=None)
    inf.add_argument("--proposal", choices=["crank-nicolson", "basis"], default=None)
    inf.add_argument("--pseudo-inputs", type=int, default=None)
    inf.add_argument(
        "--workers", type=int, default=None,
        help=f"parallel chain workers (default ${WORKERS_ENV} or 1)",
    )

    ev = sub.add_parser("evaluate", help="score a ranked edge list against a ground truth")
    ev.add_argument("--edges", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--plot-data", default=None, help="write ROC/PR point lists to this CSV")

    dg = sub.add_parser("diagnose", help="summarize sampler health from a results sidecar")
    dg.add_argument("--meta", required=True, help="the .meta.json written by infer")
    return p


# argparse flag name -> SamplerConfig field
_FLAG_MAP = {
    "seed": "seed",
    "chains": "n_chains",
    "burn": "n_burn",
    "samples": "n_samples",
    "thinning": "thinning",
    "eta": "eta",
    "refinement": "refinement",
    "proposal": "proposal",
    "pseudo_inputs": "n_pseudo",
}


def resolve_config(args) -> sampler.SamplerConfig:
    values: dict = {}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise InvalidDataError(f"config file not found: {cfg_path}")
        with open(cfg_path) as fh:
            try:
                file_values = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidDataError(f"{cfg_path}: invalid JSON ({exc})") from exc
        known = {f.name for f in fields(sampler.SamplerConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise InvalidDataError(f"{cfg_path}: unknown config keys {sorted(unknown)}")
        values.update(file_values)
    for flag, field_name in _FLAG_MAP.items():
        v = getattr(args, flag)
        if v is not None:
            values[field_name] = v
    try:
        return sampler.SamplerConfig(**values)
    except (TypeError, ValueError) as exc:
        raise InvalidDataError(f"bad configuration: {exc}") from exc


def _cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    n = args.genes
    n_edges = args.edges if args.edges is not None else 2 * n - 2
    model = _random_linear_model(n, n_edges, rng)
    dataset, adjacency = simulate.make_dataset(
        model, n_series=args.series, m_points=args.points, dt=args.dt, rng=rng
    )
    ko_genes: list[int] = []
    if args.ko:
        for name in args.ko.split(","):
            name = name.strip()
            if name not in dataset.genes:
                raise InvalidDataError(f"unknown knockout gene {name!r}")
            ko_genes.append(dataset.genes.index(name))
        simulate.attach_knockouts(dataset, model, ko_genes)
    _write_wide_csv(dataset, args.out)
    if ko_genes:
        pert_path = args.perturbations_out or (str(args.out) + ".perturbations.csv")
        _write_perturbations_csv(dataset, pert_path)
        print(f"wrote {pert_path}")
    if args.truth_out:
        _write_truth_csv(adjacency, dataset.genes, args.truth_out)
        print(f"wrote {args.truth_out}")
    print(f"wrote {args.out} ({n} genes, {args.series} series, {args.points} points each)")
    return 0


def _random_linear_model(n: int, n_edges: int, rng) -> simulate.SyntheticModel:
    """Random sparse stable linear network with unit decay on the diagonal."""
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    chosen = rng.choice(len(off), size=min(n_edges, len(off)), replace=False)
    A = -np.eye(n)
    adjacency = np.zeros((n, n), dtype=int)
    for k in chosen:
        i, j = off[k]
        sign = 1.0 if rng.random() < 0.5 else -1.0
        A[i, j] = sign * rng.uniform(0.4, 0.8)
        adjacency[i, j] = 1
    # push eigenvalues left until Hurwitz
    while np.any(np.real(np.linalg.eigvals(A)) >= 0):
        A -= 0.5 * np.eye(n)
    offset = rng.uniform(0.5, 1.5, size=n)
    return simulate.SyntheticModel(
        n=n, adjacency=adjacency, kind="linear", A=A, offset=offset,
        process_var=np.full(n, 1e-3), meas_var=np.full(n, 1e-3),
    )


def _write_wide_csv(dataset: dataio.Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "time"] + list(dataset.genes))
        for s_idx, s in enumerate(dataset.series, start=1):
            for j in range(s.times.size):
                row = [s_idx, f"{s.times[j]:.10g}"]
                row += [
                    f"{s.values[j, i]:.10g}" if s.mask[j, i] else ""
                    for i in range(dataset.n_genes)
                ]
                w.writerow(row)


def _write_perturbations_csv(dataset: dataio.Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["perturbed_gene", "kind"] + list(dataset.genes))
        for e in dataset.ko_experiments:
            w.writerow(
                [dataset.genes[e.gene], e.kind] + [f"{v:.10g}" for v in e.values]
            )
        for v in dataset.ss_measurements:
            w.writerow(["", "steady_state"] + [f"{x:.10g}" for x in v])


def _write_truth_csv(adjacency: np.ndarray, genes: list[str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "value"])
        n = len(genes)
        for i in range(n):
            for j in range(n):
                if i != j and adjacency[i, j]:
                    w.writerow([genes[j], genes[i], 1])


def _cmd_infer(args) -> int:
    cfg = resolve_config(args)
    dataset = dataio.load_dataset(args.data, args.perturbations)
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    outputs = sampler.run_chains(dataset, cfg, n_workers=max(workers, 1))
    pooled = sampler.pool_chains(outputs)
    meta = {
        "tool": f"gpgrn {__version__}",
        "data": str(args.data),
        "perturbations": str(args.perturbations) if args.perturbations else None,
        "genes": list(dataset.genes),
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "n_chains": cfg.n_chains,
        "samples_per_chain": [o.n_collected for o in outputs],
        "acceptance_rates": [o.acceptance_rates() for o in outputs],
        "degeneracy_rejections": [o.degeneracy_rejections for o in outputs],
    }
    dataio.save_results(pooled.matrix, list(dataset.genes), meta, args.out)
    print(f"wrote {args.out} and {args.out}.meta.json")
    return 0


def _cmd_evaluate(args) -> int:
    scores, genes_s = dataio.load_edge_matrix(args.edges)
    truth, genes_t = dataio.load_edge_matrix(args.truth)
    if genes_s != genes_t:
        # align on the union; unseen pairs count as 0
        union = sorted(set(genes_s) | set(genes_t))
        scores = _reindex(scores, genes_s, union)
        truth = _reindex(truth, genes_t, union)
    roc = evaluate.auroc(scores, truth != 0)
    pr = evaluate.aupr(scores, truth != 0)
    print(f"AUROC {roc:.4f}")
    print(f"AUPR  {pr:.4f}")
    if args.plot_data:
        evaluate.write_plot_data(scores, truth != 0, args.plot_data)
        print(f"wrote {args.plot_data}")
    return 0


def _reindex(mat: np.ndarray, genes: list[str], union: list[str]) -> np.ndarray:
    out = np.zeros((len(union), len(union)))
    idx = [union.index(g) for g in genes]
    out[np.ix_(idx, idx)] = mat
    return out


def _cmd_diagnose(args) -> int:
    path = Path(args.meta)
    if not path.exists():
        raise InvalidDataError(f"metadata file not found: {path}")
    with open(path) as fh:
        meta = json.load(fh)
    print(f"tool: {meta.get('tool', '?')}")
    print(f"chains: {meta.get('n_chains', '?')}, samples per chain: {meta.get('samples_per_chain')}")
    for c_idx, rates in enumerate(meta.get("acceptance_rates", [])):
        parts = ", ".join(f"{k}={v:.2f}" for k, v in sorted(rates.items()))
        print(f"chain {c_idx}: {parts}")
    degen = meta.get("degeneracy_rejections")
    if degen:
        print(f"degeneracy rejections per chain: {degen}")
    low = [
        (c, k, v)
        for c, rates in enumerate(meta.get("acceptance_rates", []))
        for k, v in rates.items()
        if v < 0.05 or v > 0.95
    ]
    for c, k, v in low:
        print(f"warning: chain {c} block {k!r} acceptance {v:.2f} outside [0.05, 0.95]")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "simulate": _cmd_simulate,
        "infer": _cmd_infer,
        "evaluate": _cmd_evaluate,
        "diagnose": _cmd_diagnose,
    }[args.command]
    try:
        return handler(args)
    except (InvalidDataError, NumericalDegeneracyError, UndefinedScoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
