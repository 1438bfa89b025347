"""Command-line front door for the pipeline.

Subcommands mirror the workflow stages: `ingest` normalizes a raw segment
tree into an archive, `train-baseline` fits the uncompressed-data forests,
`optimize` runs either search problem on its own, `build-lut` runs both and
assembles the deployable table, `simulate` replays a test corpus through the
node/back-end loop, and `report` turns a run report into per-table CSVs.

Every stochastic command takes one `--seed`; stage seeds derive from it by
name, so any two commands given the same seed agree on the split, the
forests, and the searches.  Primary outputs carry no timestamps and re-runs
reproduce them byte for byte; the manifest sidecar holds the wall-clock
stamp and a digest per output.  Exit codes: 0 success, 1 domain error,
2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence

from .clustering import ClusteringError
from .dataset import (Corpus, CorpusError, Location, load_corpus,
                      read_archive, split_corpus)
from . import dataset
from .energy import (MODES, EnergyError, EnergyModel, default_model,
                     read_config)
from .evolve.grammar import GrammarError
from .evolve.nsga2 import EvolveError, NsgaConfig, nsga2_run, write_front_csv
from .evolve.problems import (objectives_p1, p1_grammar, parse_phenotype_p1,
                              three_by_cluster_count)
from .features import FeatureSelection, feature_matrix
from .forest import ForestError, save_forest
from .pipeline import (LookupTable, PipelineError, REDUCED_FEATURE_NAMES,
                       RunReport, ScaleConfig, baseline_accuracies, build_lut,
                       naive_ratio_from_lut, simulate, train_backend,
                       train_localization)
from .seeds import subseed
from .sensing import CodecError

_DOMAIN_ERRORS = (PipelineError, CorpusError, CodecError, EvolveError,
                  GrammarError, ClusteringError, ForestError, EnergyError,
                  ValueError)


class UsageError(Exception):
    """Bad invocation or refused file operation; exits with code 2."""


# ------------------------------------------------------------- shared helpers

def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _guard(out_dir: str, rels: Sequence[str], force: bool) -> None:
    clashes = [r for r in rels if os.path.exists(os.path.join(out_dir, r))]
    if clashes and not force:
        raise UsageError("refusing to overwrite "
                         + ", ".join(sorted(clashes)) + " (use --force)")


def _manifest(out_dir: str, command: str, args: argparse.Namespace,
              rels: Sequence[str]) -> None:
    skip = {"func", "command"}
    arguments = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    for k, v in arguments.items():
        if isinstance(v, list) and v and isinstance(v[0], Location):
            arguments[k] = [loc.name for loc in v]
    payload = {
        "command": command,
        "arguments": arguments,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": {rel: _sha256(os.path.join(out_dir, rel))
                    for rel in sorted(rels)},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _read_corpus(path: str, locations: Optional[List[Location]]) -> Corpus:
    """Archive file or raw segment tree, location-filtered either way."""
    if os.path.isdir(path):
        corpus = load_corpus(path, locations=locations or dataset.ALL_LOCATIONS)
    elif os.path.exists(path):
        corpus = read_archive(path)
        if locations:
            keep = set(locations)
            corpus = Corpus([s for s in corpus if Location(s.location) in keep],
                            provenance=corpus.provenance)
    else:
        raise UsageError(f"corpus not found: {path}")
    if len(corpus) == 0:
        raise PipelineError(f"no segments selected from {path}")
    return corpus


def _energy(args) -> EnergyModel:
    if getattr(args, "energy_config", None):
        return read_config(args.energy_config)
    return default_model()


def _locations_arg(text: str) -> List[Location]:
    names = [t for t in text.replace(",", " ").split() if t]
    try:
        return [Location[n] for n in names]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown location in {text!r}; choose from "
            + ", ".join(l.name for l in Location))


def _stage_seeds(seed: int) -> Dict[str, int]:
    """One CLI seed fans out to the stages by name."""
    return {"split": subseed(seed, "split"),
            "backend": subseed(seed, "backend"),
            "search": subseed(seed, "search"),
            "sim": subseed(seed, "sim")}


def _split_backend(args):
    corpus = _read_corpus(args.corpus, args.locations)
    seeds = _stage_seeds(args.seed)
    split = split_corpus(corpus, ratio=args.split, seed=seeds["split"])
    backend = train_backend(split.train, seed=seeds["backend"],
                            n_trees=args.trees)
    return split, backend, seeds


# ------------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    out = _out_dir(args)
    rels = ["corpus.jsonl"]
    _guard(out, rels, args.force)
    if not os.path.isdir(args.root):
        raise UsageError(f"dataset root not found: {args.root}")
    corpus = load_corpus(args.root,
                         locations=args.locations or dataset.ALL_LOCATIONS)
    dataset.write_archive(corpus, os.path.join(out, "corpus.jsonl"))
    _manifest(out, "ingest", args, rels)
    print(f"ingest: {len(corpus)} segments from {args.root} -> "
          f"{os.path.join(out, 'corpus.jsonl')}")
    return 0


def cmd_train_baseline(args) -> int:
    out = _out_dir(args)
    split, backend, _ = _split_backend(args)
    locs = [Location(l) for l in split.test.locations()]
    rels = ["baseline.json", "baseline.csv", "forests/fine_location.json"]
    rels += [f"forests/activity_{loc.name}.json" for loc in locs]
    _guard(out, rels, args.force)
    os.makedirs(os.path.join(out, "forests"), exist_ok=True)

    acc = baseline_accuracies(backend, split.test)
    save_forest(backend.fine_location,
                os.path.join(out, "forests", "fine_location.json"))
    for loc in locs:
        save_forest(backend.activity_model(loc),
                    os.path.join(out, "forests", f"activity_{loc.name}.json"))
    table = {loc.name: acc[loc] for loc in locs}
    table["avg"] = sum(acc.values()) / len(acc)
    _write_json(os.path.join(out, "baseline.json"),
                {"accuracy_pct": table, "n_trees": args.trees,
                 "split_ratio": args.split, "seed": args.seed})
    with open(os.path.join(out, "baseline.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location", "accuracy_pct"])
        for name, val in table.items():
            w.writerow([name, f"{val:.4f}"])
    _manifest(out, "train-baseline", args, rels)
    for name, val in table.items():
        print(f"baseline {name:>3s}: {val:6.2f}%")
    return 0


def cmd_optimize(args) -> int:
    out = _out_dir(args)
    split, backend, seeds = _split_backend(args)
    scale = ScaleConfig.named(args.scale)
    locs = ([Location(l) for l in split.train.locations()]
            if not args.locations else args.locations)

    if args.problem == 1:
        rels = [f"fronts/p1_{loc.name}.csv" for loc in locs] + ["selected.json"]
        _guard(out, rels, args.force)
        os.makedirs(os.path.join(out, "fronts"), exist_ok=True)
        selected = {}
        for loc in locs:
            train_loc = split.train.for_location(loc)
            X = feature_matrix(train_loc)
            p1_seed = subseed(seeds["search"], "p1", loc.name)
            front = nsga2_run(
                p1_grammar(),
                lambda ph: objectives_p1(ph, X, p1_seed,
                                         max_iter=scale.kmeans_max_iter),
                NsgaConfig(pop_size=scale.p1_pop,
                           generations=scale.p1_generations,
                           penalty=(31.0, 10.0, 1.0),
                           seed=subseed(seeds["search"], "ge1", loc.name)))
            write_front_csv(os.path.join(out, "fronts",
                                         f"p1_{loc.name}.csv"), front)
            picks = []
            for ind in three_by_cluster_count(front):
                parsed = parse_phenotype_p1(ind.phenotype)
                picks.append({"phenotype": ind.phenotype,
                              "k": parsed.k,
                              "n_features": int(sum(parsed.mask)),
                              "objectives": list(ind.objectives)})
            selected[loc.name] = {"front_size": len(front), "picks": picks}
            print(f"p1 {loc.name:>3s}: front {len(front)}, picks "
                  + ", ".join(f"k={p['k']}" for p in picks))
        _write_json(os.path.join(out, "selected.json"),
                    {"problem": 1, "scale": scale.name, "seed": args.seed,
                     "locations": selected})
        _manifest(out, "optimize", args, rels)
        return 0

    # problem 2 runs the whole per-location search (the ratio assignment is
    # meaningless without the signal-type model it rides on)
    rels = ["selected.json"]
    _guard(out, rels, args.force)
    base = baseline_accuracies(backend, split.test)
    _, results = build_lut(split.train, backend, base, seed=seeds["search"],
                           scale=scale, locations=locs)
    selected = {}
    for res in results:
        selected[res.location.name] = {
            "k": res.model.k,
            "mean_cr": res.mean_cr,
            "train_ar_error": res.train_ar_error,
            "error_budget": (100.0 - base[res.location]) + 5.0,
            "model_phenotype": res.model_phenotype,
            "ratio_phenotype": res.ratio_phenotype,
            "ratios": list(res.assignment.crs),
            "candidates": res.candidates,
        }
        print(f"p2 {res.location.name:>3s}: k={res.model.k} "
              f"cr̄={res.mean_cr:.1f} err={res.train_ar_error:.2f}")
    _write_json(os.path.join(out, "selected.json"),
                {"problem": 2, "scale": scale.name, "seed": args.seed,
                 "locations": selected})
    _manifest(out, "optimize", args, rels)
    return 0


def cmd_build_lut(args) -> int:
    out = _out_dir(args)
    rels = ["lut.json", "search.json"]
    _guard(out, rels, args.force)
    split, backend, seeds = _split_backend(args)
    scale = ScaleConfig.named(args.scale)
    base = baseline_accuracies(backend, split.test)
    lut, results = build_lut(split.train, backend, base, seed=seeds["search"],
                             scale=scale, locations=args.locations or None)
    lut.save(os.path.join(out, "lut.json"))
    summary = {}
    for res in results:
        summary[res.location.name] = {
            "k": res.model.k, "mean_cr": res.mean_cr,
            "train_ar_error": res.train_ar_error,
            "error_budget": (100.0 - base[res.location]) + 5.0,
            "baseline_accuracy": base[res.location],
            "ratios": list(res.assignment.crs),
            "candidates": res.candidates,
        }
        print(f"lut {res.location.name:>3s}: k={res.model.k} "
              f"cr̄={res.mean_cr:.1f} err={res.train_ar_error:.2f} "
              f"budget={summary[res.location.name]['error_budget']:.2f}")
    _write_json(os.path.join(out, "search.json"),
                {"scale": scale.name, "seed": args.seed,
                 "naive_cr": naive_ratio_from_lut(lut), "locations": summary})
    _manifest(out, "build-lut", args, rels)
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    rels = ["report.json", "report.csv"]
    _guard(out, rels, args.force)
    if not os.path.exists(args.lut):
        raise UsageError(f"look-up table not found: {args.lut}")
    lut = LookupTable.load(args.lut)
    split, backend, seeds = _split_backend(args)
    coarse = train_localization(
        split.train, seed=seeds["backend"],
        selection=FeatureSelection.from_names(REDUCED_FEATURE_NAMES))
    report = simulate(
        split.test, backend, _energy(args), seed=seeds["sim"], lut=lut,
        coarse=coarse,
        node_features=FeatureSelection.from_names(REDUCED_FEATURE_NAMES),
        modes=tuple(args.modes), naive_cr=naive_ratio_from_lut(lut),
        locations=args.locations or None)
    report.write_json(os.path.join(out, "report.json"))
    report.write_csv(os.path.join(out, "report.csv"))
    for mode in report.modes():
        try:
            row = report.row(mode, "avg")
        except PipelineError:          # single-location run has no avg row
            row = next(r for r in report.rows if r.mode == mode)
        print(f"{mode:>8s}: cr̄={row.cr_mean:5.1f} ar={row.ar_accuracy:5.1f}% "
              f"total={row.total_mj:6.2f} mJ savings={row.savings_pct:5.2f}%")
    _manifest(out, "simulate", args, rels)
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    rels = ["energy.csv", "accuracy.csv", "ratios.csv"]
    _guard(out, rels, args.force)
    if not os.path.exists(args.report):
        raise UsageError(f"run report not found: {args.report}")
    rep = RunReport.load(args.report)

    def rows(mode):
        return [r for r in rep.rows if r.mode == mode]

    with open(os.path.join(out, "energy.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "location", "sigma_mj", "pi_mj", "tau_mj",
                    "total_mj", "savings_pct"])
        for mode in rep.modes():
            for r in rows(mode):
                w.writerow([r.mode, r.location, f"{r.sigma_mj:.4f}",
                            f"{r.pi_mj:.4f}", f"{r.tau_mj:.4f}",
                            f"{r.total_mj:.4f}", f"{r.savings_pct:.4f}"])
    with open(os.path.join(out, "accuracy.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "location", "ar_accuracy_pct",
                    "loc_coarse_accuracy_pct", "loc_fine_accuracy_pct"])
        for mode in rep.modes():
            for r in rows(mode):
                w.writerow([r.mode, r.location, f"{r.ar_accuracy:.4f}",
                            "" if r.loc_coarse_accuracy is None
                            else f"{r.loc_coarse_accuracy:.4f}",
                            "" if r.loc_fine_accuracy is None
                            else f"{r.loc_fine_accuracy:.4f}"])
    with open(os.path.join(out, "ratios.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "location", "cr_mean_pct", "samples_per_5s",
                    "n_segments"])
        for mode in rep.modes():
            for r in rows(mode):
                w.writerow([r.mode, r.location, f"{r.cr_mean:.4f}",
                            f"{r.samples_per_5s:.2f}", r.n_segments])
    for mode in rep.modes():
        for r in rows(mode):
            if r.location == "avg":
                print(f"{mode:>8s} avg: total={r.total_mj:6.2f} mJ "
                      f"savings={r.savings_pct:5.2f}% ar={r.ar_accuracy:5.1f}%")
    _manifest(out, "report", args, rels)
    return 0


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atcs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, corpus=True):
        if corpus:
            p.add_argument("--corpus", required=True,
                           help="corpus archive (corpus.jsonl) or raw tree")
        if seed:
            p.add_argument("--seed", type=int, required=True,
                           help="master seed; stage seeds derive from it")
            p.add_argument("--split", type=float, default=0.7,
                           help="train fraction (default 0.7)")
            p.add_argument("--trees", type=int, default=100,
                           help="trees per forest (default 100)")
        p.add_argument("--locations", type=_locations_arg, default=None,
                       help="comma-separated subset, e.g. T,RA,LL")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="overwrite existing outputs")

    p = sub.add_parser("ingest", help="normalize a raw segment tree")
    p.add_argument("--root", required=True, help="dataset tree root")
    common(p, seed=False, corpus=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-baseline",
                       help="fit and score the uncompressed-data forests")
    common(p)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("optimize", help="run one search problem")
    p.add_argument("--problem", type=int, choices=(1, 2), required=True,
                   help="1: signal-type models; 2: ratio assignments")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("build-lut",
                       help="run both searches, write the look-up table")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    common(p)
    p.set_defaults(func=cmd_build_lut)

    p = sub.add_parser("simulate", help="replay the test corpus per mode")
    p.add_argument("--lut", required=True, help="look-up table (lut.json)")
    p.add_argument("--energy-config", default=None,
                   help="energy calibration file (default: packaged)")
    p.add_argument("--modes", type=lambda s: s.replace(",", " ").split(),
                   default=list(MODES),
                   help="subset of baseline,naive,adaptive")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="split a run report into tables")
    p.add_argument("--report", required=True, help="report.json from simulate")
    common(p, seed=False, corpus=False)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
