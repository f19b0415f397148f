"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import modelfile
from .bmm import GmmPosterior, default_prior, fit_stream, point_estimate
from .data_io import Dataset, SyntheticSpec, generate, read_csv, split, write_csv
from .distributed import (
    DEFAULT_SHARDS,
    PartialPosterior,
    align_components,
    combine,
    partition,
    run_shards,
)
from .errors import DataError, NumericalError
from .evaluation import BenchConfig, CurveRecorder, compare, heldout_avg_ll, write_report
from .modelfile import ModelFile
from .online_em import DEFAULT_ALPHA, OemConfig, oem_fit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    pass


def _read_data(path):
    if not Path(path).is_file():
        raise DataError(f"{path}: no such file")
    return read_csv(path)


def _load_model(path):
    if not Path(path).is_file():
        raise DataError(f"{path}: no such file")
    return modelfile.load(path)


def _as_params(model):
    return point_estimate(model) if isinstance(model, GmmPosterior) else model


def cmd_gen(args):
    spec = SyntheticSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    ds, truth = generate(spec)
    if args.test_out:
        train, test = split(ds, args.train_fraction, seed=spec.seed)
        write_csv(args.out, train)
        write_csv(args.test_out, test)
    else:
        write_csv(args.out, ds)
    if args.truth:
        prov = {"method": "truth", "seed": spec.seed, "n_processed": 0}
        modelfile.save(args.truth, ModelFile(truth, prov))
    return EXIT_OK


def cmd_fit(args):
    data = _read_data(args.input).rows
    M = args.components
    recorder = None
    if args.curve:
        if not args.test:
            raise UsageError("--curve requires --test")
        recorder = CurveRecorder(_read_data(args.test))
    prov = {"method": args.method, "seed": args.prior_seed, "n_processed": int(len(data))}
    if args.method == "bmm":
        if args.prior:
            prior = _load_model(args.prior).model
            if not isinstance(prior, GmmPosterior):
                raise DataError("--prior must hold a posterior, not a point estimate")
        else:
            if M is None:
                raise UsageError("--components is required")
            prior = default_prior(data, M, seed=args.prior_seed)
        post = fit_stream(prior, data, callback=recorder, every=args.every)
        shard = None
        if args.shard_id is not None:
            shard = {"shard_id": args.shard_id, "n_processed": int(len(data)), "permutation": None}
        modelfile.save(args.out, ModelFile(post, prov, shard))
    else:
        if M is None:
            raise UsageError("--components is required")
        params = oem_fit(data, OemConfig(M, alpha=args.alpha, seed=args.prior_seed),
                         callback=recorder, every=args.every)
        prov["alpha"] = args.alpha
        modelfile.save(args.out, ModelFile(params, prov))
    if recorder is not None:
        recorder.curve.to_csv(args.curve)
    return EXIT_OK


def _save_partial(path, part: PartialPosterior, seed):
    prov = {"method": "bmm", "seed": seed, "n_processed": part.n_processed}
    shard = {
        "shard_id": part.shard_id,
        "n_processed": part.n_processed,
        "permutation": None if part.permutation is None else list(part.permutation),
    }
    modelfile.save(path, ModelFile(part.posterior, prov, shard))


def cmd_fit_dist(args):
    data = _read_data(args.input).rows
    if args.shards < 1:
        raise UsageError("--shards must be at least 1")
    prior = default_prior(data, args.components, seed=args.prior_seed)
    shards = partition(data, args.shards, shuffle_seed=args.shuffle_seed)
    partials = align_components(run_shards(shards, prior, max_workers=args.workers))
    post = combine(partials, prior)
    prov = {"method": "odmm", "seed": args.prior_seed, "n_processed": int(len(data)),
            "shards": args.shards}
    modelfile.save(args.out, ModelFile(post, prov))
    if args.emit_partials:
        out = Path(args.emit_partials)
        out.mkdir(parents=True, exist_ok=True)
        modelfile.save(out / "prior.json",
                       ModelFile(prior, {"method": "prior", "seed": args.prior_seed, "n_processed": 0}))
        for part in partials:
            _save_partial(out / f"partial_{part.shard_id}.json", part, args.prior_seed)
    return EXIT_OK


def cmd_combine(args):
    prior_mf = _load_model(args.prior)
    prior = prior_mf.model
    if not isinstance(prior, GmmPosterior):
        raise DataError("--prior must hold a posterior")
    parts = []
    for t, path in enumerate(args.partials):
        mf = _load_model(path)
        if not isinstance(mf.model, GmmPosterior):
            raise DataError(f"{path}: partial must hold a posterior")
        shard = mf.shard or {}
        n = shard.get("n_processed", mf.provenance.get("n_processed", 0))
        parts.append(PartialPosterior(shard.get("shard_id", t), int(n), mf.model, prior))
    parts = align_components(parts)
    post = combine(parts, prior)
    total = int(sum(p.n_processed for p in parts))
    prov = {"method": "odmm", "seed": prior_mf.provenance.get("seed"), "n_processed": total,
            "shards": len(parts)}
    modelfile.save(args.out, ModelFile(post, prov))
    return EXIT_OK


def cmd_eval(args):
    model = _load_model(args.model).model
    test = _read_data(args.test)
    print(repr(heldout_avg_ll(_as_params(model), test)))
    return EXIT_OK


def _bench_data(cfg):
    if "spec" in cfg:
        spec = SyntheticSpec(**{k: (tuple(v) if k == "cond_range" else v) for k, v in cfg["spec"].items()})
        ds, _ = generate(spec)
        info = {"source": "synthetic", "spec": json.loads(spec.to_json())}
    elif "data" in cfg:
        ds = _read_data(cfg["data"])
        info = {"source": str(cfg["data"])}
    else:
        raise DataError("bench config needs either 'spec' or 'data'")
    frac = float(cfg.get("train_fraction", 0.85))
    train, test = split(ds, frac, seed=int(cfg.get("split_seed", 0)))
    info.update({"n_rows": len(ds), "dim": ds.dim, "train_fraction": frac,
                 "split_seed": int(cfg.get("split_seed", 0))})
    return train, test, info


def cmd_bench(args):
    path = Path(args.config)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    train, test, info = _bench_data(cfg)
    bc = BenchConfig(
        n_components=int(cfg["components"]),
        seed=int(cfg.get("seed", 0)),
        alpha=float(cfg.get("alpha", DEFAULT_ALPHA)),
        shards=int(cfg.get("shards", DEFAULT_SHARDS)),
        workers=cfg.get("workers"),
        methods=tuple(cfg.get("methods", ("bmm", "oem", "odmm"))),
    )
    reports = compare(train, test, bc)
    write_report(args.report, info, reports)
    for r in reports:
        print(f"{r.method:5s} avg_ll={r.avg_ll:.6f} seconds={r.seconds:.3f}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="bmmgmm", description="Streaming Gaussian mixture estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic mixture data")
    g.add_argument("--spec", required=True, help="SyntheticSpec JSON file")
    g.add_argument("--out", required=True, help="CSV for the generated rows (training rows with --test-out)")
    g.add_argument("--truth", help="write the true parameters here")
    g.add_argument("--test-out", help="also split off a test CSV")
    g.add_argument("--train-fraction", type=float, default=0.85)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="single-pass fit")
    f.add_argument("--method", choices=("bmm", "oem"), default="bmm")
    f.add_argument("--components", "-M", type=int)
    f.add_argument("--input", required=True)
    f.add_argument("--prior-seed", "--seed", dest="prior_seed", type=int, default=0)
    f.add_argument("--prior", help="start BMM from this posterior file instead of the default prior")
    f.add_argument("--shard-id", type=int, help="tag the output as a shard partial")
    f.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="oEM step exponent")
    f.add_argument("--out", required=True)
    f.add_argument("--curve", help="write the held-out convergence curve (needs --test)")
    f.add_argument("--test")
    f.add_argument("--every", type=int, help="curve cadence in observations")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("fit-dist", help="distributed BMM over contiguous shards")
    d.add_argument("--shards", "-T", type=int, default=DEFAULT_SHARDS)
    d.add_argument("--components", "-M", type=int, required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--prior-seed", "--seed", dest="prior_seed", type=int, default=0)
    d.add_argument("--workers", type=int, help="worker processes (default: min(shards, cpus))")
    d.add_argument("--shuffle-seed", type=int, help="shuffle rows before sharding")
    d.add_argument("--out", required=True)
    d.add_argument("--emit-partials", help="directory for prior.json and partial_<t>.json")
    d.set_defaults(func=cmd_fit_dist)

    c = sub.add_parser("combine", help="merge partial posterior files")
    c.add_argument("--prior", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("partials", nargs="+")
    c.set_defaults(func=cmd_combine)

    e = sub.add_parser("eval", help="average held-out log-likelihood")
    e.add_argument("--model", required=True)
    e.add_argument("--test", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="compare bmm, oem and odmm on one split")
    b.add_argument("--config", required=True)
    b.add_argument("--report", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"bmmgmm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"bmmgmm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
