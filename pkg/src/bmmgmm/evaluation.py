"""Held-out scoring, convergence curves and method comparison."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .bmm import GmmParams, default_cadence, default_prior, fit_stream, gmm_loglik, point_estimate
from .distributed import DEFAULT_SHARDS, fit_distributed
from .online_em import DEFAULT_ALPHA, OemConfig, oem_fit

METHODS = ("bmm", "oem", "odmm")


def heldout_avg_ll(params: GmmParams, test) -> float:
    """Average log-likelihood of the test rows under ``params``."""
    rows = getattr(test, "rows", test)
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        raise ValueError("test set is empty")
    return gmm_loglik(params, rows)


@dataclass
class ConvergenceCurve:
    """``(n_observed, avg_heldout_loglik)`` pairs with strictly increasing ``n``."""

    points: list = field(default_factory=list)

    def append(self, n, value):
        if self.points and n <= self.points[-1][0]:
            raise ValueError("curve abscissae must be strictly increasing")
        self.points.append((int(n), float(value)))

    @property
    def n(self):
        return np.array([p[0] for p in self.points], dtype=int)

    @property
    def loglik(self):
        return np.array([p[1] for p in self.points])

    def __len__(self):
        return len(self.points)

    def to_csv(self, path):
        lines = ["n,avg_loglik"] + [f"{n},{v!r}" for n, v in self.points]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class CurveRecorder:
    """Fit callback that scores each reported point estimate on ``test``."""

    def __init__(self, test):
        self.test = np.asarray(getattr(test, "rows", test), dtype=float)
        self.curve = ConvergenceCurve()

    def __call__(self, n, params):
        self.curve.append(n, heldout_avg_ll(params, self.test))


def capture_curve(fit_fn: Callable, test, every=None):
    """Run ``fit_fn(callback=..., every=...)`` and record the held-out curve.

    Returns ``(fit result, ConvergenceCurve)``.
    """
    rec = CurveRecorder(test)
    result = fit_fn(callback=rec, every=every)
    return result, rec.curve


@dataclass(frozen=True)
class BenchConfig:
    n_components: int
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    shards: int = DEFAULT_SHARDS
    workers: Optional[int] = None
    methods: tuple = METHODS

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True)
class RunReport:
    method: str
    M: int
    d: int
    n_train: int
    n_test: int
    seed: int
    avg_ll: float
    seconds: float
    config: dict


def run_method(method, train, config: BenchConfig):
    """Fit one method; returns ``(GmmParams, seconds)`` timing only the fit."""
    train = np.asarray(train, dtype=float)
    M = config.n_components
    t0 = time.perf_counter()
    if method == "bmm":
        params = point_estimate(fit_stream(default_prior(train, M, seed=config.seed), train))
    elif method == "oem":
        params = oem_fit(train, OemConfig(M, alpha=config.alpha, seed=config.seed))
    elif method == "odmm":
        prior = default_prior(train, M, seed=config.seed)
        post, _ = fit_distributed(train, prior, config.shards, max_workers=config.workers)
        params = point_estimate(post)
    else:
        raise ValueError(f"unknown method {method!r}")
    return params, time.perf_counter() - t0


def compare(train, test, config: BenchConfig, methods: Optional[Sequence[str]] = None):
    """Run each method on the same split and seed, one after another."""
    train = np.asarray(getattr(train, "rows", train), dtype=float)
    test = np.asarray(getattr(test, "rows", test), dtype=float)
    reports = []
    for method in methods or config.methods:
        params, seconds = run_method(method, train, config)
        reports.append(RunReport(
            method=method,
            M=config.n_components,
            d=train.shape[1],
            n_train=train.shape[0],
            n_test=test.shape[0],
            seed=config.seed,
            avg_ll=heldout_avg_ll(params, test),
            seconds=seconds,
            config=asdict(config),
        ))
    return reports


def report_document(dataset: dict, reports: Sequence[RunReport]) -> dict:
    runs = []
    for r in reports:
        doc = asdict(r)
        doc["config"] = dict(doc["config"], methods=list(r.config["methods"]))
        runs.append(doc)
    return {"dataset": dict(dataset), "runs": runs}


def write_report(path, dataset: dict, reports: Sequence[RunReport]):
    doc = report_document(dataset, reports)
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def expected_curve_length(n, every=None):
    every = default_cadence(n) if every is None else every
    return math.ceil(n / every)
