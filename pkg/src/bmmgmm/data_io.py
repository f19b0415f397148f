"""Synthetic mixture generation, CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bmm import GmmParams
from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """``N x d`` block of finite reals with optional column names.

    ``labels`` is only set for generated data and holds the true component
    of each row.
    """

    rows: np.ndarray
    columns: Optional[tuple] = None
    labels: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2:
            raise DataError(f"dataset must be two-dimensional, got shape {rows.shape}")
        bad = ~np.all(np.isfinite(rows), axis=1)
        if np.any(bad):
            raise DataError(f"row {int(np.argmax(bad)) + 1} contains NaN or Inf")
        if self.columns is not None:
            cols = tuple(str(c) for c in self.columns)
            if len(cols) != rows.shape[1]:
                raise DataError(f"{len(cols)} column names for {rows.shape[1]} columns")
            object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def dim(self):
        return self.rows.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic Gaussian mixture.

    Covariances are random rotations of a diagonal with eigenvalues drawn
    uniformly from ``cond_range``.  Means are rejection-sampled so that every
    pair sits at least ``separation * sqrt(max eigenvalue)`` apart.
    """

    n_components: int = 3
    dim: int = 5
    n_samples: int = 200_000
    seed: int = 0
    weights: Optional[Sequence[float]] = None
    separation: float = 3.0
    cond_range: tuple = (0.5, 2.0)

    def __post_init__(self):
        if self.n_components < 1 or self.dim < 1 or self.n_samples < 0:
            raise ValueError("n_components and dim must be positive, n_samples non-negative")
        lo, hi = self.cond_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid cond_range {self.cond_range}")
        object.__setattr__(self, "cond_range", (float(lo), float(hi)))
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != self.n_components or min(w) <= 0:
                raise ValueError("weights must be positive, one per component")
            object.__setattr__(self, "weights", w)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if "cond_range" in doc:
            doc["cond_range"] = tuple(doc["cond_range"])
        return cls(**doc)

    def to_json(self):
        doc = asdict(self)
        doc["cond_range"] = list(doc["cond_range"])
        if doc["weights"] is not None:
            doc["weights"] = list(doc["weights"])
        return json.dumps(doc, indent=2)


def _random_rotation(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def synthetic_truth(spec: SyntheticSpec) -> GmmParams:
    rng = np.random.default_rng(spec.seed)
    M, d = spec.n_components, spec.dim
    if spec.weights is None:
        w = rng.dirichlet(np.full(M, 5.0))
    else:
        w = np.asarray(spec.weights) / np.sum(spec.weights)
    lo, hi = spec.cond_range
    covs = []
    for _ in range(M):
        q = _random_rotation(d, rng)
        covs.append((q * rng.uniform(lo, hi, size=d)) @ q.T)
    covs = np.array(covs)
    min_dist = spec.separation * math.sqrt(max(np.linalg.eigvalsh(c).max() for c in covs))
    radius = min_dist
    means = None
    for attempt in range(10_000):
        cand = rng.standard_normal((M, d)) * radius
        gaps = np.linalg.norm(cand[:, None] - cand[None], axis=-1)
        gaps[np.diag_indices(M)] = np.inf
        if gaps.min() >= min_dist:
            means = cand
            break
        if attempt % 20 == 19:
            radius *= 1.2
    if means is None:
        raise RuntimeError("could not place well-separated means")
    return GmmParams(w, means, covs)


def sample_gmm(params: GmmParams, n, rng):
    """Draw ``n`` rows from a mixture; returns ``(rows, labels)``."""
    rng = np.random.default_rng(rng)
    labels = rng.choice(params.n_components, size=n, p=params.weights)
    chol = np.linalg.cholesky(params.covs)
    z = rng.standard_normal((n, params.dim))
    rows = params.means[labels] + np.einsum("nij,nj->ni", chol[labels], z)
    return rows, labels


def generate(spec: SyntheticSpec):
    """Draw ``spec.n_samples`` i.i.d. rows; returns ``(Dataset, truth)``."""
    truth = synthetic_truth(spec)
    # independent stream for the samples so n_samples does not move the truth
    rows, labels = sample_gmm(truth, spec.n_samples, [spec.seed, 1])
    return Dataset(rows, labels=labels), truth


def split(ds: Dataset, train_fraction=0.85, seed=0):
    """Random partition into ``ceil(f N)`` training rows and the rest."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in [0, 1]")
    n = len(ds)
    n_train = math.ceil(train_fraction * n)
    perm = np.random.default_rng(seed).permutation(n)
    tr, te = perm[:n_train], perm[n_train:]

    def take(idx):
        labels = None if ds.labels is None else ds.labels[idx]
        return Dataset(ds.rows[idx], ds.columns, labels)

    return take(tr), take(te)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_csv(path) -> Dataset:
    """Read a comma-separated numeric table.

    A header is assumed when any field of the first row is not a number.

    Raises
    ------
    DataError
        On ragged rows, unparsable fields, NaN/Inf, or an empty file.
        Messages carry 1-based line numbers.
    """
    rows, columns = [], None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        width = None
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            if lineno == 1 and not all(_is_number(f) for f in rec):
                columns = tuple(f.strip() for f in rec)
                width = len(columns)
                continue
            if width is None:
                width = len(rec)
            if len(rec) != width:
                raise DataError(f"line {lineno}: expected {width} fields, found {len(rec)}")
            try:
                vals = [float(f) for f in rec]
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"line {lineno}: NaN or Inf value")
            rows.append(vals)
    if width is None:
        raise DataError(f"{path}: no data")
    arr = np.array(rows, dtype=float).reshape(len(rows), width)
    return Dataset(arr, columns)


def write_csv(path, ds: Dataset, header=True):
    """Write rows with shortest round-trip float formatting."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            cols = ds.columns or tuple(f"x{i}" for i in range(ds.dim))
            writer.writerow(cols)
        for row in ds.rows:
            writer.writerow([repr(float(v)) for v in row])
