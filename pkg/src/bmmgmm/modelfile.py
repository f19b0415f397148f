"""JSON model files: point estimates, full posteriors and shard partials.

Floats are written with Python's shortest round-trip ``repr`` so a posterior
survives save/load bit-for-bit; this is also the exchange format between
shard workers.  Keys are emitted in a fixed order, so identical models give
identical bytes.

Layout (``schema = "bmmgmm.model/1"``)::

    {
      "schema": "bmmgmm.model/1",
      "kind": "posterior" | "params",
      "family": "normal-wishart" | "normal-gamma",      # posterior only
      "n_components": M,
      "dim": d,
      "provenance": {"method": ..., "seed": ..., "n_processed": ..., ...},
      # kind == "posterior"
      "dirichlet": [a_1, ..., a_M],
      "components": [{"mu0": [...], "kappa": k, "W": [[...]], "nu": v}, ...]
                 or [{"alpha": .., "kappa": .., "beta": .., "gamma": ..}, ...],
      # kind == "params"
      "weights": [...], "means": [[...]], "covs": [[[...]]]
    }

Partial posteriors add a ``"shard"`` object with ``shard_id``,
``n_processed`` and ``permutation``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .bmm import NORMAL_GAMMA, NORMAL_WISHART, GmmParams, GmmPosterior
from .distributions import DirichletParams, NormalGammaParams, NormalWishartParams
from .errors import DataError

SCHEMA = "bmmgmm.model/1"


@dataclass(frozen=True)
class ModelFile:
    model: Union[GmmPosterior, GmmParams]
    provenance: dict = field(default_factory=dict)
    shard: Optional[dict] = None

    @property
    def kind(self):
        return "posterior" if isinstance(self.model, GmmPosterior) else "params"


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _component_doc(c):
    if isinstance(c, NormalGammaParams):
        return {"alpha": c.alpha, "kappa": c.kappa, "beta": c.beta, "gamma": c.gamma}
    return {"mu0": _floats(c.mu0), "kappa": c.kappa, "W": _floats(c.W), "nu": c.nu}


def to_document(mf: ModelFile) -> dict:
    m = mf.model
    doc = {"schema": SCHEMA, "kind": mf.kind}
    if isinstance(m, GmmPosterior):
        doc["family"] = m.family
    doc["n_components"] = m.n_components
    doc["dim"] = m.dim
    doc["provenance"] = dict(mf.provenance)
    if mf.shard is not None:
        doc["shard"] = dict(mf.shard)
    if isinstance(m, GmmPosterior):
        doc["dirichlet"] = _floats(m.weights.a)
        doc["components"] = [_component_doc(c) for c in m.components]
    else:
        doc["weights"] = _floats(m.weights)
        doc["means"] = _floats(m.means)
        doc["covs"] = _floats(m.covs)
    return doc


def dumps(mf: ModelFile) -> str:
    return json.dumps(to_document(mf), indent=2, allow_nan=False) + "\n"


def from_document(doc: dict) -> ModelFile:
    if doc.get("schema") != SCHEMA:
        raise DataError(f"unsupported model schema {doc.get('schema')!r}")
    try:
        if doc["kind"] == "posterior":
            family = doc["family"]
            if family == NORMAL_GAMMA:
                comps = [NormalGammaParams(c["alpha"], c["kappa"], c["beta"], c["gamma"])
                         for c in doc["components"]]
            elif family == NORMAL_WISHART:
                comps = [NormalWishartParams(np.array(c["mu0"]), c["kappa"], np.array(c["W"]), c["nu"])
                         for c in doc["components"]]
            else:
                raise DataError(f"unknown family {family!r}")
            model = GmmPosterior(DirichletParams(np.array(doc["dirichlet"])), tuple(comps))
        elif doc["kind"] == "params":
            model = GmmParams(np.array(doc["weights"]), np.array(doc["means"]), np.array(doc["covs"]))
        else:
            raise DataError(f"unknown model kind {doc['kind']!r}")
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model file: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"invalid model parameters: {exc}") from exc
    if model.n_components != doc["n_components"] or model.dim != doc["dim"]:
        raise DataError("model file header disagrees with its parameters")
    return ModelFile(model, doc.get("provenance", {}), doc.get("shard"))


def loads(text: str) -> ModelFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}") from exc
    return from_document(doc)


def save(path, mf: ModelFile):
    Path(path).write_text(dumps(mf), encoding="utf-8")


def load(path) -> ModelFile:
    return loads(Path(path).read_text(encoding="utf-8"))
