"""Run configuration: a JSON document with a fixed schema.

Example::

    {
      "model": {"dimension": 1, "A": [[0.5]], "B": [[1]], "S": [[1]]},
      "eta0": {"m": [0], "Omega": [[1]]},
      "N": 10000, "n_steps": 200, "seed": 7, "policy": "proportional",
      "reps": 1, "observables": ["norm2"]
    }

``model`` may instead be ``{"continuous": {"C": .., "D": .., "F": ..,
"delta": .., "scheme": "exact"}}``. An optional ``k_step`` block
(``{"k": 3 | "auto", "updated": false, "k_max": 100, "fill_gaps": false}``)
selects the k-step importance model. Matrices are nested row-major lists; a
bare number is accepted for ``d = 1``.
"""
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .engine import OBSERVABLES, POLICIES
from .errors import ConfigError
from .gaussian import GaussianMeasure, GaussianModel, discretize_continuous

DEFAULTS = {
    "N": 1000,
    "n_steps": 100,
    "seed": 0,
    "policy": "proportional",
    "reps": 1,
    "observables": [],
    "burn_in": [10.0, 2.0],
    "N_list": [1000, 10000, 100000],
    "n": None,
    "k_step": None,
}
NOT_HASHED = ("out", "threads")
KSTEP_KEYS = {"k", "updated", "k_max", "fill_gaps"}


def _matrix(value, d, name):
    try:
        return np.array(value, dtype=float).reshape(d, d)
    except (TypeError, ValueError):
        raise ConfigError(f"not a {d}x{d} row-major decimal matrix", field=name) from None


def _int(doc, key, lo):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"must be an integer >= {lo}", field=key)
    return v


def parse_model(doc):
    if not isinstance(doc, dict):
        raise ConfigError("must be an object", field="model")
    if "continuous" in doc:
        c = doc["continuous"]
        try:
            C = np.atleast_2d(np.array(c["C"], dtype=float))
            d = C.shape[0]
            return discretize_continuous(C, _matrix(c["D"], d, "model.continuous.D"),
                                         _matrix(c["F"], d, "model.continuous.F"),
                                         float(c["delta"]), c.get("scheme", "exact"))
        except KeyError as exc:
            raise ConfigError("missing entry", field=f"model.continuous.{exc.args[0]}") from None
    doc = dict(doc)
    if "dimension" not in doc and "A" in doc:
        doc["dimension"] = int(np.atleast_2d(np.array(doc["A"], dtype=float)).shape[0])
    return GaussianModel.from_dict(doc)


def parse_measure(doc, d):
    if doc is None:
        return GaussianMeasure(np.zeros(d), np.eye(d))
    try:
        m = np.array(doc["m"], dtype=float).reshape(d)
    except KeyError:
        raise ConfigError("missing mean", field="eta0.m") from None
    except (TypeError, ValueError):
        raise ConfigError(f"not a vector of length {d}", field="eta0.m") from None
    if "Omega" not in doc:
        raise ConfigError("missing covariance", field="eta0.Omega")
    return GaussianMeasure(m, _matrix(doc["Omega"], d, "eta0.Omega"))


@dataclass
class RunConfig:
    """Validated configuration; ``doc`` keeps the canonical document."""

    doc: dict
    model: GaussianModel = field(repr=False)
    eta0: GaussianMeasure = field(repr=False)

    def __getattr__(self, key):
        doc = self.__dict__.get("doc", {})
        if key in doc:
            return doc[key]
        raise AttributeError(key)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("top level must be an object")
        unknown = set(raw) - set(DEFAULTS) - {"model", "eta0", "out", "threads"}
        if unknown:
            raise ConfigError("unknown key", field=sorted(unknown)[0])
        if "model" not in raw:
            raise ConfigError("missing", field="model")
        doc = dict(DEFAULTS)
        doc.update(raw)
        model = parse_model(doc["model"])
        eta0 = parse_measure(doc.get("eta0"), model.d)
        doc["N"] = _int(doc, "N", 2)
        doc["n_steps"] = _int(doc, "n_steps", 0)
        doc["reps"] = _int(doc, "reps", 1)
        doc["seed"] = _int(doc, "seed", 0)
        if doc["seed"] >= 2 ** 64:
            raise ConfigError("must fit in 64 bits", field="seed")
        if doc["policy"] not in POLICIES:
            raise ConfigError(f"must be one of {POLICIES}", field="policy")
        obs = doc["observables"]
        if not isinstance(obs, list) or any(o not in OBSERVABLES for o in obs):
            raise ConfigError(f"must be a list drawn from {sorted(OBSERVABLES)}", field="observables")
        bi = doc["burn_in"]
        if not (isinstance(bi, int) and bi >= 0) and not (
                isinstance(bi, list) and len(bi) == 2 and all(isinstance(v, (int, float)) for v in bi)):
            raise ConfigError("must be a step index or a pair [a, b]", field="burn_in")
        if not isinstance(doc["N_list"], list) or len(doc["N_list"]) < 2 or \
                any(not isinstance(v, int) or v < 2 for v in doc["N_list"]):
            raise ConfigError("must list at least two walker counts >= 2", field="N_list")
        if doc["n"] is not None:
            doc["n"] = _int(doc, "n", 0)
        ks = doc["k_step"]
        if ks is not None:
            if not isinstance(ks, dict) or set(ks) - KSTEP_KEYS:
                raise ConfigError(f"must be an object with keys {sorted(KSTEP_KEYS)}", field="k_step")
            k = ks.get("k", "auto")
            if k != "auto" and (isinstance(k, bool) or not isinstance(k, int) or k < 1):
                raise ConfigError("must be 'auto' or an integer >= 1", field="k_step.k")
        if "threads" in doc:
            doc["threads"] = _int(doc, "threads", 1)
        return cls(doc, model, eta0)

    @classmethod
    def loads(cls, text):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno} col {exc.colno}: {exc.msg}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}", field="config") from None
        return cls.loads(text)

    def with_overrides(self, **kw):
        doc = {k: v for k, v in self.doc.items()}
        doc.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(doc)

    def to_dict(self):
        return dict(self.doc)

    def dumps(self):
        return json.dumps(self.doc, sort_keys=True, indent=2)

    @property
    def config_hash(self):
        core = {k: v for k, v in self.doc.items() if k not in NOT_HASHED}
        blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def step(self):
        return self.doc["n"] if self.doc["n"] is not None else self.doc["n_steps"]
