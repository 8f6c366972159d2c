"""A small dialect-aware acoustic classifier.

Two tanh hidden layers form the shared body. A one-hot Geo-vector over the
10 dialect regions goes through its own affine layer and is added to the
second hidden layer's output. Each region then has its own affine+softmax
head, and a sample is routed to the head of its region. Parameter groups can
be frozen, which is how a single dialect head is adapted without touching
anything else.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

NUM_DIALECTS = 10
BODY_GROUPS = ("body.0", "body.1", "geo")


def head_group(region: int) -> str:
    return f"head.{region}"


ALL_GROUPS = BODY_GROUPS + tuple(head_group(r) for r in range(1, NUM_DIALECTS + 1))


def geo_vector(region: int) -> np.ndarray:
    _check_region(region)
    v = np.zeros(NUM_DIALECTS)
    v[region - 1] = 1.0
    return v


def _check_region(region) -> None:
    if not (isinstance(region, (int, np.integer)) and 1 <= region <= NUM_DIALECTS):
        raise ValueError(f"dialect region must be an integer in 1..{NUM_DIALECTS}, got {region!r}")


@dataclass
class ToyBatch:
    features: np.ndarray
    labels: np.ndarray
    regions: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        self.regions = np.asarray(self.regions, dtype=int).reshape(-1)
        n = len(self.features)
        if len(self.labels) != n or len(self.regions) != n:
            raise ValueError(f"batch length mismatch: {n} features, {len(self.labels)} labels, "
                             f"{len(self.regions)} regions")
        if n and (self.regions.min() < 1 or self.regions.max() > NUM_DIALECTS):
            raise ValueError(f"region ids must lie in 1..{NUM_DIALECTS}")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, mask) -> "ToyBatch":
        return ToyBatch(self.features[mask], self.labels[mask], self.regions[mask])

    def write(self, path) -> None:
        """One sample per line: region, label, then space-separated features."""
        with open(path, "w", encoding="utf-8") as f:
            for x, y, r in zip(self.features, self.labels, self.regions):
                f.write(f"{r}\t{y}\t{' '.join(repr(float(v)) for v in x)}\n")

    @classmethod
    def read(cls, path) -> "ToyBatch":
        xs, ys, rs = [], [], []
        with open(path, encoding="utf-8") as f:
            for n, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    r, y, feats = line.rstrip("\n").split("\t")
                    xs.append([float(v) for v in feats.split()])
                    ys.append(int(y))
                    rs.append(int(r))
                except ValueError:
                    raise ValueError(f"{path}:{n}: expected 'region<TAB>label<TAB>features'") from None
        if len({len(x) for x in xs}) > 1:
            raise ValueError(f"{path}: inconsistent feature dimensions")
        return cls(np.array(xs), np.array(ys), np.array(rs))


class ToyTask:
    """Synthetic classification data with dialect-dependent distortion.

    Every unit has a prototype feature vector. A region pulls each unit's
    features towards a region-specific partner unit by ``shift[region]``,
    so a shared model confuses units in a way only a region head can undo.
    """

    def __init__(self, n_features: int = 16, n_units: int = 8, seed: int = 0,
                 noise: float = 0.6, max_shift: float = 0.45):
        rng = np.random.default_rng(seed)
        self.n_features, self.n_units, self.noise = n_features, n_units, noise
        self.prototypes = rng.standard_normal((n_units, n_features))
        self.partner = {r: rng.permutation(n_units) for r in range(1, NUM_DIALECTS + 1)}
        self.shift = {r: float(s) for r, s in
                      zip(range(1, NUM_DIALECTS + 1), rng.uniform(0.1, max_shift, NUM_DIALECTS))}

    def sample(self, n: int, regions=None, seed: int = 0) -> ToyBatch:
        rng = np.random.default_rng(seed)
        if regions is None:
            regions = range(1, NUM_DIALECTS + 1)
        regions = np.asarray(list(regions), dtype=int)
        r = regions[rng.integers(len(regions), size=n)]
        y = rng.integers(self.n_units, size=n)
        x = np.empty((n, self.n_features))
        for i in range(n):
            s = self.shift[r[i]]
            other = self.prototypes[self.partner[r[i]][y[i]]]
            x[i] = (1 - s) * self.prototypes[y[i]] + s * other
        x += self.noise * rng.standard_normal(x.shape)
        return ToyBatch(x, y, r)


class ToyGeoAm(BaseEstimator, ClassifierMixin):
    """Geo-vector conditioned classifier with per-dialect heads.

    ``fit(X, y, regions=...)`` trains every group by full-batch gradient
    descent; ``predict_proba(X, regions=...)`` returns unit posteriors.
    """

    def __init__(self, hidden: int = 64, learning_rate: float = 0.5, n_epochs: int = 300,
                 init_scale: float = 1.0, seed: int = 0):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.init_scale = init_scale
        self.seed = seed

    # parameters

    def initialize(self, n_features: int, n_units: int) -> "ToyGeoAm":
        rng = np.random.default_rng(self.seed)
        h, s = self.hidden, self.init_scale

        def mat(fan_in, fan_out):
            return s * rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)

        p = {
            "body.0.W": mat(n_features, h), "body.0.b": np.zeros(h),
            "body.1.W": mat(h, h), "body.1.b": np.zeros(h),
            "geo.W": mat(NUM_DIALECTS, h), "geo.b": np.zeros(h),
        }
        for r in range(1, NUM_DIALECTS + 1):
            p[f"{head_group(r)}.W"] = mat(h, n_units)
            p[f"{head_group(r)}.b"] = np.zeros(n_units)
        self.params_ = p
        self.n_features_in_ = n_features
        self.classes_ = np.arange(n_units)
        self.frozen_ = set()
        return self

    def group_params(self, group: str) -> list[str]:
        if group not in ALL_GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        return [f"{group}.W", f"{group}.b"]

    def freeze(self, groups) -> None:
        for g in groups:
            self.group_params(g)
        self.frozen_ = set(groups)

    # forward and backward

    def _check(self, X, regions):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        regions = np.broadcast_to(np.asarray(regions, dtype=int), (len(X),))
        if len(regions) and (regions.min() < 1 or regions.max() > NUM_DIALECTS):
            raise ValueError(f"region ids must lie in 1..{NUM_DIALECTS}")
        return X, regions

    def _forward(self, X, regions):
        p = self.params_
        h1 = np.tanh(X @ p["body.0.W"] + p["body.0.b"])
        t2 = np.tanh(h1 @ p["body.1.W"] + p["body.1.b"])
        G = np.zeros((len(X), NUM_DIALECTS))
        G[np.arange(len(X)), regions - 1] = 1.0
        h2 = t2 + G @ p["geo.W"] + p["geo.b"]
        logits = np.empty((len(X), len(self.classes_)))
        for r in np.unique(regions):
            idx = regions == r
            logits[idx] = h2[idx] @ p[f"head.{r}.W"] + p[f"head.{r}.b"]
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs = e / e.sum(axis=1, keepdims=True)
        return probs, (X, h1, t2, G, h2)

    def predict_proba(self, X, regions) -> np.ndarray:
        X, regions = self._check(X, regions)
        return self._forward(X, regions)[0]

    def predict(self, X, regions) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X, regions), axis=1)]

    def score(self, X, y, regions=None) -> float:
        if regions is None:
            raise ValueError("regions are required")
        return float(np.mean(self.predict(X, regions) == np.asarray(y)))

    def loss_and_grads(self, batch: ToyBatch):
        """Mean cross-entropy and its gradient for every parameter."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        X, regions = self._check(batch.features, batch.regions)
        y = batch.labels
        if y.min() < 0 or y.max() >= len(self.classes_):
            raise ValueError("label outside the unit inventory")
        probs, (X, h1, t2, G, h2) = self._forward(X, regions)
        n = len(X)
        loss = float(-np.mean(np.log(probs[np.arange(n), y])))
        d = probs.copy()
        d[np.arange(n), y] -= 1.0
        d /= n
        p = self.params_
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dh2 = np.empty_like(h2)
        for r in np.unique(regions):
            idx = regions == r
            grads[f"head.{r}.W"] = h2[idx].T @ d[idx]
            grads[f"head.{r}.b"] = d[idx].sum(axis=0)
            dh2[idx] = d[idx] @ p[f"head.{r}.W"].T
        grads["geo.W"] = G.T @ dh2
        grads["geo.b"] = dh2.sum(axis=0)
        dz1 = dh2 * (1.0 - t2 ** 2)
        grads["body.1.W"] = h1.T @ dz1
        grads["body.1.b"] = dz1.sum(axis=0)
        dz0 = (dz1 @ p["body.1.W"].T) * (1.0 - h1 ** 2)
        grads["body.0.W"] = X.T @ dz0
        grads["body.0.b"] = dz0.sum(axis=0)
        return loss, grads

    def train_step(self, batch: ToyBatch, learning_rate: float, freeze=None) -> float:
        """One gradient-descent step on the unfrozen groups; returns the loss
        before the step. Frozen arrays are never written."""
        if learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        frozen = self.frozen_ if freeze is None else set(freeze)
        loss, grads = self.loss_and_grads(batch)
        if learning_rate == 0:
            return loss
        for g in ALL_GROUPS:
            if g in frozen:
                continue
            for name in self.group_params(g):
                self.params_[name] = self.params_[name] - learning_rate * grads[name]
        return loss

    def fit(self, X, y, regions=None):
        if regions is None:
            raise ValueError("regions are required")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=int)
        if not hasattr(self, "params_"):
            self.initialize(X.shape[1], int(y.max()) + 1)
        batch = ToyBatch(X, y, np.broadcast_to(np.asarray(regions, dtype=int), (len(X),)))
        self.loss_curve_ = [self.train_step(batch, self.learning_rate) for _ in range(self.n_epochs)]
        return self

    # checkpoints

    def save(self, path) -> None:
        meta = {"hidden": self.hidden, "learning_rate": self.learning_rate, "n_epochs": self.n_epochs,
                "init_scale": self.init_scale, "seed": self.seed, "frozen": sorted(self.frozen_),
                "n_features": self.n_features_in_, "n_units": len(self.classes_)}
        with open(path, "wb") as f:
            np.savez(f, __meta__=np.array(json.dumps(meta)), **self.params_)

    @classmethod
    def load(cls, path) -> "ToyGeoAm":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            params = {k: data[k].copy() for k in data.files if k != "__meta__"}
        model = cls(meta["hidden"], meta["learning_rate"], meta["n_epochs"], meta["init_scale"], meta["seed"])
        model.initialize(meta["n_features"], meta["n_units"])
        missing = set(model.params_) - set(params)
        if missing:
            raise ValueError(f"checkpoint lacks parameters: {sorted(missing)}")
        model.params_ = params
        model.frozen_ = set(meta["frozen"])
        return model


def forward(model: ToyGeoAm, features, geo) -> np.ndarray:
    """Posterior for one feature vector and a one-hot Geo-vector."""
    geo = np.asarray(geo, dtype=float)
    if geo.shape != (NUM_DIALECTS,) or np.count_nonzero(geo) != 1 or geo.max() != 1.0:
        raise ValueError("geo must be a one-hot vector of length 10")
    return model.predict_proba(np.atleast_2d(features), [int(np.argmax(geo)) + 1])[0]


def train_step(model: ToyGeoAm, batch: ToyBatch, learning_rate: float, freeze=None):
    loss = model.train_step(batch, learning_rate, freeze)
    return model, loss


def adapt_dialect(model: ToyGeoAm, dialect: int, batches, learning_rate: float = 0.2,
                  epochs: int = 50) -> ToyGeoAm:
    """Copy of ``model`` whose head for ``dialect`` is trained further on the
    region's samples from ``batches``; every other group stays frozen."""
    _check_region(dialect)
    out = copy.deepcopy(model)
    own = [b.subset(b.regions == dialect) for b in batches]
    own = [b for b in own if len(b)]
    frozen = set(ALL_GROUPS) - {head_group(dialect)}
    for _ in range(epochs):
        for b in own:
            out.train_step(b, learning_rate, frozen)
    return out


def gradient_check(model: ToyGeoAm, batch: ToyBatch, eps: float = 1e-5) -> dict[str, float]:
    """Per-group relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
    of central finite differences."""
    _, grads = model.loss_and_grads(batch)
    out = {}
    for g in ALL_GROUPS:
        num_all, ana_all = [], []
        for name in model.group_params(g):
            arr = model.params_[name]
            num = np.zeros_like(arr)
            flat = arr.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                up = model.loss_and_grads(batch)[0]
                flat[i] = old - eps
                down = model.loss_and_grads(batch)[0]
                flat[i] = old
                num.reshape(-1)[i] = (up - down) / (2 * eps)
            num_all.append(num.ravel())
            ana_all.append(grads[name].ravel())
        a, n = np.concatenate(ana_all), np.concatenate(num_all)
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        out[g] = float(np.linalg.norm(a - n) / scale) if scale > 0 else 0.0
    return out
