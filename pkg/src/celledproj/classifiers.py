"""k-nearest neighbour, probabilistic neural network and a one-hidden-layer
back-propagation network over feature matrices.

Bit features arrive packed into uint64 words.  KNN can use them directly
with the Hamming metric; PNN and the network expand them to 0/1 floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from celledproj.errors import (
    BadConfig,
    EmptyBatch,
    EmptyTrainingSet,
    LengthMismatch,
    ParseError,
)
from celledproj.features import BitFeatureVector, RealFeatureVector, pack_bits, unpack_bits

_CHUNK = 32


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Homogeneous training vectors with labels.

    ``vectors`` is a float matrix ``(N, L)``, or packed words ``(N, W)`` when
    ``bit_length`` is set.
    """

    vectors: np.ndarray
    labels: np.ndarray
    class_count: int
    bit_length: int | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.bit_length is None:
            vectors = np.asarray(self.vectors, dtype=np.float64)
        else:
            vectors = np.asarray(self.vectors, dtype=np.uint64)
        if vectors.ndim != 2 and vectors.size == 0:
            vectors = vectors.reshape(0, 0)
        if vectors.ndim != 2 or vectors.shape[0] != labels.size:
            raise LengthMismatch(f"{vectors.shape} vectors vs {labels.size} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_vectors(cls, vectors, labels, class_count: int) -> "FeatureMatrix":
        vectors = list(vectors)
        if vectors and isinstance(vectors[0], BitFeatureVector):
            lengths = {v.bit_length for v in vectors}
            if len(lengths) != 1:
                raise LengthMismatch(f"mixed bit lengths {sorted(lengths)}")
            return cls(np.stack([v.words for v in vectors]), labels, class_count, lengths.pop())
        rows = [v.values if isinstance(v, RealFeatureVector) else np.asarray(v, float) for v in vectors]
        if len({len(r) for r in rows}) > 1:
            raise LengthMismatch("vectors differ in length")
        return cls(np.stack(rows) if rows else np.zeros((0, 0)), labels, class_count)

    @property
    def packed(self) -> bool:
        return self.bit_length is not None

    @property
    def dim(self) -> int:
        return self.bit_length if self.packed else self.vectors.shape[1]

    def __len__(self):
        return self.labels.size

    def dense(self) -> np.ndarray:
        if self.packed:
            return unpack_bits(self.vectors, self.bit_length).astype(np.float64)
        return self.vectors


def _as_query(query, packed: bool, dim: int) -> np.ndarray:
    """Normalize one query to packed words (if ``packed``) or a float vector."""
    if isinstance(query, BitFeatureVector):
        if query.bit_length != dim:
            raise LengthMismatch(f"query has {query.bit_length} bits, model expects {dim}")
        return query.words if packed else query.to_bits().astype(np.float64)
    if isinstance(query, RealFeatureVector):
        query = query.values
    query = np.asarray(query)
    if packed:
        if query.dtype == np.uint64:
            expected = -(-dim // 64)
            if query.shape != (expected,):
                raise LengthMismatch(f"query has {query.size} words, model expects {expected}")
            return query
        if query.size != dim:
            raise LengthMismatch(f"query has {query.size} values, model expects {dim}")
        return pack_bits(query.reshape(1, -1))[0]
    if query.dtype == np.uint64 and query.size != dim:
        raise LengthMismatch("packed query given to a dense model")
    query = query.astype(np.float64).ravel()
    if query.size != dim:
        raise LengthMismatch(f"query has {query.size} values, model expects {dim}")
    return query


def _as_queries(queries, packed: bool, dim: int) -> np.ndarray:
    if isinstance(queries, FeatureMatrix):
        if queries.dim != dim:
            raise LengthMismatch(f"queries have dimension {queries.dim}, model expects {dim}")
        if packed and queries.packed:
            return queries.vectors
        return queries.dense() if not packed else pack_bits(queries.dense().astype(np.uint8))
    return np.stack([_as_query(q, packed, dim) for q in queries])


def squared_distances(queries: np.ndarray, train: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances ``(Q, N)`` by direct differences."""
    out = np.empty((queries.shape[0], train.shape[0]))
    for start in range(0, queries.shape[0], _CHUNK):
        diff = queries[start : start + _CHUNK, None, :] - train[None, :, :]
        out[start : start + _CHUNK] = np.einsum("qnl,qnl->qn", diff, diff)
    return out


def hamming_distances(queries: np.ndarray, train: np.ndarray) -> np.ndarray:
    """Hamming distances ``(Q, N)`` between packed word matrices."""
    out = np.empty((queries.shape[0], train.shape[0]), dtype=np.int64)
    for qi, q in enumerate(queries):
        out[qi] = np.bitwise_count(train ^ q).sum(axis=1)
    return out


# --- k nearest neighbours --------------------------------------------------------

@dataclass(frozen=True)
class KnnModel:
    training: FeatureMatrix
    k: int = 3
    metric: str = "euclidean"

    def __post_init__(self):
        if self.k < 1:
            raise BadConfig("k must be >= 1")
        if self.metric not in ("euclidean", "hamming"):
            raise BadConfig(f"unknown metric {self.metric!r}")
        if self.metric == "hamming" and not self.training.packed:
            raise BadConfig("the Hamming metric needs bit feature vectors")
        if len(self.training) == 0:
            raise EmptyTrainingSet("KNN needs at least one training vector")


def knn_train(data: FeatureMatrix, k: int = 3, metric: str | None = None) -> KnnModel:
    """Instance-based; ``metric`` defaults to Hamming for bit features."""
    if metric is None:
        metric = "hamming" if data.packed else "euclidean"
    if metric == "euclidean" and data.packed:
        data = FeatureMatrix(data.dense(), data.labels, data.class_count)
    return KnnModel(data, k, metric)


def knn_distances(model: KnnModel, queries) -> np.ndarray:
    """Ranking distances: Hamming counts, or squared Euclidean distances.

    Squared distances keep the neighbour ranking of the Euclidean metric and
    coincide with Hamming counts on 0/1 vectors.
    """
    tr = model.training
    if model.metric == "hamming":
        return hamming_distances(_as_queries(queries, True, tr.dim), tr.vectors)
    return squared_distances(_as_queries(queries, False, tr.dim), tr.dense())


def _vote(dist: np.ndarray, labels: np.ndarray, k: int, class_count: int) -> int:
    order = np.argsort(dist, kind="stable")[:k]
    near_labels = labels[order]
    votes = np.bincount(near_labels, minlength=class_count)
    tied = np.flatnonzero(votes == votes.max())
    if tied.size == 1:
        return int(tied[0])
    sums = np.bincount(near_labels, weights=dist[order].astype(np.float64), minlength=class_count)
    best = sums[tied].min()
    return int(tied[sums[tied] == best][0])


def knn_predict(model: KnnModel, queries) -> np.ndarray:
    tr = model.training
    dists = knn_distances(model, queries)
    return np.array([_vote(d, tr.labels, model.k, tr.class_count) for d in dists], dtype=np.int64)


def knn_classify(model: KnnModel, query) -> int:
    """Majority vote among the ``k`` nearest training vectors.

    Equal distances at the cut-off admit the earlier training sample.  Vote
    ties go to the class with the smallest summed distance, then the smallest
    class id.
    """
    return int(knn_predict(model, [query])[0])


# --- probabilistic neural network ---------------------------------------------

@dataclass(frozen=True)
class PnnModel:
    training: FeatureMatrix
    spread: float

    def __post_init__(self):
        if not self.spread > 0:
            raise BadConfig(f"spread must be positive, got {self.spread}")
        if len(self.training) == 0:
            raise EmptyTrainingSet("PNN needs at least one training vector")


def pnn_train(data: FeatureMatrix, spread: float) -> PnnModel:
    return PnnModel(data, float(spread))


def _logsumexp_by_class(logk: np.ndarray, labels: np.ndarray, class_count: int) -> np.ndarray:
    out = np.full((logk.shape[0], class_count), -np.inf)
    for c in range(class_count):
        members = logk[:, labels == c]
        if members.shape[1]:
            top = members.max(axis=1, keepdims=True)
            out[:, c] = top[:, 0] + np.log(np.exp(members - top).sum(axis=1))
    return out


def pnn_log_scores(model: PnnModel, queries) -> np.ndarray:
    """``log sum_i exp(-d_i^2 / (2 spread^2))`` per class, shape ``(Q, C)``.

    Evaluated in the log domain so tiny spreads do not underflow to a tie.
    """
    tr = model.training
    d2 = squared_distances(_as_queries(queries, False, tr.dim), tr.dense())
    return _logsumexp_by_class(-d2 / (2.0 * model.spread**2), tr.labels, tr.class_count)


def pnn_scores(model: PnnModel, query) -> np.ndarray:
    """Per-class sums of Gaussian kernel activations for one query."""
    return np.exp(pnn_log_scores(model, [query])[0])


def pnn_predict(model: PnnModel, queries) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the smallest class id on ties
    return np.argmax(pnn_log_scores(model, queries), axis=1).astype(np.int64)


def pnn_classify(model: PnnModel, query) -> int:
    return int(pnn_predict(model, [query])[0])


# --- feed-forward back-propagation network ----------------------------------------

@dataclass(frozen=True)
class FbpnConfig:
    hidden_count: int = 30
    learning_rate: float = 5.0
    max_epochs: int = 1000
    validation_fraction: float = 0.2
    patience: int = 50
    seed: int = 0
    scale_inputs: bool = True

    def __post_init__(self):
        if self.hidden_count < 1:
            raise BadConfig("hidden_count must be >= 1")
        if not 0 <= self.validation_fraction <= 0.5:
            raise BadConfig("validation_fraction must lie in [0, 0.5]")
        if self.learning_rate <= 0 or self.max_epochs < 0 or self.patience < 1:
            raise BadConfig("learning_rate > 0, max_epochs >= 0 and patience >= 1 are required")


@dataclass
class FbpnModel:
    """Sigmoid hidden layer ``w1 (H, D)``, sigmoid output layer ``w2 (C, H)``.

    Inputs are mapped by ``(x - in_offset) * in_scale`` before the first layer.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    in_offset: np.ndarray
    in_scale: np.ndarray
    config: FbpnConfig = field(default_factory=FbpnConfig)
    loss_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    best_epoch: int = 0
    train_count: int = 0
    validation_count: int = 0

    def __post_init__(self):
        h, d = self.w1.shape
        c, h2 = self.w2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (c,):
            raise BadConfig("inconsistent weight shapes")
        if self.in_offset.shape != (d,) or self.in_scale.shape != (d,):
            raise BadConfig("input scaling does not match input dimension")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_count(self) -> int:
        return self.w1.shape[0]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def with_params(self, params: dict[str, np.ndarray]) -> "FbpnModel":
        return replace(self, **{k: np.array(v, dtype=np.float64) for k, v in params.items()})


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def fbpn_init(input_dim: int, hidden_count: int, output_dim: int, seed=0,
              config: FbpnConfig | None = None) -> FbpnModel:
    """Weights and biases drawn uniformly from [-0.5, 0.5]."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return FbpnModel(
        w1=rng.uniform(-0.5, 0.5, (hidden_count, input_dim)),
        b1=rng.uniform(-0.5, 0.5, hidden_count),
        w2=rng.uniform(-0.5, 0.5, (output_dim, hidden_count)),
        b2=rng.uniform(-0.5, 0.5, output_dim),
        in_offset=np.zeros(input_dim),
        in_scale=np.ones(input_dim),
        config=config or FbpnConfig(hidden_count=hidden_count),
    )


def _forward(model: FbpnModel, x: np.ndarray):
    z = (x - model.in_offset) * model.in_scale
    hidden = sigmoid(z @ model.w1.T + model.b1)
    out = sigmoid(hidden @ model.w2.T + model.b2)
    return z, hidden, out


def _one_hot(labels: np.ndarray, width: int) -> np.ndarray:
    t = np.zeros((labels.size, width))
    t[np.arange(labels.size), labels] = 1.0
    return t


def _batch(model: FbpnModel, batch):
    if isinstance(batch, FeatureMatrix):
        x, labels = batch.dense(), batch.labels
    else:
        x, labels = batch
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.int64).ravel()
    if x.shape[0] == 0:
        raise EmptyBatch("batch has no samples")
    if x.shape[1] != model.input_dim:
        raise LengthMismatch(f"batch dimension {x.shape[1]} vs model input {model.input_dim}")
    return x, _one_hot(labels, model.output_dim)


def fbpn_loss(model: FbpnModel, batch) -> float:
    """Half mean (over samples) of the summed squared output error."""
    x, t = _batch(model, batch)
    _, _, out = _forward(model, x)
    return float(0.5 * np.sum((out - t) ** 2) / x.shape[0])


def _gradient(model: FbpnModel, x: np.ndarray, t: np.ndarray):
    z, hidden, out = _forward(model, x)
    delta_out = (out - t) * out * (1.0 - out) / x.shape[0]
    delta_hidden = (delta_out @ model.w2) * hidden * (1.0 - hidden)
    grads = {
        "w1": delta_hidden.T @ z,
        "b1": delta_hidden.sum(axis=0),
        "w2": delta_out.T @ hidden,
        "b2": delta_out.sum(axis=0),
    }
    loss = 0.5 * np.sum((out - t) ** 2) / x.shape[0]
    return grads, float(loss)


def fbpn_gradient(model: FbpnModel, batch) -> dict[str, np.ndarray]:
    """Back-propagated gradient of :func:`fbpn_loss` for every weight and bias."""
    x, t = _batch(model, batch)
    return _gradient(model, x, t)[0]


def _input_scaling(x: np.ndarray):
    """Per-feature map of the training range onto [-1, 1]; constant features go to 0."""
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    scale = np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 1.0)
    return (lo + hi) / 2.0, scale


def fbpn_train(data: FeatureMatrix, config: FbpnConfig | None = None) -> FbpnModel:
    """Full-batch gradient descent with validation early stopping.

    The validation portion is drawn by a seeded shuffle; training stops once
    validation loss has not improved for ``patience`` epochs and the best
    weights seen are returned.
    """
    config = config or FbpnConfig()
    if len(data) == 0:
        raise EmptyTrainingSet("the network needs at least one training sample")
    x_all, labels_all = data.dense(), data.labels
    rng = np.random.default_rng(config.seed)
    model = fbpn_init(x_all.shape[1], config.hidden_count, data.class_count, rng, config)
    order = rng.permutation(len(data))
    n_val = int(round(config.validation_fraction * len(data)))
    if n_val >= len(data):
        raise BadConfig("validation split leaves no training samples")
    val_idx, train_idx = order[:n_val], order[n_val:]
    model.train_count, model.validation_count = train_idx.size, n_val
    x, t = x_all[train_idx], _one_hot(labels_all[train_idx], data.class_count)
    xv, tv = x_all[val_idx], _one_hot(labels_all[val_idx], data.class_count)
    if config.scale_inputs:
        model.in_offset, model.in_scale = _input_scaling(x)

    lr = config.learning_rate
    best, best_loss, best_epoch, waited = model.params(), np.inf, 0, 0
    if n_val:
        best_loss = 0.5 * np.sum((_forward(model, xv)[2] - tv) ** 2) / n_val
    for epoch in range(1, config.max_epochs + 1):
        grads, loss = _gradient(model, x, t)
        model.loss_history.append(loss)
        model.w1 = model.w1 - lr * grads["w1"]
        model.b1 = model.b1 - lr * grads["b1"]
        model.w2 = model.w2 - lr * grads["w2"]
        model.b2 = model.b2 - lr * grads["b2"]
        if not n_val:
            continue
        val_loss = 0.5 * np.sum((_forward(model, xv)[2] - tv) ** 2) / n_val
        model.val_history.append(float(val_loss))
        if val_loss < best_loss:
            best, best_loss, best_epoch, waited = model.params(), val_loss, epoch, 0
        else:
            waited += 1
            if waited >= config.patience:
                break
    if n_val:
        model = model.with_params(best)
        model.best_epoch = best_epoch
    else:
        model.best_epoch = config.max_epochs
    return model


def fbpn_outputs(model: FbpnModel, queries) -> np.ndarray:
    x = _as_queries(queries, False, model.input_dim)
    return _forward(model, x)[2]


def fbpn_predict_many(model: FbpnModel, queries) -> np.ndarray:
    return np.argmax(fbpn_outputs(model, queries), axis=1).astype(np.int64)


def fbpn_predict(model: FbpnModel, query) -> int:
    """Index of the largest output activation (first one on ties)."""
    return int(fbpn_predict_many(model, [query])[0])


# --- uniform interface ---------------------------------------------------------

CLASSIFIER_NAMES = ("knn", "pnn", "fbpn")


def train(name: str, data: FeatureMatrix, value, fbpn_config: FbpnConfig | None = None):
    """Train classifier ``name`` with its main parameter ``value`` (k, spread or hidden count)."""
    if name == "knn":
        return knn_train(data, int(value))
    if name == "pnn":
        return pnn_train(data, float(value))
    if name == "fbpn":
        cfg = replace(fbpn_config or FbpnConfig(), hidden_count=int(value))
        return fbpn_train(data, cfg)
    raise BadConfig(f"unknown classifier {name!r}; choose from {', '.join(CLASSIFIER_NAMES)}")


def predict(model, queries) -> np.ndarray:
    if isinstance(model, KnnModel):
        return knn_predict(model, queries)
    if isinstance(model, PnnModel):
        return pnn_predict(model, queries)
    if isinstance(model, FbpnModel):
        return fbpn_predict_many(model, queries)
    raise TypeError(f"not a model: {type(model).__name__}")


# --- text serialization ----------------------------------------------------------

def _fmt_array(name: str, arr: np.ndarray) -> str:
    arr = np.asarray(arr)
    kind = "u64" if arr.dtype == np.uint64 else ("i64" if arr.dtype.kind in "iu" else "f64")
    head = f"{name} {kind} {' '.join(str(s) for s in arr.shape)}"
    vals = " ".join(repr(float(v)) if kind == "f64" else str(int(v)) for v in arr.ravel())
    return f"{head}\n{vals}\n"


def _matrix_block(fm: FeatureMatrix) -> str:
    return (f"class_count {fm.class_count}\nbit_length {fm.bit_length if fm.packed else '-'}\n"
            + _fmt_array("vectors", fm.vectors) + _fmt_array("labels", fm.labels))


def format_model(model) -> str:
    if isinstance(model, KnnModel):
        return f"model knn\nk {model.k}\nmetric {model.metric}\n" + _matrix_block(model.training)
    if isinstance(model, PnnModel):
        return f"model pnn\nspread {model.spread!r}\n" + _matrix_block(model.training)
    if isinstance(model, FbpnModel):
        cfg = model.config
        text = (f"model fbpn\nhidden_count {cfg.hidden_count}\nlearning_rate {cfg.learning_rate!r}\n"
                f"max_epochs {cfg.max_epochs}\nvalidation_fraction {cfg.validation_fraction!r}\n"
                f"patience {cfg.patience}\nseed {cfg.seed}\nscale_inputs {int(cfg.scale_inputs)}\n")
        for name in ("w1", "b1", "w2", "b2", "in_offset", "in_scale"):
            text += _fmt_array(name, getattr(model, name))
        return text
    raise TypeError(f"not a model: {type(model).__name__}")


def parse_model(text: str):
    lines = iter(text.splitlines())
    fields, arrays = {}, {}
    for line in lines:
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) >= 2 and parts[1] in ("u64", "i64", "f64"):
            shape = tuple(int(s) for s in parts[2:])
            body = next(lines, "").split()
            dtype = {"u64": np.uint64, "i64": np.int64, "f64": np.float64}[parts[1]]
            conv = float if dtype is np.float64 else int
            arr = np.array([conv(v) for v in body], dtype=dtype)
            if arr.size != int(np.prod(shape)):
                raise ParseError(f"array {parts[0]!r} declares shape {shape}, holds {arr.size} values")
            arrays[parts[0]] = arr.reshape(shape)
        else:
            fields[parts[0]] = parts[1] if len(parts) > 1 else ""
    kind = fields.get("model")

    def matrix():
        bl = fields["bit_length"]
        return FeatureMatrix(arrays["vectors"], arrays["labels"], int(fields["class_count"]),
                             None if bl == "-" else int(bl))

    try:
        if kind == "knn":
            return KnnModel(matrix(), int(fields["k"]), fields["metric"])
        if kind == "pnn":
            return PnnModel(matrix(), float(fields["spread"]))
        if kind == "fbpn":
            cfg = FbpnConfig(int(fields["hidden_count"]), float(fields["learning_rate"]),
                             int(fields["max_epochs"]), float(fields["validation_fraction"]),
                             int(fields["patience"]), int(fields["seed"]), bool(int(fields["scale_inputs"])))
            return FbpnModel(**{n: arrays[n] for n in ("w1", "b1", "w2", "b2", "in_offset", "in_scale")},
                             config=cfg)
    except KeyError as exc:
        raise ParseError(f"model text lacks field {exc}") from None
    raise ParseError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def load_model(path):
    return parse_model(Path(path).read_text(encoding="utf-8"))
