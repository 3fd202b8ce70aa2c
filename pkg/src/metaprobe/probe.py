"""Span-classification probe over frozen per-layer representations.

Architecture: a scalar layer mix (softmax-weighted sum of the L layer
rows, scaled by gamma) or a single fixed layer, a linear projection to
``projection_dim``, mean pooling over the span tokens, and a one-hidden-
layer ReLU MLP head ending in softmax over K classes.

Mean pooling and the projection are linear, so incoming records are
reduced once to per-layer span means; everything downstream runs on
(L, H) matrices in float64. Cross-entropy is measured in bits
(base-2 log), training uses adaptive-moment updates, and all gradients
are analytic (validated against central finite differences).
"""

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (ConfigurationError, DimensionMismatchError,
                     TrainingDivergedError)
from .seeding import rng_for

LN2 = np.log(2.0)
PROB_FLOOR = 2.0 ** -60  # keeps codelengths finite

MIX = "mix"


@dataclass(frozen=True)
class ProbeConfig:
    num_classes: int
    projection_dim: int = 256
    mlp_hidden_dim: int = 256
    layer_mode: Union[str, int] = MIX  # MIX or a single layer index
    pooling: str = "mean"
    learning_rate: float = 5e-5
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0

    def validate(self):
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.projection_dim < 1 or self.mlp_hidden_dim < 1:
            raise ConfigurationError("projection_dim and mlp_hidden_dim must be >= 1")
        if self.pooling != "mean":
            raise ConfigurationError(f"unsupported pooling {self.pooling!r}")
        if self.layer_mode != MIX and not isinstance(self.layer_mode, int):
            raise ConfigurationError(f"layer_mode must be {MIX!r} or an int")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size must be >= 1 and epochs >= 0")

    def single_layer(self, num_layers: int) -> Optional[int]:
        """The fixed layer index, or None in mix mode."""
        if self.layer_mode == MIX:
            return None
        layer = int(self.layer_mode)
        if not (0 <= layer < num_layers):
            raise ConfigurationError(
                f"layer_mode {layer} out of range [0, {num_layers})")
        return layer


@dataclass
class ProbeParams:
    mix_logits: np.ndarray  # (L,)
    gamma: np.ndarray       # (1,)
    w_proj: np.ndarray      # (D, H)
    b_proj: np.ndarray      # (D,)
    w_hidden: np.ndarray    # (M, D)
    b_hidden: np.ndarray    # (M,)
    w_out: np.ndarray       # (K, M)
    b_out: np.ndarray       # (K,)

    FIELDS = ("mix_logits", "gamma", "w_proj", "b_proj",
              "w_hidden", "b_hidden", "w_out", "b_out")

    def arrays(self):
        return [(name, getattr(self, name)) for name in self.FIELDS]

    def copy(self) -> "ProbeParams":
        return ProbeParams(**{n: a.copy() for n, a in self.arrays()})

    def zeros_like(self) -> "ProbeParams":
        return ProbeParams(**{n: np.zeros_like(a) for n, a in self.arrays()})

    @property
    def dims(self):
        """(L, H, D, M, K) implied by the array shapes."""
        return (self.mix_logits.shape[0], self.w_proj.shape[1],
                self.w_proj.shape[0], self.w_hidden.shape[0],
                self.w_out.shape[0])


@dataclass
class TrainReport:
    epoch_losses_bits: list
    seed: int
    wall_clock_sec: float
    dev_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None


class ProbeDataset:
    """Per-layer span means plus labels: the probe's working set.

    ``means`` has shape (N, L, H) in float64; row i is the mean over the
    span tokens of record i, one row per layer. Mean pooling commutes
    with the linear mix and projection, so no information the probe
    could use is lost in this reduction.
    """

    def __init__(self, means: np.ndarray, labels: np.ndarray,
                 example_ids: np.ndarray, num_classes: int):
        if means.ndim != 3 or len(labels) != means.shape[0]:
            raise DimensionMismatchError(
                f"means shape {means.shape} inconsistent with "
                f"{len(labels)} labels")
        self.means = np.ascontiguousarray(means, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.example_ids = np.asarray(example_ids, dtype=np.int64)
        self.num_classes = int(num_classes)

    @classmethod
    def from_activation_set(cls, aset, indices=None) -> "ProbeDataset":
        if indices is None:
            indices = range(len(aset))
        means, labels, ids = [], [], []
        for i in indices:
            rec = aset[i]
            means.append(rec.tensor.astype(np.float64).mean(axis=1))
            labels.append(rec.label)
            ids.append(rec.example_id)
        return cls(np.stack(means), np.array(labels), np.array(ids),
                   aset.header.num_classes)

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def num_layers(self) -> int:
        return self.means.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.means.shape[2]

    def subset(self, indices) -> "ProbeDataset":
        idx = np.asarray(indices)
        return ProbeDataset(self.means[idx], self.labels[idx],
                            self.example_ids[idx], self.num_classes)


def init_params(num_layers: int, hidden_dim: int, config: ProbeConfig,
                seed: int) -> ProbeParams:
    """Fresh parameters: zero mix logits, gamma 1, scaled-uniform
    projection/hidden weights, zero output layer.

    The zero output layer forces exactly uniform initial predictions,
    which the online-coding first-block accounting relies on.
    """
    config.validate()
    config.single_layer(num_layers)
    rng = rng_for(seed, "init")
    D, M, K = config.projection_dim, config.mlp_hidden_dim, config.num_classes

    def glorot(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols))

    return ProbeParams(
        mix_logits=np.zeros(num_layers),
        gamma=np.ones(1),
        w_proj=glorot(D, hidden_dim),
        b_proj=np.zeros(D),
        w_hidden=glorot(M, D),
        b_hidden=np.zeros(M),
        w_out=np.zeros((K, M)),
        b_out=np.zeros(K),
    )


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_batch(params: ProbeParams, means: np.ndarray,
                   config: ProbeConfig, keep_cache: bool = False):
    """Forward pass on a (B, L, H) batch of span means -> (B, K) probs."""
    layer = config.single_layer(means.shape[1])
    if layer is None:
        weights = _softmax(params.mix_logits)
        pooled = np.einsum("l,blh->bh", weights, means)
        mixed = params.gamma[0] * pooled
    else:
        weights = None
        pooled = means[:, layer, :]
        mixed = pooled
    z = mixed @ params.w_proj.T + params.b_proj
    pre_hidden = z @ params.w_hidden.T + params.b_hidden
    hidden = np.maximum(pre_hidden, 0.0)
    logits = hidden @ params.w_out.T + params.b_out
    probs = _softmax(logits)
    if not keep_cache:
        return probs, None
    cache = {"weights": weights, "pooled": pooled, "mixed": mixed, "z": z,
             "pre_hidden": pre_hidden, "hidden": hidden, "probs": probs,
             "layer": layer}
    return probs, cache


def forward(params: ProbeParams, tensor: np.ndarray,
            config: ProbeConfig) -> np.ndarray:
    """Probability vector over K classes for one (L, T, H) record tensor."""
    L, H = params.dims[0], params.dims[1]
    if tensor.ndim != 3 or tensor.shape[0] != L or tensor.shape[2] != H:
        raise DimensionMismatchError(
            f"record tensor shape {tensor.shape} does not match "
            f"params (L={L}, H={H})")
    span_mean = tensor.astype(np.float64).mean(axis=1)
    probs, _ = _forward_batch(params, span_mean[None, :, :], config)
    return probs[0]


def loss_bits(probs: np.ndarray, label: int) -> float:
    """Codelength of the label under the predicted distribution, in bits."""
    return float(-np.log2(max(float(probs[label]), PROB_FLOOR)))


def _mean_loss_bits(probs: np.ndarray, labels: np.ndarray) -> float:
    p = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log2(np.maximum(p, PROB_FLOOR))))


def _backward_batch(params: ProbeParams, means: np.ndarray,
                    labels: np.ndarray, config: ProbeConfig):
    """Mean loss (bits) and its exact gradient on a batch of span means."""
    probs, cache = _forward_batch(params, means, config, keep_cache=True)
    B = means.shape[0]
    loss = _mean_loss_bits(probs, labels)

    g_logits = probs.copy()
    g_logits[np.arange(B), labels] -= 1.0
    g_logits /= B * LN2

    grads = params.zeros_like()
    grads.w_out[:] = g_logits.T @ cache["hidden"]
    grads.b_out[:] = g_logits.sum(axis=0)
    g_hidden = g_logits @ params.w_out
    g_pre = g_hidden * (cache["pre_hidden"] > 0)
    grads.w_hidden[:] = g_pre.T @ cache["z"]
    grads.b_hidden[:] = g_pre.sum(axis=0)
    g_z = g_pre @ params.w_hidden
    grads.w_proj[:] = g_z.T @ cache["mixed"]
    grads.b_proj[:] = g_z.sum(axis=0)
    if cache["layer"] is None:
        g_mixed = g_z @ params.w_proj
        grads.gamma[0] = np.sum(g_mixed * cache["pooled"])
        g_pooled = params.gamma[0] * g_mixed
        g_weights = np.einsum("bh,blh->l", g_pooled, means)
        w = cache["weights"]
        grads.mix_logits[:] = w * (g_weights - np.dot(w, g_weights))
    return loss, grads, probs


def analytic_gradients(params: ProbeParams, means: np.ndarray,
                       labels: np.ndarray, config: ProbeConfig) -> ProbeParams:
    _, grads, _ = _backward_batch(params, means, labels, config)
    return grads


def numeric_gradients(params: ProbeParams, means: np.ndarray,
                      labels: np.ndarray, config: ProbeConfig,
                      step: float = 1e-4) -> ProbeParams:
    """Central finite differences of the mean batch loss, per parameter."""
    grads = params.zeros_like()
    for name, array in params.arrays():
        target = getattr(grads, name)
        flat = array.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            probs, _ = _forward_batch(params, means, config)
            up = _mean_loss_bits(probs, labels)
            flat[i] = orig - step
            probs, _ = _forward_batch(params, means, config)
            down = _mean_loss_bits(probs, labels)
            flat[i] = orig
            target.ravel()[i] = (up - down) / (2.0 * step)
    return grads


def max_relative_error(analytic: ProbeParams, numeric: ProbeParams,
                       floor: float = 1e-6) -> float:
    worst = 0.0
    for (_, a), (_, n) in zip(analytic.arrays(), numeric.arrays()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(params: ProbeParams, means: np.ndarray,
                    labels: np.ndarray, config: ProbeConfig,
                    step: float = 1e-4) -> float:
    """Max relative error between analytic and finite-difference gradients
    over every parameter group. All math is float64."""
    if means.shape[0] == 0:
        raise DimensionMismatchError("gradient check needs a nonempty batch")
    analytic = analytic_gradients(params, means, labels, config)
    numeric = numeric_gradients(params, means, labels, config, step=step)
    return max_relative_error(analytic, numeric)


def train_probe(data: ProbeDataset, config: ProbeConfig,
                seed: Optional[int] = None):
    """Train a fresh probe: seeded shuffle per epoch, fixed epoch budget,
    adaptive-moment updates on the mean batch loss in bits.

    Returns (ProbeParams, TrainReport). Deterministic for a fixed
    (data, config, seed).
    """
    config.validate()
    if len(data) < 1:
        raise DimensionMismatchError("train_probe needs at least one record")
    if seed is None:
        seed = config.seed
    start = time.perf_counter()
    params = init_params(data.num_layers, data.hidden_dim, config, seed)
    shuffle_rng = rng_for(seed, "shuffle")

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_state = params.zeros_like()
    v_state = params.zeros_like()
    step_count = 0
    n = len(data)
    epoch_losses = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for batch_index, start_idx in enumerate(range(0, n, config.batch_size)):
            idx = order[start_idx:start_idx + config.batch_size]
            loss, grads, _ = _backward_batch(
                params, data.means[idx], data.labels[idx], config)
            if not np.isfinite(loss):
                raise TrainingDivergedError("non-finite training loss",
                                            epoch=epoch, batch=batch_index)
            step_count += 1
            bc1 = 1.0 - beta1 ** step_count
            bc2 = 1.0 - beta2 ** step_count
            for (name, p), (_, g) in zip(params.arrays(), grads.arrays()):
                m = getattr(m_state, name)
                v = getattr(v_state, name)
                m *= beta1
                m += (1.0 - beta1) * g
                v *= beta2
                v += (1.0 - beta2) * np.square(g)
                p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + eps)
            loss_sum += loss * len(idx)
        epoch_losses.append(loss_sum / n)
    report = TrainReport(epoch_losses_bits=epoch_losses, seed=seed,
                         wall_clock_sec=time.perf_counter() - start)
    return params, report


def evaluate_accuracy(params: ProbeParams, data: ProbeDataset,
                      config: ProbeConfig, chunk: int = 1024) -> float:
    """Fraction of records whose argmax prediction matches the label.

    Argmax ties resolve to the lowest class index.
    """
    if len(data) < 1:
        raise DimensionMismatchError("evaluate_accuracy needs >= 1 record")
    correct = 0
    for start in range(0, len(data), chunk):
        probs, _ = _forward_batch(params, data.means[start:start + chunk],
                                  config)
        preds = np.argmax(probs, axis=1)
        correct += int(np.sum(preds == data.labels[start:start + chunk]))
    return correct / len(data)


def predict_loss_bits(params: ProbeParams, data: ProbeDataset,
                      config: ProbeConfig, chunk: int = 1024) -> np.ndarray:
    """Per-record codelengths in bits, in dataset order."""
    out = np.empty(len(data))
    for start in range(0, len(data), chunk):
        probs, _ = _forward_batch(params, data.means[start:start + chunk],
                                  config)
        p = probs[np.arange(probs.shape[0]),
                  data.labels[start:start + chunk]]
        out[start:start + len(p)] = -np.log2(np.maximum(p, PROB_FLOOR))
    return out


# ---------------------------------------------------------------------------
# Parameter serialization (versioned binary blob, little-endian like APF1)

PARAMS_MAGIC = b"MPP1"
PARAMS_VERSION = 1


def params_to_bytes(params: ProbeParams) -> bytes:
    import struct
    L, H, D, M, K = params.dims
    out = [PARAMS_MAGIC,
           struct.pack("<IIIIII", PARAMS_VERSION, L, H, D, M, K)]
    for _, array in params.arrays():
        out.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(out)


def params_from_bytes(blob: bytes) -> ProbeParams:
    import struct
    if blob[:4] != PARAMS_MAGIC:
        from .errors import FormatError
        raise FormatError(f"bad params magic {blob[:4]!r}")
    version, L, H, D, M, K = struct.unpack("<IIIIII", blob[4:28])
    if version != PARAMS_VERSION:
        from .errors import FormatError
        raise FormatError(f"unsupported params version {version}")
    shapes = [("mix_logits", (L,)), ("gamma", (1,)), ("w_proj", (D, H)),
              ("b_proj", (D,)), ("w_hidden", (M, D)), ("b_hidden", (M,)),
              ("w_out", (K, M)), ("b_out", (K,))]
    pos = 28
    arrays = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(
            blob, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
        pos += 8 * count
    return ProbeParams(**arrays)


def save_params(params: ProbeParams, path) -> None:
    with open(path, "wb") as f:
        f.write(params_to_bytes(params))


def load_params(path) -> ProbeParams:
    with open(path, "rb") as f:
        return params_from_bytes(f.read())
