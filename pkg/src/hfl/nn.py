"""From-scratch neural networks: conv/dense regressors trained with
Adam-family updates on mean squared error.

Two numeric modes: float32 for training speed, float64 ("high precision")
for gradient checking. All randomness flows through explicit generators,
so single-threaded training is bit-reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceDetected, ShapeMismatch
from .imageproc import augment


# ---------------------------------------------------------------------------
# layers

class Dense:
    def __init__(self, n_in, n_out, rng, dtype, scale=None):
        std = math.sqrt((2.0 if scale is None else scale) / n_in)
        self.w = rng.normal(0.0, std, size=(n_out, n_in)).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def forward(self, x):
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, g):
        self.dw[...] = g.T @ self._x
        self.db[...] = g.sum(axis=0)
        return g @ self.w

    def params(self):
        return [(self.w, self.dw), (self.b, self.db)]


class ReLU:
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask

    def params(self):
        return []


class Conv2d:
    """3D conv over (N, C, H, W) with square kernel, valid padding."""

    def __init__(self, c_in, c_out, k, stride, rng, dtype):
        std = math.sqrt(2.0 / (c_in * k * k))
        self.w = rng.normal(0.0, std, size=(c_out, c_in, k, k)).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.k = k
        self.stride = stride

    def _cols(self, x):
        k, s = self.k, self.stride
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]  # (N, C, Ho, Wo, k, k)
        return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))

    def forward(self, x):
        n, c, h, w = x.shape
        k, s = self.k, self.stride
        ho = (h - k) // s + 1
        wo = (w - k) // s + 1
        cols = self._cols(x).reshape(n * ho * wo, c * k * k)
        out = cols @ self.w.reshape(self.w.shape[0], -1).T + self.b
        self._cols_cache = cols
        self._x_shape = x.shape
        self._out_hw = (ho, wo)
        return out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)

    def backward(self, g):
        n, c, h, w = self._x_shape
        k, s = self.k, self.stride
        ho, wo = self._out_hw
        c_out = self.w.shape[0]
        gflat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
        self.dw[...] = (gflat.T @ self._cols_cache).reshape(self.w.shape)
        self.db[...] = gflat.sum(axis=0)
        gcols = gflat @ self.w.reshape(c_out, -1)  # (N*Ho*Wo, C*k*k)
        gcols = gcols.reshape(n, ho, wo, c, k, k)
        dx = np.zeros(self._x_shape, dtype=g.dtype)
        for ki in range(k):
            for kj in range(k):
                dx[:, :, ki:ki + s * ho:s, kj:kj + s * wo:s] += (
                    gcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2))
        return dx

    def params(self):
        return [(self.w, self.dw), (self.b, self.db)]


class GlobalAvgPool:
    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, g):
        n, c, h, w = self._shape
        return np.broadcast_to(g[:, :, None, None] / (h * w), self._shape).astype(g.dtype)

    def params(self):
        return []


# ---------------------------------------------------------------------------
# models

@dataclass
class CnnSpec:
    input_side: int = 64
    conv_blocks: tuple = ((8, 3, 2), (16, 3, 2), (32, 3, 2))  # (out_c, k, stride)
    dense: tuple = (16,)
    # the head is always GAP -> dense ReLU stack -> single linear unit

    def validate(self):
        if not self.conv_blocks:
            raise ValueError("at least one conv block is required")


class Model:
    """A layer stack with a single linear output unit."""

    def __init__(self, layers, seed, dtype, spec=None):
        self.layers = layers
        self.seed = seed
        self.dtype = dtype
        self.spec = spec

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x[:, 0]

    def backward(self, g):
        g = g[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def get_state(self):
        return [p.copy() for p, _ in self.params()]

    def set_state(self, state):
        for (p, _), s in zip(self.params(), state):
            p[...] = s


def build_cnn(spec, seed, dtype=np.float32):
    spec.validate()
    rng = np.random.default_rng(seed)
    layers = []
    c_in = 1
    side = spec.input_side
    for c_out, k, stride in spec.conv_blocks:
        layers.append(Conv2d(c_in, c_out, k, stride, rng, dtype))
        layers.append(ReLU())
        side = (side - k) // stride + 1
        if side < 1:
            raise ShapeMismatch("conv stack reduces the input below 1 px")
        c_in = c_out
    layers.append(GlobalAvgPool())
    width = c_in
    for n_out in spec.dense:
        layers.append(Dense(width, n_out, rng, dtype))
        layers.append(ReLU())
        width = n_out
    layers.append(Dense(width, 1, rng, dtype, scale=1.0))
    return Model(layers, seed, dtype, spec=spec)


def build_mlp(n_in, hidden, seed, dtype=np.float32):
    rng = np.random.default_rng(seed)
    layers = []
    width = n_in
    for n_out in hidden:
        layers.append(Dense(width, n_out, rng, dtype))
        layers.append(ReLU())
        width = n_out
    layers.append(Dense(width, 1, rng, dtype, scale=1.0))
    return Model(layers, seed, dtype)


def _as_batch(model, x):
    if x.ndim == 3:
        x = x[:, None, :, :]
    if model.spec is not None:
        side = model.spec.input_side
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != side or x.shape[3] != side:
            raise ShapeMismatch(f"expected (N, 1, {side}, {side}) images, got {x.shape}")
    return x.astype(model.dtype, copy=False)


def forward(model, batch):
    """Pure forward pass; returns one prediction per batch row."""
    if model.spec is not None:
        x = _as_batch(model, np.asarray(batch))
    else:
        x = np.asarray(batch).astype(model.dtype, copy=False)
        first = model.layers[0]
        if isinstance(first, Dense) and (x.ndim != 2 or x.shape[1] != first.w.shape[1]):
            raise ShapeMismatch(
                f"expected (N, {first.w.shape[1]}) features, got {x.shape}")
    return model.forward(x).astype(np.float64)


def predict_batched(model, data, batch_size=256):
    out = []
    for i in range(0, len(data), batch_size):
        out.append(forward(model, data[i:i + batch_size]))
    return np.concatenate(out) if out else np.zeros(0)


# ---------------------------------------------------------------------------
# optimizer

class AdamFamily:
    """Adam / Nadam (Nesterov-momentum Adam) over a model's parameters."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, nesterov=True):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.nesterov = nesterov
        self.t = 0
        self.m = [np.zeros_like(p) for p, _ in params]
        self.v = [np.zeros_like(p) for p, _ in params]

    def step(self):
        self.t += 1
        b1, b2 = self.b1, self.b2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for i, (p, g) in enumerate(self.params):
            m = self.m[i]
            v = self.v[i]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            vhat = v / bc2
            if self.nesterov:
                update = (b1 * m / (1.0 - b1 ** (self.t + 1))
                          + (1 - b1) * g / bc1)
            else:
                update = m / bc1
            p -= (self.lr * update / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    epochs: int = 40
    batch_size: int = 64
    patience: int = 6
    val_fraction: float = 0.20
    p_mirror: float = 0.5
    max_angle: float = 0.0
    loss: str = "mse"
    optimizer: str = "nadam"  # "adam" | "nadam"
    cnn_spec: CnnSpec = field(default_factory=CnnSpec)
    hidden: tuple = (32, 16)  # dense widths for the tabular model
    init_seed: int = 0

    def validate(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("adam", "nadam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _mse_and_grad(pred, y):
    d = pred - y
    n = len(y)
    return float(d @ d) / n, (2.0 / n) * d


def _eval_loss(model, x, y, batch_size=512):
    total = 0.0
    for i in range(0, len(x), batch_size):
        pred = forward(model, x[i:i + batch_size])
        d = pred - y[i:i + batch_size]
        total += float(d @ d)
    return total / len(x)


def _train_loop(model, x, y, config, rng, augment_images=False):
    """Shared mini-batch loop with validation split and early stopping."""
    config.validate()
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 samples to train")
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    perm = rng.permutation(n)
    # val_fraction == 0 skips the holdout; early stopping then tracks the
    # training loss itself
    n_val = max(1, int(round(config.val_fraction * n))) if config.val_fraction > 0 else 0
    n_val = min(n_val, n - 1)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    x_val, y_val = x[val_idx], y[val_idx]

    opt = AdamFamily(model.params(), lr=config.lr, betas=config.betas,
                     nesterov=(config.optimizer == "nadam"))
    history = {"train_loss": [], "val_loss": [], "best_epoch": -1}
    best_val = math.inf
    best_state = model.get_state()
    stale = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_idx))
        epoch_sq = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = train_idx[order[start:start + config.batch_size]]
            xb = x[idx]
            if augment_images and (config.p_mirror > 0 or config.max_angle > 0):
                xb = np.stack([augment(img, rng, config.p_mirror, config.max_angle)
                               for img in xb])
            pred = forward(model, xb)
            loss, dpred = _mse_and_grad(pred, y[idx])
            if not math.isfinite(loss):
                raise DivergenceDetected(epoch)
            epoch_sq += loss * len(idx)
            model.backward(dpred.astype(model.dtype))
            opt.step()
        train_loss = epoch_sq / len(train_idx)
        val_loss = _eval_loss(model, x_val, y_val) if n_val else train_loss
        if not math.isfinite(val_loss):
            raise DivergenceDetected(epoch)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = model.get_state()
            history["best_epoch"] = epoch
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    model.set_state(best_state)
    return history


def cnn_train(images, targets, config, rng):
    """Train the convolutional regressor on (image, residual) pairs."""
    x = np.asarray(images)
    model = build_cnn(config.cnn_spec, seed=config.init_seed, dtype=np.float32)
    if config.epochs == 0:
        return model, {"train_loss": [], "val_loss": [], "best_epoch": -1}
    history = _train_loop(model, x, targets, config, rng, augment_images=True)
    return model, history


def mlp_fit(matrix, targets, config, rng):
    """Train the dense tabular regressor with the same contract as cnn_train."""
    x = np.asarray(matrix, dtype=np.float64)
    model = build_mlp(x.shape[1], config.hidden, seed=config.init_seed,
                      dtype=np.float32)
    if config.epochs == 0:
        return model, {"train_loss": [], "val_loss": [], "best_epoch": -1}
    history = _train_loop(model, x, targets, config, rng, augment_images=False)
    return model, history


def mlp_predict(model, matrix):
    return predict_batched(model, np.asarray(matrix, dtype=np.float64))


def cnn_forward(model, batch):
    return forward(model, np.asarray(batch))


# ---------------------------------------------------------------------------
# verification and model selection

def to_high_precision(model):
    """Copy of the model with float64 parameters for gradient checking."""
    for layer in model.layers:
        for attr in ("w", "b", "dw", "db"):
            if hasattr(layer, attr):
                setattr(layer, attr, getattr(layer, attr).astype(np.float64))
    model.dtype = np.float64
    return model


def gradient_check(model, sample, target, epsilon=1e-5):
    """Max relative error between analytic and central-difference gradients."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(sample, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64).reshape(-1)

    def loss_fn():
        pred = forward(model, x)
        d = pred - y
        return float(d @ d) / len(y)

    pred = forward(model, x)
    _, dpred = _mse_and_grad(pred, y)
    model.backward(dpred)
    worst = 0.0
    for p, g in model.params():
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn()
            flat[i] = orig - epsilon
            down = loss_fn()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(gflat[i]) + abs(numeric), 1.0)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def grid_search(space, data, k, rng, train_fn=None, predict_fn=None):
    """Exhaustive k-fold CV over an ordered list of TrainConfigs.

    Every configuration sees identical fold assignments; ties go to the
    earliest position in the space.
    """
    if not space:
        raise ValueError("grid-search space must be nonempty")
    if k < 2:
        raise ValueError("k must be >= 2")
    x, y = data
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    perm = rng.permutation(n)
    folds = [perm[f::k] for f in range(k)]
    fold_seeds = rng.integers(0, 2**31 - 1, size=(len(space), k))
    if train_fn is None:
        train_fn = cnn_train if x.ndim >= 3 else mlp_fit
    if predict_fn is None:
        predict_fn = predict_batched

    scores = []
    for ci, config in enumerate(space):
        fold_mse = []
        for f in range(k):
            test = folds[f]
            train = np.concatenate([folds[g] for g in range(k) if g != f])
            model, _ = train_fn(x[train], y[train], config,
                                np.random.default_rng(int(fold_seeds[ci, f])))
            pred = predict_fn(model, x[test])
            fold_mse.append(float(np.mean((pred - y[test]) ** 2)))
        scores.append(fold_mse)
    means = [float(np.mean(s)) for s in scores]
    best = min(range(len(space)), key=lambda i: (means[i], i))
    return space[best], {"fold_mse": scores, "mean_mse": means, "best_index": best}
