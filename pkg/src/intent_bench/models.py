"""Trainable predictors: segment MLP, direction LSTM, and the comparison baselines.

Every trainer is a pure function of (data, config, seed): epoch shuffling,
initialization, and any sampling draw from one numpy Generator seeded by the
config. Probability outputs are simplexes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import (
    EmptyTrainingSet,
    InvalidConfig,
    IoError,
    NotEnoughNeighbors,
    SequenceTooShort,
    ShapeMismatch,
)


def _as_batch(x: np.ndarray, width: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[-1] != width:
        raise ShapeMismatch(f"{what}: input width {x.shape[-1]}, model expects {width}")
    return x, single


def _batches(rng: np.random.Generator, n: int, batch_size: int):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


# --- segment MLP ------------------------------------------------------------


@dataclass(frozen=True)
class MlpConfig:
    input_width: int
    hidden: tuple[int, int] = (64, 32)
    output: int = 4
    lr: float = 0.001
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0


def mlp_init(rng: np.random.Generator, cfg: MlpConfig) -> nn.Params:
    widths = (cfg.input_width, *cfg.hidden, cfg.output)
    params = {}
    for i, (n_in, n_out) in enumerate(zip(widths, widths[1:]), start=1):
        params[f"w{i}"] = nn.glorot_uniform(rng, n_in, n_out, (n_out, n_in))
        params[f"b{i}"] = np.zeros(n_out)
    return params


def mlp_forward(params: nn.Params, x: np.ndarray) -> np.ndarray:
    depth = len(params) // 2
    a = x
    for i in range(1, depth):
        a = nn.relu(a @ params[f"w{i}"].T + params[f"b{i}"])
    return a @ params[f"w{depth}"].T + params[f"b{depth}"]


def mlp_loss_grad(params: nn.Params, x: np.ndarray, y: np.ndarray):
    depth = len(params) // 2
    acts = [x]
    a = x
    for i in range(1, depth):
        a = nn.relu(a @ params[f"w{i}"].T + params[f"b{i}"])
        acts.append(a)
    logits = a @ params[f"w{depth}"].T + params[f"b{depth}"]
    loss, dlogits = nn.batch_softmax_cross_entropy(logits, y)

    grads = {}
    delta = dlogits
    for i in range(depth, 0, -1):
        grads[f"w{i}"] = delta.T @ acts[i - 1]
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 1:
            delta = (delta @ params[f"w{i}"]) * (acts[i - 1] > 0)
    return loss, grads


@dataclass
class MlpModel:
    params: nn.Params
    cfg: MlpConfig
    meta: dict = field(default_factory=dict)
    kind: str = "mlp"

    def predict_proba(self, x) -> np.ndarray:
        xb, single = _as_batch(x, self.cfg.input_width, "mlp")
        probs = nn.softmax(mlp_forward(self.params, xb))
        return probs[0] if single else probs

    def predict(self, x) -> np.ndarray:
        probs = self.predict_proba(x)
        return np.argmax(probs, axis=-1)

    def parameter_count(self) -> int:
        return sum(arr.size for arr in self.params.values())


def train_mlp(x: np.ndarray, y: np.ndarray, cfg: MlpConfig) -> MlpModel:
    """Mini-batch Adam training of the two-hidden-layer segment classifier."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.shape[0] == 0:
        raise EmptyTrainingSet("no training rows")
    if x.shape[1] != cfg.input_width:
        raise ShapeMismatch(f"data width {x.shape[1]} != cfg.input_width {cfg.input_width}")
    rng = np.random.default_rng(cfg.seed)
    params = mlp_init(rng, cfg)
    state = nn.AdamState(alpha=cfg.lr)
    for _ in range(cfg.epochs):
        for idx in _batches(rng, x.shape[0], cfg.batch_size):
            _, grads = mlp_loss_grad(params, x[idx], y[idx])
            params = nn.adam_step(state, params, grads)
    final_loss, _ = mlp_loss_grad(params, x, y)
    return MlpModel(params=params, cfg=cfg, meta={"seed": cfg.seed, "final_loss": final_loss})


def predict_mlp(model: MlpModel, x) -> np.ndarray:
    return model.predict_proba(x)


# --- direction LSTM ----------------------------------------------------------


@dataclass(frozen=True)
class LstmConfig:
    input_width: int
    hidden_layers: int = 2
    hidden_size: int = 50
    output: int = 2
    l2: float = 0.01
    lr: float = 0.001
    epochs: int = 50
    batch_size: int = 32
    window_len: int = 5
    mode: str = "windowed"  # or "full"
    seed: int = 0

    def validate(self):
        if self.mode not in ("windowed", "full"):
            raise InvalidConfig(f"unknown lstm mode '{self.mode}'")
        if self.mode == "windowed" and self.window_len < 2:
            raise InvalidConfig("window_len must be at least 2 in windowed mode")


@dataclass
class SequenceData:
    """One participant-task as an ordered sample sequence with per-step labels."""

    x: np.ndarray  # (T, d)
    labels: np.ndarray  # (T,) int
    train_mask: np.ndarray  # (T,) bool: split membership of each step
    participant: str = ""


def make_windows(seqs: list[SequenceData], window_len: int):
    """Sliding windows of length W, stride 1; label and split come from the last step."""
    xs, ys, train = [], [], []
    width = seqs[0].x.shape[1]
    for seq in seqs:
        steps = seq.x.shape[0]
        if seq.x.shape[1] != width:
            raise ShapeMismatch(f"sequence width {seq.x.shape[1]} != {width}")
        if steps < window_len:
            raise SequenceTooShort(f"sequence of length {steps} shorter than window {window_len}")
        for start in range(steps - window_len + 1):
            end = start + window_len
            xs.append(seq.x[start:end])
            ys.append(seq.labels[end - 1])
            train.append(seq.train_mask[end - 1])
    return np.stack(xs), np.asarray(ys), np.asarray(train, dtype=bool)


def lstm_init(rng: np.random.Generator, cfg: LstmConfig) -> nn.Params:
    params = {}
    n_in = cfg.input_width
    for layer in range(cfg.hidden_layers):
        cell = nn.LstmCell.init(rng, n_in, cfg.hidden_size)
        params[f"lstm{layer}_w"] = cell.w_gates
        params[f"lstm{layer}_b"] = cell.b_gates
        n_in = cfg.hidden_size
    head = nn.DenseLayer.init(rng, cfg.hidden_size, cfg.output)
    params["head_w"] = head.weights
    params["head_b"] = head.bias
    return params


def _lstm_cells(params: nn.Params, cfg: LstmConfig) -> list[nn.LstmCell]:
    return [
        nn.LstmCell(params[f"lstm{layer}_w"], params[f"lstm{layer}_b"])
        for layer in range(cfg.hidden_layers)
    ]


def lstm_forward(params: nn.Params, cfg: LstmConfig, x: np.ndarray):
    """Stacked LSTM over (B, T, d) with ReLU between layers; per-step logits."""
    cells = _lstm_cells(params, cfg)
    caches = []
    inputs = x
    for layer, cell in enumerate(cells):
        hs, layer_caches = nn.lstm_sequence_forward(cell, inputs)
        caches.append((inputs, hs, layer_caches))
        inputs = nn.relu(hs) if layer < len(cells) - 1 else hs
    batch, steps, hidden = inputs.shape
    logits = inputs.reshape(-1, hidden) @ params["head_w"].T + params["head_b"]
    return logits.reshape(batch, steps, -1), caches


def lstm_loss_grad(params: nn.Params, cfg: LstmConfig, x: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None):
    """Masked softmax-CE loss and full BPTT gradients.

    mask of shape (B, T) selects the timesteps entering the loss; None means
    last timestep only (windowed regime).
    """
    logits, caches = lstm_forward(params, cfg, x)
    batch, steps, out = logits.shape
    if mask is None:
        mask = np.zeros((batch, steps), dtype=bool)
        mask[:, -1] = True
        targets_seq = np.repeat(np.asarray(y)[:, None], steps, axis=1)
    else:
        targets_seq = np.asarray(y)
    flat_mask = mask.reshape(-1)
    if not flat_mask.any():
        raise EmptyTrainingSet("loss mask selects no timesteps")
    flat_logits = logits.reshape(-1, out)[flat_mask]
    flat_targets = targets_seq.reshape(-1)[flat_mask]
    loss, d_flat = nn.batch_softmax_cross_entropy(flat_logits, flat_targets)

    d_logits = np.zeros((batch * steps, out))
    d_logits[flat_mask] = d_flat
    d_logits = d_logits.reshape(batch, steps, out)

    grads = {}
    top = caches[-1][1]  # last layer's raw hidden sequence feeds the head
    grads["head_w"] = d_logits.reshape(-1, out).T @ top.reshape(-1, top.shape[-1])
    grads["head_b"] = d_logits.reshape(-1, out).sum(axis=0)
    d_stream = d_logits @ params["head_w"]

    cells = _lstm_cells(params, cfg)
    for layer in range(len(cells) - 1, -1, -1):
        _inputs, hs, layer_caches = caches[layer]
        if layer < len(cells) - 1:
            d_stream = d_stream * (hs > 0)  # inter-layer ReLU
        d_stream, d_w, d_b = nn.lstm_sequence_backward(cells[layer], layer_caches, d_stream)
        grads[f"lstm{layer}_w"] = d_w
        grads[f"lstm{layer}_b"] = d_b
    return loss, grads


@dataclass
class LstmModel:
    params: nn.Params
    cfg: LstmConfig
    meta: dict = field(default_factory=dict)
    kind: str = "lstm"

    def predict_proba(self, window) -> np.ndarray:
        w = np.asarray(window, dtype=float)
        single = w.ndim == 2
        if single:
            w = w[None, ...]
        if w.shape[-1] != self.cfg.input_width:
            raise ShapeMismatch(f"window width {w.shape[-1]}, model expects {self.cfg.input_width}")
        if self.cfg.mode == "windowed" and w.shape[1] != self.cfg.window_len:
            raise ShapeMismatch(f"window length {w.shape[1]}, model expects {self.cfg.window_len}")
        logits, _ = lstm_forward(self.params, self.cfg, w)
        probs = nn.softmax(logits[:, -1, :])
        return probs[0] if single else probs

    def predict(self, window) -> np.ndarray:
        return np.argmax(self.predict_proba(window), axis=-1)

    def predict_sequence_proba(self, x) -> np.ndarray:
        """Per-timestep probabilities over one (T, d) sequence (full-sequence regime)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.cfg.input_width:
            raise ShapeMismatch(f"sequence width {x.shape[-1]}, model expects {self.cfg.input_width}")
        logits, _ = lstm_forward(self.params, self.cfg, x[None, ...])
        return nn.softmax(logits[0])

    def parameter_count(self) -> int:
        return sum(arr.size for arr in self.params.values())


def _decay_masks(params: nn.Params, cfg: LstmConfig) -> dict:
    """L2 decay targets: input-kernel columns of each gate matrix plus the head kernel.

    Recurrent columns and biases stay decay-free so the recurrent dynamics are
    not flattened by the optimizer before the temporal signal produces
    gradients (matching the usual kernel-only regularizer semantics).
    """
    masks = {}
    for layer in range(cfg.hidden_layers):
        name = f"lstm{layer}_w"
        width = cfg.input_width if layer == 0 else cfg.hidden_size
        mask = np.zeros_like(params[name])
        mask[:, :width] = 1.0
        masks[name] = mask
    masks["head_w"] = np.ones_like(params["head_w"])
    return masks


def train_lstm(seqs: list[SequenceData], cfg: LstmConfig) -> LstmModel:
    """Train the direction LSTM on the training side of the given sequences."""
    cfg.validate()
    if not seqs:
        raise EmptyTrainingSet("no sequences")
    if seqs[0].x.shape[1] != cfg.input_width:
        raise ShapeMismatch(f"sequence width {seqs[0].x.shape[1]} != cfg.input_width {cfg.input_width}")
    rng = np.random.default_rng(cfg.seed)
    params = lstm_init(rng, cfg)
    state = nn.AdamState(alpha=cfg.lr)
    decay = _decay_masks(params, cfg)

    if cfg.mode == "windowed":
        wx, wy, wtrain = make_windows(seqs, cfg.window_len)
        tx, ty = wx[wtrain], wy[wtrain]
        if tx.shape[0] == 0:
            raise EmptyTrainingSet("no training windows")
        for _ in range(cfg.epochs):
            for idx in _batches(rng, tx.shape[0], cfg.batch_size):
                _, grads = lstm_loss_grad(params, cfg, tx[idx], ty[idx])
                params = nn.adam_step(state, params, grads, l2=cfg.l2, decay_masks=decay)
        final_loss, _ = lstm_loss_grad(params, cfg, tx, ty)
    else:
        lengths = {seq.x.shape[0] for seq in seqs}
        if len(lengths) != 1:
            raise ShapeMismatch(f"full-sequence mode needs equal lengths, got {sorted(lengths)}")
        x = np.stack([seq.x for seq in seqs])
        y = np.stack([seq.labels for seq in seqs])
        mask = np.stack([seq.train_mask for seq in seqs])
        if not mask.any():
            raise EmptyTrainingSet("no training timesteps")
        for _ in range(cfg.epochs):
            for idx in _batches(rng, x.shape[0], cfg.batch_size):
                _, grads = lstm_loss_grad(params, cfg, x[idx], y[idx], mask[idx])
                params = nn.adam_step(state, params, grads, l2=cfg.l2, decay_masks=decay)
        final_loss, _ = lstm_loss_grad(params, cfg, x, y, mask)

    return LstmModel(params=params, cfg=cfg, meta={"seed": cfg.seed, "final_loss": final_loss})


def predict_lstm(model: LstmModel, window) -> np.ndarray:
    return model.predict_proba(window)


# --- baselines ---------------------------------------------------------------


@dataclass(frozen=True)
class BaselineKind:
    name: str  # knn | svm | logreg | random
    k: int = 5
    lam: float = 0.01
    lr: float = 0.1
    epochs: int = 200
    batch_size: int = 32

    def validate(self):
        if self.name not in ("knn", "svm", "logreg", "random"):
            raise InvalidConfig(f"unknown baseline '{self.name}'")
        if self.k <= 0 or self.lam <= 0 or self.lr <= 0 or self.epochs <= 0:
            raise InvalidConfig("baseline hyperparameters must be positive")


@dataclass
class KnnModel:
    train_x: np.ndarray
    train_y: np.ndarray
    num_classes: int
    k: int
    meta: dict = field(default_factory=dict)
    kind: str = "knn"

    def predict(self, x) -> np.ndarray:
        xb, single = _as_batch(x, self.train_x.shape[1], "knn")
        out = np.empty(xb.shape[0], dtype=int)
        for i, row in enumerate(xb):
            d2 = np.sum((self.train_x - row) ** 2, axis=1)
            # distance ties break by label so the vote ignores training row order
            order = np.lexsort((self.train_y, d2))[: self.k]
            votes = np.bincount(self.train_y[order], minlength=self.num_classes)
            out[i] = int(np.argmax(votes))  # vote ties go to the smallest label
        return out[0] if single else out


@dataclass
class LinearModel:
    """Shared container for the linear baselines (one-vs-rest SVM, multinomial LR)."""

    weights: np.ndarray  # (K, d)
    bias: np.ndarray  # (K,)
    num_classes: int
    kind: str = "linear"
    meta: dict = field(default_factory=dict)

    def decision(self, x) -> np.ndarray:
        xb, single = _as_batch(x, self.weights.shape[1], self.kind)
        scores = xb @ self.weights.T + self.bias
        return scores[0] if single else scores

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.decision(x), axis=-1)

    def predict_proba(self, x) -> np.ndarray:
        return nn.softmax(self.decision(x))


def train_svm(x, y, num_classes: int, kind: BaselineKind, seed: int = 0) -> LinearModel:
    """One-vs-rest linear SVM: hinge loss + L2, Pegasos-style subgradient steps."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = x.shape[0]
    if n == 0:
        raise EmptyTrainingSet("no training rows")
    rng = np.random.default_rng(seed)
    w = np.zeros((num_classes, x.shape[1]))
    b = np.zeros(num_classes)
    step = 0
    for _ in range(kind.epochs):
        for idx in _batches(rng, n, kind.batch_size):
            step += 1
            eta = 1.0 / (kind.lam * step)
            xb = x[idx]
            for c in range(num_classes):
                t = np.where(y[idx] == c, 1.0, -1.0)
                margin = t * (xb @ w[c] + b[c])
                viol = margin < 1.0
                w[c] *= 1.0 - eta * kind.lam
                if viol.any():
                    scale = eta / max(1, viol.sum())
                    w[c] += scale * (t[viol] @ xb[viol])
                    b[c] += scale * t[viol].sum()  # bias carries no regularization
    return LinearModel(weights=w, bias=b, num_classes=num_classes, kind="svm", meta={"seed": seed})


def train_logreg(x, y, num_classes: int, kind: BaselineKind, seed: int = 0) -> LinearModel:
    """Multinomial logistic regression by seeded mini-batch gradient descent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = x.shape[0]
    if n == 0:
        raise EmptyTrainingSet("no training rows")
    rng = np.random.default_rng(seed)
    w = np.zeros((num_classes, x.shape[1]))
    b = np.zeros(num_classes)
    for _ in range(kind.epochs):
        for idx in _batches(rng, n, kind.batch_size):
            logits = x[idx] @ w.T + b
            _, dlogits = nn.batch_softmax_cross_entropy(logits, y[idx])
            w -= kind.lr * (dlogits.T @ x[idx])
            b -= kind.lr * dlogits.sum(axis=0)
    return LinearModel(weights=w, bias=b, num_classes=num_classes, kind="logreg", meta={"seed": seed})


@dataclass
class RandomGuessModel:
    class_probs: np.ndarray  # empirical training label distribution
    seed: int
    kind: str = "random"
    meta: dict = field(default_factory=dict)

    def predict(self, x) -> np.ndarray:
        n = 1 if np.asarray(x).ndim == 1 else np.asarray(x).shape[0]
        rng = np.random.default_rng(self.seed)
        draws = rng.choice(self.class_probs.shape[0], size=n, p=self.class_probs)
        return draws[0] if np.asarray(x).ndim == 1 else draws


def train_baseline(kind: BaselineKind, x, y, num_classes: int, seed: int = 0):
    """Dispatch to the requested baseline trainer."""
    kind.validate()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.shape[0] == 0:
        raise EmptyTrainingSet("no training rows")
    if kind.name == "knn":
        if x.shape[0] < kind.k:
            raise NotEnoughNeighbors(f"{x.shape[0]} rows < k={kind.k}")
        return KnnModel(train_x=x.copy(), train_y=y.copy(), num_classes=num_classes, k=kind.k)
    if kind.name == "svm":
        return train_svm(x, y, num_classes, kind, seed)
    if kind.name == "logreg":
        return train_logreg(x, y, num_classes, kind, seed)
    counts = np.bincount(y, minlength=num_classes).astype(float)
    return RandomGuessModel(class_probs=counts / counts.sum(), seed=seed)


def random_guess_accuracy(labels, num_classes: int, seed: int = 0, draws: int = 100_000) -> float:
    """Empirical accuracy (%) of distribution-matched random guessing."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=num_classes).astype(float)
    probs = counts / counts.sum()
    rng = np.random.default_rng(seed)
    preds = rng.choice(num_classes, size=draws, p=probs)
    targets = rng.choice(num_classes, size=draws, p=probs)
    return float(np.mean(preds == targets) * 100.0)


# --- serialization -------------------------------------------------------------


def save_model(model, path) -> None:
    """Round-trip any trained model through the shared parameter container."""
    if model.kind == "mlp":
        meta = {"kind": "mlp", "cfg": vars(model.cfg) | {"hidden": list(model.cfg.hidden)}, **model.meta}
        nn.save_params(path, model.params, meta)
    elif model.kind == "lstm":
        meta = {"kind": "lstm", "cfg": vars(model.cfg), **model.meta}
        nn.save_params(path, model.params, meta)
    elif model.kind == "knn":
        meta = {"kind": "knn", "k": model.k, "num_classes": model.num_classes}
        nn.save_params(path, {"train_x": model.train_x, "train_y": model.train_y.astype(float)}, meta)
    elif model.kind in ("svm", "logreg"):
        meta = {"kind": model.kind, "num_classes": model.num_classes}
        nn.save_params(path, {"weights": model.weights, "bias": model.bias}, meta)
    elif model.kind == "random":
        meta = {"kind": "random", "seed": model.seed}
        nn.save_params(path, {"class_probs": model.class_probs}, meta)
    else:
        raise IoError(f"cannot serialize model kind '{model.kind}'")


def load_model(path):
    params, meta = nn.load_params(path)
    kind = meta.get("kind")
    if kind == "mlp":
        cfg_doc = dict(meta["cfg"])
        cfg_doc["hidden"] = tuple(cfg_doc["hidden"])
        return MlpModel(params=params, cfg=MlpConfig(**cfg_doc))
    if kind == "lstm":
        return LstmModel(params=params, cfg=LstmConfig(**meta["cfg"]))
    if kind == "knn":
        return KnnModel(
            train_x=params["train_x"],
            train_y=params["train_y"].astype(int),
            num_classes=meta["num_classes"],
            k=meta["k"],
        )
    if kind in ("svm", "logreg"):
        return LinearModel(
            weights=params["weights"], bias=params["bias"], num_classes=meta["num_classes"], kind=kind
        )
    if kind == "random":
        return RandomGuessModel(class_probs=params["class_probs"], seed=meta["seed"])
    raise IoError(f"unknown model kind '{kind}' in {path}")
