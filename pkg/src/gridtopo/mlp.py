"""Fully connected policy network, trained by hand-rolled backprop.

The output is one sigmoid per switchable object.  The loss is binary cross
entropy with per-object weights that focus learning on the substation the
expert touched and on the substation the network currently believes in;
everything else is downweighted by alpha.  The weights are recomputed from
the live predictions every step but treated as constants by the gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid_model import GridTopology
from .imitation import TRAIN, VAL, Dataset, NormStats

_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 7e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    alpha: float = 0.1            # weight of objects outside the focus substations
    eval_every: int = 10_000      # iterations between validation evaluations
    patience: int = 20            # evaluations without improvement before stopping
    hidden_size: int = 230
    hidden_layers: int = 4
    leak: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")


class Mlp:
    """Plain numpy MLP: leaky-ReLU hidden layers, sigmoid output."""

    def __init__(self, weights, biases, leak: float):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.leak = leak

    @classmethod
    def create(cls, sizes, leak: float, rng: np.random.Generator) -> "Mlp":
        # He-style scaling for the leaky-ReLU stack; anything much hotter
        # saturates the sigmoid head and the net memorizes without generalizing.
        weights, biases = [], []
        gain = np.sqrt(2.0 / (1.0 + leak**2))
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, leak)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x: np.ndarray):
        """Returns output probabilities and the activation cache for backprop."""
        a = np.atleast_2d(x)
        pre, post = [], [a]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            if k == last:
                a = 1.0 / (1.0 + np.exp(-z))
            else:
                a = np.where(z > 0, z, self.leak * z)
            post.append(a)
        return a, (pre, post)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, p: np.ndarray, y: np.ndarray, w_label: np.ndarray):
        """Gradients of the weighted BCE mean wrt every parameter."""
        pre, post = cache
        batch, n_out = p.shape
        delta = w_label * (p - y) / (batch * n_out)     # sigmoid + BCE cancel
        grads_w, grads_b = [None] * len(self.weights), [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w[k] = post[k].T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * np.where(
                    pre[k - 1] > 0, 1.0, self.leak
                )
        return grads_w, grads_b

    def copy_params(self):
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def set_params(self, params):
        weights, biases = params
        self.weights = [w.copy() for w in weights]
        self.biases = [b.copy() for b in biases]


def predicted_substation(p: np.ndarray, grid: GridTopology) -> np.ndarray:
    """Most activated substation per row, by summed above-threshold mass;
    -1 when no output exceeds 0.5.  Ties resolve to the lowest id."""
    P = np.atleast_2d(p)
    contrib = np.maximum(P - 0.5, 0.0)
    n_subs = len(grid.substations)
    per_sub = np.zeros((len(P), n_subs))
    for s in range(n_subs):
        per_sub[:, s] = contrib[:, grid.object_substation == s].sum(axis=1)
    best = per_sub.argmax(axis=1)
    best[per_sub.max(axis=1) <= 0.0] = -1
    return best


def label_weights(
    p: np.ndarray, y: np.ndarray, grid: GridTopology, alpha: float
) -> np.ndarray:
    """Per-object loss weights: 1 on the target substation and on the
    currently predicted substation, alpha elsewhere."""
    P, Y = np.atleast_2d(p), np.atleast_2d(y)
    n_subs = len(grid.substations)
    focus = np.zeros((len(P), n_subs), dtype=bool)
    has_target = Y.any(axis=1)
    target_sub = np.where(has_target, grid.object_substation[Y.argmax(axis=1)], -1)
    pred_sub = predicted_substation(P, grid)
    for s in range(n_subs):
        focus[:, s] = (target_sub == s) | (pred_sub == s)
    member = focus[:, grid.object_substation]           # (B, n_objects)
    return alpha + (1.0 - alpha) * member


def bce_loss(p: np.ndarray, y: np.ndarray, w_label: np.ndarray) -> float:
    pc = np.clip(p, _CLAMP, 1.0 - _CLAMP)
    terms = -w_label * (y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    return float(terms.mean())


@dataclass
class _Adam:
    lr: float
    beta1: float
    beta2: float
    eps: float
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass(frozen=True)
class TrainHistory:
    evaluations: tuple            # (iteration, val_loss, val_accuracy) triples
    epoch_losses: tuple           # mean train loss per epoch
    iterations: int
    stopped_early: bool


@dataclass
class TrainedModel:
    mlp: Mlp
    norm: NormStats
    meta: dict

    def predict_raw(self, features: np.ndarray) -> np.ndarray:
        """Probabilities from raw (unnormalized) feature rows."""
        return self.mlp.predict(self.norm.apply(np.atleast_2d(features)))


def train(
    dataset: Dataset, grid: GridTopology, cfg: TrainConfig = TrainConfig()
) -> tuple[TrainedModel, TrainHistory]:
    tr = dataset.rows(TRAIN)
    va = dataset.rows(VAL)
    if len(tr) == 0:
        raise ValueError("training split is empty")
    x_tr = dataset.norm.apply(dataset.x[tr])
    y_tr = dataset.y[tr].astype(np.float64)
    x_va = dataset.norm.apply(dataset.x[va]) if len(va) else None
    y_va = dataset.y[va].astype(np.float64) if len(va) else None

    sizes = [x_tr.shape[1]] + [cfg.hidden_size] * cfg.hidden_layers + [y_tr.shape[1]]
    rng = np.random.default_rng([cfg.seed, 0x6D6C70])
    model = Mlp.create(sizes, cfg.leak, rng)
    opt = _Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)

    def evaluate() -> tuple[float, float]:
        p = model.predict(x_va)
        loss = bce_loss(p, y_va, label_weights(p, y_va, grid, cfg.alpha))
        acc = float(((p > 0.5) == (y_va > 0.5)).all(axis=1).mean())
        return loss, acc

    # Stop once the running-max validation accuracy has not improved for
    # cfg.patience consecutive evaluations; keep the best-accuracy weights.
    best_acc = -1.0
    best_params = model.copy_params()
    evaluations = []
    epoch_losses = []
    bad_evals = 0
    it = 0
    stopped = False

    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(x_tr))
        batch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            p, cache = model.forward(xb)
            w_label = label_weights(p, yb, grid, cfg.alpha)
            loss = bce_loss(p, yb, w_label)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at iteration {it}")
            batch_losses.append(loss)
            gw, gb = model.backward(cache, p, yb, w_label)
            opt.step(model.weights + model.biases, gw + gb)
            it += 1
            if x_va is not None and it % cfg.eval_every == 0:
                vl, acc = evaluate()
                evaluations.append((it, vl, acc))
                if acc > best_acc:
                    best_acc, best_params, bad_evals = acc, model.copy_params(), 0
                else:
                    bad_evals += 1
                    if bad_evals >= cfg.patience:
                        stopped = True
                        break
        epoch_losses.append(float(np.mean(batch_losses)))
        if stopped:
            break

    if x_va is not None:
        vl, acc = evaluate()
        evaluations.append((it, vl, acc))
        if acc > best_acc:
            best_acc, best_params = acc, model.copy_params()
        model.set_params(best_params)

    trained = TrainedModel(
        mlp=model,
        norm=dataset.norm,
        meta={
            "sizes": model.sizes,
            "leak": cfg.leak,
            "seed": cfg.seed,
            "iterations": it,
            "best_val_accuracy": None if x_va is None else best_acc,
            "train_scenarios": sorted(set(dataset.scenario_id[tr].tolist())),
        },
    )
    history = TrainHistory(
        evaluations=tuple(evaluations),
        epoch_losses=tuple(epoch_losses),
        iterations=it,
        stopped_early=stopped,
    )
    return trained, history


# ------------------------------------------------------------------ metrics

def accuracy_report(model: TrainedModel, dataset: Dataset, which: int, space, grid) -> dict:
    """Exact-match accuracy of postprocessed and raw-thresholded predictions,
    plus a per-class breakdown keyed by the expert's set-action identity."""
    from .action_space import nearest_valid_switch

    rows = dataset.rows(which)
    if len(rows) == 0:
        raise ValueError("empty split")
    P = model.predict_raw(dataset.x[rows])
    topo_block = dataset.x[rows][:, -grid.n_objects :].astype(np.int8)
    y = dataset.y[rows]

    post_hits = np.zeros(len(rows), dtype=bool)
    decoded = np.zeros(len(rows), dtype=int)
    for k in range(len(rows)):
        sw = nearest_valid_switch(P[k], space, topo_block[k], grid)
        decoded[k] = sw.action_index
        post_hits[k] = np.array_equal(sw.bits, y[k])
    raw_hits = ((P > 0.5).astype(np.int8) == y).all(axis=1)

    per_class = {}
    for cls in np.unique(dataset.action_index[rows]):
        mask = dataset.action_index[rows] == cls
        per_class[int(cls)] = {
            "n": int(mask.sum()),
            "accuracy": float(post_hits[mask].mean()),
        }
    return {
        "n": len(rows),
        "accuracy": float(post_hits.mean()),
        "raw_accuracy": float(raw_hits.mean()),
        "per_class": per_class,
        "decoded_index": decoded,
    }


# -------------------------------------------------------------- persistence

def save_model(path: str | Path, model: TrainedModel) -> None:
    doc = {
        "format_version": 1,
        "arch": {"sizes": model.mlp.sizes, "leak": model.mlp.leak},
        "norm": {"mean": model.norm.mean.tolist(), "std": model.norm.std.tolist()},
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(model.mlp.weights, model.mlp.biases)
        ],
        "meta": model.meta,
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path: str | Path) -> TrainedModel:
    doc = json.loads(Path(path).read_text())
    mlp = Mlp(
        weights=[np.array(l["w"]) for l in doc["layers"]],
        biases=[np.array(l["b"]) for l in doc["layers"]],
        leak=doc["arch"]["leak"],
    )
    return TrainedModel(
        mlp=mlp,
        norm=NormStats(
            mean=np.array(doc["norm"]["mean"]), std=np.array(doc["norm"]["std"])
        ),
        meta=doc["meta"],
    )
