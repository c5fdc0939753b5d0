"""Transformer encoder over latent features plus a sigmoid defect head.

Each latent dimension becomes one token: token i is z[i] * w_embed + b_embed
+ pos[i] with learned shared vectors and a learned position table. Pre-norm
residual blocks (multi-head self-attention, then a relu feedforward) are
followed by mean-pooling and an affine-to-sigmoid head. Heads use per-head
projection matrices; summing the per-head output projections is identical to
the concatenate-then-project formulation.

Minibatches ride through the 2-D autodiff core by stacking sequences as
consecutive row blocks; the attention primitive keeps blocks independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Graph, Node, ParamStore, adam_step
from .errors import LengthMismatch
from .seeding import derive_seed


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 16
    n_heads: int = 2
    n_layers: int = 2
    ff_hidden: int = 32
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class DefectPrediction:
    probability: float
    label: int  # 1 iff probability >= 0.5 (ties go to defective)


@dataclass
class TransformerModel:
    cfg: TransformerConfig
    latent_dim: int
    params: ParamStore

    @classmethod
    def create(cls, cfg: TransformerConfig, latent_dim: int, seed: int = 0) -> "TransformerModel":
        rng = np.random.default_rng(seed)
        d, dh, ff = cfg.d_model, cfg.d_head, cfg.ff_hidden
        p = ParamStore()
        p.add("emb.w", rng.normal(0.0, 1.0, size=(1, d)))
        p.add("emb.b", np.zeros((1, d)))
        p.add("emb.pos", rng.normal(0.0, 0.02, size=(latent_dim, d)))
        for i in range(cfg.n_layers):
            for h in range(cfg.n_heads):
                for name in ("wq", "wk", "wv"):
                    p.add(f"blk{i}.h{h}.{name}", rng.normal(0.0, 1.0, size=(d, dh)) / np.sqrt(d))
                p.add(f"blk{i}.h{h}.wo", rng.normal(0.0, 1.0, size=(dh, d)) / np.sqrt(dh))
            p.add(f"blk{i}.ff.w1", rng.normal(0.0, 1.0, size=(d, ff)) / np.sqrt(d))
            p.add(f"blk{i}.ff.b1", np.zeros((1, ff)))
            p.add(f"blk{i}.ff.w2", rng.normal(0.0, 1.0, size=(ff, d)) / np.sqrt(ff))
            p.add(f"blk{i}.ff.b2", np.zeros((1, d)))
        p.add("head.w", rng.normal(0.0, 1.0, size=(d, 1)) / np.sqrt(d))
        p.add("head.b", np.zeros((1, 1)))
        return cls(cfg=cfg, latent_dim=latent_dim, params=p)


# --- graph builders ---------------------------------------------------------


def _embed_nodes(g: Graph, model: TransformerModel, z_batch: np.ndarray) -> Node:
    batch, t = z_batch.shape
    z_col = g.input(z_batch.reshape(-1, 1))
    tile = g.input(np.tile(np.eye(t), (batch, 1)))
    tokens = g.add(
        g.matmul(z_col, g.param("emb.w", model.params.get("emb.w"))),
        g.param("emb.b", model.params.get("emb.b")),
    )
    return g.add(tokens, g.matmul(tile, g.param("emb.pos", model.params.get("emb.pos"))))


def _block_nodes(
    g: Graph, model: TransformerModel, x: Node, i: int, seq_len: int
) -> tuple[Node, list[Node]]:
    cfg = model.cfg
    p = model.params
    normed = g.layer_norm_rows(x, cfg.layer_norm_eps)
    attn_nodes = []
    heads_out = None
    for h in range(cfg.n_heads):
        q = g.matmul(normed, g.param(f"blk{i}.h{h}.wq", p.get(f"blk{i}.h{h}.wq")))
        k = g.matmul(normed, g.param(f"blk{i}.h{h}.wk", p.get(f"blk{i}.h{h}.wk")))
        v = g.matmul(normed, g.param(f"blk{i}.h{h}.wv", p.get(f"blk{i}.h{h}.wv")))
        att = g.attention(q, k, v, seq_len)
        attn_nodes.append(att)
        proj = g.matmul(att, g.param(f"blk{i}.h{h}.wo", p.get(f"blk{i}.h{h}.wo")))
        heads_out = proj if heads_out is None else g.add(heads_out, proj)
    x = g.add(x, heads_out)
    normed2 = g.layer_norm_rows(x, cfg.layer_norm_eps)
    hidden = g.relu(
        g.add(
            g.matmul(normed2, g.param(f"blk{i}.ff.w1", p.get(f"blk{i}.ff.w1"))),
            g.param(f"blk{i}.ff.b1", p.get(f"blk{i}.ff.b1")),
        )
    )
    ff = g.add(
        g.matmul(hidden, g.param(f"blk{i}.ff.w2", p.get(f"blk{i}.ff.w2"))),
        g.param(f"blk{i}.ff.b2", p.get(f"blk{i}.ff.b2")),
    )
    return g.add(x, ff), attn_nodes


def _forward_nodes(g: Graph, model: TransformerModel, z_batch: np.ndarray) -> tuple[Node, list[Node]]:
    """Probability node of shape (batch, 1) plus all attention nodes."""
    batch, t = z_batch.shape
    x = _embed_nodes(g, model, z_batch)
    attn_nodes = []
    for i in range(model.cfg.n_layers):
        x, nodes = _block_nodes(g, model, x, i, t)
        attn_nodes.extend(nodes)
    pool = np.zeros((batch, batch * t))
    for b in range(batch):
        pool[b, b * t : (b + 1) * t] = 1.0 / t
    pooled = g.matmul(g.input(pool), x)
    logit = g.add(
        g.matmul(pooled, g.param("head.w", model.params.get("head.w"))),
        g.param("head.b", model.params.get("head.b")),
    )
    return g.sigmoid(logit), attn_nodes


# --- public operations -------------------------------------------------------


def embed_tokens(model: TransformerModel, z: np.ndarray) -> np.ndarray:
    """Token matrix (latent_dim, d_model) for one latent vector."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return _embed_nodes(Graph(), model, z).value


def self_attention(
    seq: np.ndarray, head_weights: list[tuple[np.ndarray, ...]], return_probs: bool = False
):
    """Multi-head self-attention over one token sequence.

    head_weights is one (wq, wk, wv, wo) tuple per head; outputs of the
    per-head projections are summed (equivalent to concat + joint output
    projection). No masking: attention is fully bidirectional.
    """
    g = Graph()
    s = g.input(seq)
    t = s.shape[0]
    out = None
    probs = []
    for wq, wk, wv, wo in head_weights:
        att = g.attention(g.matmul(s, g.input(wq)), g.matmul(s, g.input(wk)), g.matmul(s, g.input(wv)), t)
        probs.append(att.extra["probs"][0])
        proj = g.matmul(att, g.input(wo))
        out = proj if out is None else g.add(out, proj)
    return (out.value, probs) if return_probs else out.value


def encoder_block(model: TransformerModel, seq: np.ndarray, block: int = 0) -> np.ndarray:
    """One pre-norm residual block applied to a single token sequence."""
    g = Graph()
    x = g.input(np.asarray(seq, dtype=np.float64))
    out, _ = _block_nodes(g, model, x, block, x.shape[0])
    return out.value


def predict(model: TransformerModel, z: np.ndarray) -> DefectPrediction:
    """Probability and thresholded label for one latent vector."""
    prob = float(predict_proba(model, np.asarray(z, dtype=np.float64).reshape(1, -1))[0])
    return DefectPrediction(probability=prob, label=int(prob >= 0.5))


def predict_proba(model: TransformerModel, z_batch: np.ndarray) -> np.ndarray:
    """Defect probabilities for a batch of latent vectors."""
    z_batch = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    prob_node, _ = _forward_nodes(Graph(), model, z_batch)
    return prob_node.value.reshape(-1)


def attention_probs(model: TransformerModel, z: np.ndarray) -> list[np.ndarray]:
    """Row-stochastic attention matrices, one (T, T) per (layer, head)."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    _, attn_nodes = _forward_nodes(Graph(), model, z)
    return [node.extra["probs"][0] for node in attn_nodes]


def train_classifier(
    latents: np.ndarray,
    labels: np.ndarray,
    cfg: TransformerConfig,
    lr: float,
    weight_decay: float,
    epochs: int,
    batch_size: int,
    seed: int,
    checkpoints: tuple[int, ...] = (),
    on_checkpoint=None,
) -> tuple[TransformerModel, list[float]]:
    """Supervised BCE training over precomputed latents.

    on_checkpoint(epoch, model) fires after finishing each epoch listed in
    checkpoints (epochs are 1-based). Deterministic for a fixed seed.
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if latents.shape[0] != labels.shape[0]:
        raise LengthMismatch(f"{latents.shape[0]} latents vs {labels.shape[0]} labels")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")

    model = TransformerModel.create(cfg, latents.shape[1], seed=derive_seed(seed, "init"))
    rng = np.random.default_rng(derive_seed(seed, "shuffle"))
    n_rows = latents.shape[0]
    wanted = set(checkpoints)
    curve = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n_rows)
        total, count = 0.0, 0
        for start in range(0, n_rows, batch_size):
            idx = order[start : start + batch_size]
            g = Graph()
            prob, _ = _forward_nodes(g, model, latents[idx])
            loss = g.binary_cross_entropy(prob, g.input(labels[idx].reshape(-1, 1)))
            grads = g.backward(loss)
            adam_step(model.params, grads, lr=lr, weight_decay=weight_decay)
            total += float(loss.value[0, 0]) * idx.size
            count += idx.size
        curve.append(total / count)
        if epoch in wanted and on_checkpoint is not None:
            on_checkpoint(epoch, model)
    return model, curve


# --- persistence -------------------------------------------------------------


def save_classifier(model: TransformerModel, bin_path: str, json_path: str):
    import json

    model.params.save(bin_path)
    sidecar = {
        "d_model": model.cfg.d_model,
        "n_heads": model.cfg.n_heads,
        "n_layers": model.cfg.n_layers,
        "ff_hidden": model.cfg.ff_hidden,
        "layer_norm_eps": model.cfg.layer_norm_eps,
        "latent_dim": model.latent_dim,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_classifier(bin_path: str, json_path: str) -> TransformerModel:
    import json

    with open(json_path, "r", encoding="utf-8") as fh:
        side = json.load(fh)
    cfg = TransformerConfig(
        d_model=side["d_model"],
        n_heads=side["n_heads"],
        n_layers=side["n_layers"],
        ff_hidden=side["ff_hidden"],
        layer_norm_eps=side["layer_norm_eps"],
    )
    return TransformerModel(cfg=cfg, latent_dim=side["latent_dim"], params=ParamStore.load(bin_path))
