"""Relational-GCN encoder + DistMult decoder trained as a variational graph autoencoder."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import numerics as nx
from .errors import ContractError, TrainingError
from .graph import InteractionGraph

log = logging.getLogger(__name__)


@dataclass
class VgaeConfig:
    latent_dim: int = 16
    encoder_layers: int = 2
    hidden_dim: int = 32
    learning_rate: float = 0.01
    epochs: int = 200
    kl_weight: float = 1.0
    batch_size: Optional[int] = None  # None: full edge set every epoch
    optimizer: str = "sgd"
    seed: int = 0

    def __post_init__(self):
        for name in ("latent_dim", "hidden_dim", "encoder_layers"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.kl_weight < 0:
            raise ContractError("kl_weight must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ContractError("batch_size must be positive")


@dataclass
class LatentState:
    mu: np.ndarray
    log_var: np.ndarray
    z: np.ndarray
    eps: Optional[np.ndarray] = None


class VgaeModel:
    """Parameter container.

    Parameter names:
      ``embed``                       drug input table (|D| x hidden)
      ``l{k}.self``, ``l{k}.rel{t}``, ``l{k}.bias``     hidden layers
      ``{mu,lv}.self``, ``{mu,lv}.rel{t}``, ``{mu,lv}.bias``  output heads
      ``relation``                    DistMult diagonals (|T| x K)
    """

    def __init__(self, num_drugs: int, num_types: int, cfg: VgaeConfig,
                 rng: Optional[np.random.Generator] = None):
        self.num_drugs = num_drugs
        self.num_types = num_types
        self.cfg = cfg
        rng = nx.make_rng(cfg.seed, 1) if rng is None else rng
        h, k = cfg.hidden_dim, cfg.latent_dim
        p: Dict[str, nx.Tensor] = {}
        p["embed"] = nx.parameter(rng.normal(0.0, 1.0 / np.sqrt(h), size=(num_drugs, h)), "embed")
        for layer in range(cfg.encoder_layers - 1):
            self._relational_params(p, f"l{layer}", h, h, rng)
        self._relational_params(p, "mu", h, k, rng)
        self._relational_params(p, "lv", h, k, rng, scale=0.1)
        p["relation"] = nx.parameter(rng.uniform(-1.0, 1.0, size=(num_types, k)), "relation")
        self.params = p

    def _relational_params(self, p, prefix, fan_in, fan_out, rng, scale=1.0):
        p[f"{prefix}.self"] = nx.parameter(scale * nx.glorot(rng, fan_in, fan_out))
        for t in range(self.num_types):
            p[f"{prefix}.rel{t}"] = nx.parameter(scale * nx.glorot(rng, fan_in, fan_out))
        p[f"{prefix}.bias"] = nx.parameter(np.zeros(fan_out))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, arrays):
        for k, v in self.params.items():
            if arrays[k].shape != v.data.shape:
                raise ContractError(f"shape mismatch for {k}: {arrays[k].shape} vs {v.data.shape}")
            v.data = np.array(arrays[k], dtype=np.float64)

    def check_graph(self, g: InteractionGraph):
        if g.num_drugs != self.num_drugs or g.num_types != self.num_types:
            raise ContractError(
                f"model sized for {self.num_drugs} drugs/{self.num_types} types, "
                f"graph has {g.num_drugs}/{g.num_types}")


class _Adjacency:
    """Per-type directed message lists with mean-normalisation weights."""

    def __init__(self, g: InteractionGraph):
        n = g.num_drugs
        src = np.concatenate([g.heads, g.tails])
        dst = np.concatenate([g.tails, g.heads])
        typ = np.concatenate([g.edge_types, g.edge_types])
        self.by_type = []
        for t in range(g.num_types):
            m = typ == t
            s, d = src[m], dst[m]
            deg = np.bincount(d, minlength=n).astype(np.float64)
            w = 1.0 / deg[d] if len(d) else np.zeros(0)
            self.by_type.append((s, d, w))
        self.n = n


def _relational_layer(model: VgaeModel, h: nx.Tensor, adj: _Adjacency, prefix: str) -> nx.Tensor:
    p = model.params
    out = nx.add(h @ p[f"{prefix}.self"], p[f"{prefix}.bias"])
    for t, (s, d, w) in enumerate(adj.by_type):
        if len(s) == 0:
            continue
        agg = nx.scatter_rows(nx.gather_rows(h, s), d, adj.n, w)
        out = out + agg @ p[f"{prefix}.rel{t}"]
    return out


def encoder_heads(model: VgaeModel, g: InteractionGraph, adj: Optional[_Adjacency] = None):
    """Differentiable (mu, log_var) tensors for every drug."""
    model.check_graph(g)
    adj = _Adjacency(g) if adj is None else adj
    h = model.params["embed"]
    for layer in range(model.cfg.encoder_layers - 1):
        h = nx.relu(_relational_layer(model, h, adj, f"l{layer}"))
    return _relational_layer(model, h, adj, "mu"), _relational_layer(model, h, adj, "lv")


def reparameterize(mu: nx.Tensor, log_var: nx.Tensor, eps: np.ndarray) -> nx.Tensor:
    return mu + nx.exp(nx.mul(log_var, 0.5)) * nx.constant(eps)


def encode(model: VgaeModel, g: InteractionGraph, rng: Optional[np.random.Generator] = None,
           sample: bool = True, eps: Optional[np.ndarray] = None) -> LatentState:
    """Posterior parameters and embeddings for every drug.

    With ``sample=False`` (or no rng and no eps) the embedding is the mean.
    """
    mu, lv = encoder_heads(model, g)
    if eps is None and sample and rng is not None:
        eps = rng.standard_normal(mu.shape)
    if eps is None:
        return LatentState(mu.data.copy(), lv.data.copy(), mu.data.copy(), None)
    z = mu.data + np.exp(0.5 * lv.data) * eps
    return LatentState(mu.data.copy(), lv.data.copy(), z, eps)


def edge_type_scores(relation: nx.Tensor, z: nx.Tensor, heads, tails) -> nx.Tensor:
    """DistMult scores z_i^T diag(R_t) z_j for each (i, j) row, shape (B, |T|)."""
    zz = nx.gather_rows(z, heads) * nx.gather_rows(z, tails)
    return zz @ nx.transpose(relation)


def _softmax(scores: np.ndarray) -> np.ndarray:
    s = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def decode_type_distribution(model: VgaeModel, z_i, z_j) -> np.ndarray:
    """p(t | z_i, z_j) over all types; accepts single vectors or row batches."""
    r = model.params["relation"].data
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape[-1] != r.shape[1] or z_j.shape != z_i.shape:
        raise ContractError("embedding length must equal latent_dim")
    return _softmax((z_i * z_j) @ r.T)


def kl_divergence(mu: nx.Tensor, log_var: nx.Tensor) -> nx.Tensor:
    """KL(N(mu, exp(log_var)) || N(0, I)) summed over drugs and dimensions."""
    terms = nx.exp(log_var) + nx.square(mu) - 1.0 - log_var
    return nx.mul(nx.sum(terms), 0.5)


def elbo_loss(model: VgaeModel, batch, mu: nx.Tensor, log_var: nx.Tensor, z: nx.Tensor,
              kl_weight: float = 1.0, num_train_edges: Optional[int] = None) -> nx.Tensor:
    """Negative ELBO on a batch of (i, j, t) rows.

    The KL term is scaled by |batch| / |E_train| so an epoch of minibatches
    matches the full objective in expectation.
    """
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    if len(batch) == 0:
        raise ContractError("elbo_loss needs at least one edge")
    scores = edge_type_scores(model.params["relation"], z, batch[:, 0], batch[:, 1])
    recon = nx.neg(nx.sum(nx.pick(nx.log_softmax_rows(scores), batch[:, 2])))
    frac = 1.0 if num_train_edges is None else len(batch) / num_train_edges
    if kl_weight == 0.0:
        return recon
    return recon + nx.mul(kl_divergence(mu, log_var), kl_weight * frac)


def loss_fn(model: VgaeModel, g: InteractionGraph, batch, eps: Optional[np.ndarray],
            adj: Optional[_Adjacency] = None) -> nx.Tensor:
    """Forward pass from parameters to the negative ELBO with fixed noise."""
    mu, lv = encoder_heads(model, g, adj)
    z = mu if eps is None else reparameterize(mu, lv, eps)
    return elbo_loss(model, batch, mu, lv, z, model.cfg.kl_weight, g.num_edges)


@dataclass
class TrainResult:
    model: VgaeModel
    latent: LatentState
    losses: List[float] = field(default_factory=list)


def train_vgae(g: InteractionGraph, cfg: VgaeConfig) -> TrainResult:
    """Gradient descent on the negative ELBO; one (mini)batch step per epoch.

    The returned latent state uses z = mu (no sampling noise).
    """
    if g.num_edges == 0:
        raise ContractError("train_vgae needs a graph with edges")
    rng = nx.make_rng(cfg.seed, 2)
    model = VgaeModel(g.num_drugs, g.num_types, cfg, nx.make_rng(cfg.seed, 1))
    opt = nx.make_optimizer(cfg.optimizer, model.params, cfg.learning_rate)
    adj = _Adjacency(g)
    edges = g.edge_array
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_size is None or cfg.batch_size >= len(edges):
            batch = edges
        else:
            batch = edges[np.sort(rng.choice(len(edges), size=cfg.batch_size, replace=False))]
        eps = rng.standard_normal((g.num_drugs, cfg.latent_dim))
        with nx.Tape() as tape:
            loss = loss_fn(model, g, batch, eps, adj)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError("VGAE loss became non-finite", epoch=epoch)
        grads = tape.gradient(loss, model.params)
        if not all(np.isfinite(v).all() for v in grads.values()):
            raise TrainingError("VGAE gradient became non-finite", epoch=epoch)
        opt.step(grads)
        losses.append(value)
        if epoch % 100 == 0:
            log.debug("vgae epoch %d loss %.6f", epoch, value)
    latent = encode(model, g, sample=False)
    if not (np.isfinite(latent.mu).all() and np.isfinite(latent.log_var).all()):
        raise TrainingError("VGAE posterior became non-finite", epoch=cfg.epochs)
    return TrainResult(model, latent, losses)


def predict_edge(model: VgaeModel, latent: LatentState, i: int, j: int):
    """Most probable type for a pair (lowest index wins ties) and the full distribution."""
    if i == j:
        raise ContractError("predict_edge needs two distinct drugs")
    p = decode_type_distribution(model, latent.z[i], latent.z[j])
    return int(np.argmax(p)), p


def predict_pairs(model: VgaeModel, latent: LatentState, heads, tails) -> np.ndarray:
    """Type distributions for many pairs at once, shape (B, |T|)."""
    heads = np.asarray(heads, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    return decode_type_distribution(model, latent.z[heads], latent.z[tails])


def model_from_arrays(arrays, num_drugs: int, num_types: int, cfg: VgaeConfig) -> VgaeModel:
    model = VgaeModel(num_drugs, num_types, cfg)
    model.load_state_dict(arrays)
    return model
