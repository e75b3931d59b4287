"""GFlowNet over (type, first drug, second drug) triples trained with Trajectory Balance.

The state graph is a tree (s0 -> (t) -> (t, i) -> (t, i, j)), so every
terminal triple has exactly one trajectory and no backward policy is needed.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import numerics as nx
from .errors import ContractError, TrainingError
from .graph import InteractionGraph
from .reward import RewardConfig, log_reward_batch
from .vgae import LatentState, TrainResult

log = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**6


class Stage(enum.Enum):
    S0 = 0
    S1 = 1
    S2 = 2
    SF = 3


@dataclass(frozen=True)
class GfnState:
    stage: Stage
    type: Optional[int] = None
    first: Optional[int] = None
    second: Optional[int] = None

    def __post_init__(self):
        expected = {Stage.S0: (False, False, False), Stage.S1: (True, False, False),
                    Stage.S2: (True, True, False), Stage.SF: (True, True, True)}[self.stage]
        have = (self.type is not None, self.first is not None, self.second is not None)
        if have != expected:
            raise ContractError(f"fields set {have} do not match stage {self.stage.name}")
        if self.stage is Stage.SF and self.first == self.second:
            raise ContractError("terminal state needs two distinct drugs")


@dataclass
class TrajectoryRecord:
    states: List[GfnState]
    step_log_probs: np.ndarray
    candidate_slot: int  # position of the second drug inside candidates[first]
    reward: Optional[float] = None
    log_reward: Optional[float] = None

    @property
    def triple(self):
        s = self.states[-1]
        return s.type, s.first, s.second

    @property
    def log_prob(self) -> float:
        return float(np.sum(self.step_log_probs))

    def with_reward(self, r: float) -> "TrajectoryRecord":
        return TrajectoryRecord(self.states, self.step_log_probs, self.candidate_slot, r, float(np.log(r)))


@dataclass
class GfnConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    log_z_learning_rate: float = 0.05
    knn_k: int = 20
    alpha: float = 1.0
    batch: int = 64
    seed: int = 0
    hidden: int = 64
    type_embed_dim: int = 16
    exploration: float = 0.0

    def __post_init__(self):
        if self.knn_k < 1:
            raise ContractError("knn_k must be >= 1")
        if self.batch < 1 or self.epochs < 0:
            raise ContractError("batch must be >= 1 and epochs >= 0")
        if not 0.0 <= self.exploration < 1.0:
            raise ContractError("exploration must be in [0, 1)")


# ---------------------------------------------------------------------------
# candidate sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateIndex:
    neighbors: np.ndarray  # (|D|, k) drug indices, nearest first

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    def __getitem__(self, drug: int) -> np.ndarray:
        return self.neighbors[drug]


def build_candidate_index(latent: LatentState, knn_k: int) -> CandidateIndex:
    """Exact K nearest neighbours by Euclidean distance on z; ties go to the lower index."""
    if knn_k < 1:
        raise ContractError("knn_k must be >= 1")
    z = np.asarray(latent.z, dtype=np.float64)
    n = z.shape[0]
    if n < 2:
        raise ContractError("need at least two drugs for a candidate index")
    k = min(knn_k, n - 1)
    order = np.arange(n)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        d = ((z - z[i]) ** 2).sum(axis=1)
        d[i] = np.inf
        out[i] = np.lexsort((order, d))[:k]
    out.setflags(write=False)
    return CandidateIndex(out)


# ---------------------------------------------------------------------------
# policy
# ---------------------------------------------------------------------------

class GfnPolicy:
    """Three perceptron heads plus the learned log-partition ``log_z``.

    Output layers start at zero so a fresh policy is uniform at every step.
    """

    def __init__(self, num_types: int, num_drugs: int, latent_dim: int,
                 hidden: int = 64, type_embed_dim: int = 16,
                 rng: Optional[np.random.Generator] = None):
        rng = nx.make_rng(0, 10) if rng is None else rng
        self.num_types, self.num_drugs, self.latent_dim = num_types, num_drugs, latent_dim
        e, h = type_embed_dim, hidden
        p: Dict[str, nx.Tensor] = {}
        p["context"] = nx.parameter(rng.normal(0.0, 1.0, size=(1, e)))
        p["type_embed"] = nx.parameter(rng.normal(0.0, 1.0, size=(num_types, e)))
        for head, fan_in, fan_out in (("type", e, num_types), ("drug1", e, num_drugs),
                                      ("drug2", e + 2 * latent_dim, 1)):
            p[f"{head}.w1"] = nx.parameter(nx.glorot(rng, fan_in, h))
            p[f"{head}.b1"] = nx.parameter(np.zeros(h))
            p[f"{head}.w2"] = nx.parameter(np.zeros((h, fan_out)))
            p[f"{head}.b2"] = nx.parameter(np.zeros(fan_out))
        p["log_z"] = nx.parameter(np.array(0.0))
        self.params = p

    @property
    def log_z(self) -> float:
        return float(self.params["log_z"].data)

    def _mlp(self, head: str, x: nx.Tensor) -> nx.Tensor:
        p = self.params
        hid = nx.tanh(nx.add(x @ p[f"{head}.w1"], p[f"{head}.b1"]))
        return nx.add(hid @ p[f"{head}.w2"], p[f"{head}.b2"])

    def type_log_probs(self) -> nx.Tensor:
        """(1, |T|) log-probabilities of the first action."""
        return nx.log_softmax_rows(self._mlp("type", self.params["context"]))

    def drug1_log_probs(self) -> nx.Tensor:
        """(|T|, |D|) log-probabilities of the first drug given each type."""
        return nx.log_softmax_rows(self._mlp("drug1", self.params["type_embed"]))

    def drug2_log_probs(self, types, firsts, candidates: CandidateIndex, z: np.ndarray) -> nx.Tensor:
        """(B, k) log-probabilities over candidates[first] for each (type, first) row."""
        types = np.asarray(types, dtype=np.int64)
        firsts = np.asarray(firsts, dtype=np.int64)
        b, k = len(types), candidates.k
        cand = candidates.neighbors[firsts].reshape(-1)
        rep = np.repeat(np.arange(b), k)
        x = nx.concat_cols(nx.gather_rows(self.params["type_embed"], types[rep]),
                           nx.constant(z[firsts[rep]]), nx.constant(z[cand]))
        scores = nx.reshape(self._mlp("drug2", x), (b, k))
        return nx.log_softmax_rows(scores)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, arrays):
        for k, v in self.params.items():
            if np.shape(arrays[k]) != v.data.shape:
                raise ContractError(f"shape mismatch for {k}")
            v.data = np.array(arrays[k], dtype=np.float64)


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None] * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=1), probs.shape[1] - 1)


def _mix(probs: np.ndarray, exploration: float) -> np.ndarray:
    if exploration == 0.0:
        return probs
    return (1.0 - exploration) * probs + exploration / probs.shape[1]


@dataclass
class TrajectoryBatch:
    types: np.ndarray
    firsts: np.ndarray
    slots: np.ndarray
    seconds: np.ndarray
    step_log_probs: np.ndarray  # (B, 3) under the policy, not the exploration mixture


def sample_batch(policy: GfnPolicy, candidates: CandidateIndex, latent: LatentState, n: int,
                 rng: np.random.Generator, exploration: float = 0.0) -> TrajectoryBatch:
    lp_type = policy.type_log_probs().data[0]
    lp_drug1 = policy.drug1_log_probs().data
    types = _sample_rows(_mix(np.tile(np.exp(lp_type), (n, 1)), exploration), rng)
    firsts = _sample_rows(_mix(np.exp(lp_drug1[types]), exploration), rng)
    lp_drug2 = policy.drug2_log_probs(types, firsts, candidates, latent.z).data
    slots = _sample_rows(_mix(np.exp(lp_drug2), exploration), rng)
    rows = np.arange(n)
    steps = np.stack([lp_type[types], lp_drug1[types, firsts], lp_drug2[rows, slots]], axis=1)
    seconds = candidates.neighbors[firsts, slots]
    return TrajectoryBatch(types, firsts, slots, seconds, steps)


def sample_trajectory(policy: GfnPolicy, candidates: CandidateIndex, latent: LatentState,
                      rng: np.random.Generator, exploration: float = 0.0) -> TrajectoryRecord:
    """One s0 -> s1 -> s2 -> sf rollout; the caller attaches the reward."""
    b = sample_batch(policy, candidates, latent, 1, rng, exploration)
    t, i, j = int(b.types[0]), int(b.firsts[0]), int(b.seconds[0])
    states = [GfnState(Stage.S0), GfnState(Stage.S1, t), GfnState(Stage.S2, t, i),
              GfnState(Stage.SF, t, i, j)]
    return TrajectoryRecord(states, b.step_log_probs[0].copy(), int(b.slots[0]))


def trajectory_log_probs(policy: GfnPolicy, candidates: CandidateIndex, z: np.ndarray,
                         types, firsts, slots) -> nx.Tensor:
    """Differentiable log P_F(tau) for each trajectory, shape (B,)."""
    types = np.asarray(types, dtype=np.int64)
    firsts = np.asarray(firsts, dtype=np.int64)
    lp_t = nx.pick(nx.gather_rows(policy.type_log_probs(), np.zeros(len(types), dtype=np.int64)), types)
    lp_1 = nx.pick(nx.gather_rows(policy.drug1_log_probs(), types), firsts)
    lp_2 = nx.pick(policy.drug2_log_probs(types, firsts, candidates, z), slots)
    return lp_t + lp_1 + lp_2


def tb_loss_batch(policy: GfnPolicy, candidates: CandidateIndex, z: np.ndarray,
                  types, firsts, slots, log_rewards) -> nx.Tensor:
    """Mean of (log Z + log P_F(tau) - log R)^2 over the batch."""
    log_p = trajectory_log_probs(policy, candidates, z, types, firsts, slots)
    resid = nx.add(log_p, policy.params["log_z"]) - nx.constant(np.asarray(log_rewards, dtype=np.float64))
    return nx.mean(nx.square(resid))


def tb_loss(policy: GfnPolicy, trajectory: TrajectoryRecord, candidates: CandidateIndex,
            latent: LatentState) -> nx.Tensor:
    if trajectory.reward is None or trajectory.reward <= 0:
        raise ContractError("trajectory balance needs a positive reward")
    t, i, _ = trajectory.triple
    return tb_loss_batch(policy, candidates, latent.z, [t], [i], [trajectory.candidate_slot],
                         [np.log(trajectory.reward)])


LogRewardFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class GfnResult:
    policy: GfnPolicy
    candidates: CandidateIndex
    losses: List[float] = field(default_factory=list)
    log_z_trace: List[float] = field(default_factory=list)


def fit_policy(policy: GfnPolicy, candidates: CandidateIndex, latent: LatentState,
               log_reward_fn: LogRewardFn, cfg: GfnConfig,
               rng: Optional[np.random.Generator] = None) -> GfnResult:
    """On-policy Trajectory Balance training with Adam; one batch per epoch."""
    rng = nx.make_rng(cfg.seed, 11) if rng is None else rng
    opt = nx.Adam(policy.params, cfg.learning_rate, lr_overrides={"log_z": cfg.log_z_learning_rate})
    res = GfnResult(policy, candidates)
    for epoch in range(1, cfg.epochs + 1):
        b = sample_batch(policy, candidates, latent, cfg.batch, rng, cfg.exploration)
        log_r = log_reward_fn(b.types, b.firsts, b.seconds)
        with nx.Tape() as tape:
            loss = tb_loss_batch(policy, candidates, latent.z, b.types, b.firsts, b.slots, log_r)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError("trajectory balance loss became non-finite", epoch=epoch)
        opt.step(tape.gradient(loss, policy.params))
        res.losses.append(value)
        res.log_z_trace.append(policy.log_z)
        if epoch % 500 == 0:
            log.debug("gfn epoch %d loss %.6f logZ %.4f", epoch, value, policy.log_z)
    return res


def train_gflownet(g_train: InteractionGraph, vgae: TrainResult, cfg: GfnConfig,
                   reward_cfg: Optional[RewardConfig] = None) -> GfnResult:
    """Train a fresh policy against the frozen pre-trained VGAE reward."""
    reward_cfg = RewardConfig(alpha=cfg.alpha) if reward_cfg is None else reward_cfg
    latent = vgae.latent
    counts = g_train.type_counts.copy()
    candidates = build_candidate_index(latent, cfg.knn_k)
    policy = GfnPolicy(g_train.num_types, g_train.num_drugs, latent.z.shape[1],
                       cfg.hidden, cfg.type_embed_dim, nx.make_rng(cfg.seed, 10))

    def log_reward_fn(types, firsts, seconds):
        return log_reward_batch(types, firsts, seconds, counts, vgae.model, latent, reward_cfg)

    return fit_policy(policy, candidates, latent, log_reward_fn, cfg)


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

@dataclass
class TerminalDistribution:
    """P_F over every reachable triple: probs[t, i, s] for second = neighbors[i, s]."""
    probs: np.ndarray
    candidates: CandidateIndex

    def as_dict(self) -> Dict[tuple, float]:
        out = {}
        T, D, k = self.probs.shape
        for t in range(T):
            for i in range(D):
                for s in range(k):
                    out[(t, i, int(self.candidates.neighbors[i, s]))] = float(self.probs[t, i, s])
        return out

    def dense(self) -> np.ndarray:
        """(|T|, |D|, |D|) array with zeros at unreachable triples."""
        T, D, k = self.probs.shape
        out = np.zeros((T, D, D))
        rows = np.repeat(np.arange(D), k)
        cols = self.candidates.neighbors.reshape(-1)
        for t in range(T):
            out[t, rows, cols] = self.probs[t].reshape(-1)
        return out

    def type_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=(1, 2))


def enumerate_terminal_distribution(policy: GfnPolicy, candidates: CandidateIndex,
                                    latent: LatentState) -> TerminalDistribution:
    T, D, k = policy.num_types, policy.num_drugs, candidates.k
    if T * D * k > ENUMERATION_LIMIT:
        raise ContractError(f"state space {T * D * k} exceeds enumeration limit {ENUMERATION_LIMIT}")
    p_t = np.exp(policy.type_log_probs().data[0])
    p_1 = np.exp(policy.drug1_log_probs().data)
    types = np.repeat(np.arange(T), D)
    firsts = np.tile(np.arange(D), T)
    p_2 = np.exp(policy.drug2_log_probs(types, firsts, candidates, latent.z).data).reshape(T, D, k)
    return TerminalDistribution(p_t[:, None, None] * p_1[:, :, None] * p_2, candidates)


def enumerate_rewards(candidates: CandidateIndex, log_reward_fn: LogRewardFn, num_types: int) -> np.ndarray:
    """R at every reachable triple, shaped like TerminalDistribution.probs."""
    D, k = candidates.neighbors.shape
    types = np.repeat(np.arange(num_types), D * k)
    firsts = np.tile(np.repeat(np.arange(D), k), num_types)
    seconds = np.tile(candidates.neighbors.reshape(-1), num_types)
    return np.exp(log_reward_fn(types, firsts, seconds)).reshape(num_types, D, k)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def save_policy(policy: GfnPolicy, prefix, meta: Optional[dict] = None):
    meta = dict(meta or {})
    meta.update(num_types=policy.num_types, num_drugs=policy.num_drugs, latent_dim=policy.latent_dim)
    return nx.save_arrays(prefix, policy.state_dict(), meta)


def load_policy(prefix, hidden: int, type_embed_dim: int) -> GfnPolicy:
    arrays, meta = nx.load_arrays(prefix)
    policy = GfnPolicy(meta["num_types"], meta["num_drugs"], meta["latent_dim"], hidden, type_embed_dim)
    policy.load_state_dict(arrays)
    return policy
