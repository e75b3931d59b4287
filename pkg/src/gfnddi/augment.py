"""Sample synthetic triples from a trained policy and merge them into the training graph."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError
from .gflownet import CandidateIndex, GfnPolicy, sample_batch
from .graph import HEADER, InteractionGraph, ingest_edge_list, union
from .reward import RewardConfig, log_reward_batch, rareness, reward  # noqa: F401  (re-exported)
from .vgae import LatentState

BUDGET_FACTOR = 50


@dataclass
class SyntheticSet:
    triples: np.ndarray  # (n, 3) canonical (first, second, type)
    drugs: tuple
    types: tuple
    requested: int
    sampled: int
    policy_id: str = ""
    provenance: str = "synthetic"
    meta: dict = field(default_factory=dict)

    @property
    def kept(self) -> int:
        return len(self.triples)

    @property
    def type_counts(self) -> np.ndarray:
        return np.bincount(self.triples[:, 2], minlength=len(self.types)) if self.kept else np.zeros(len(self.types), dtype=np.int64)


def generate_synthetic(policy: GfnPolicy, candidates: CandidateIndex, latent: LatentState,
                       g_train: InteractionGraph, n: int, rng: np.random.Generator,
                       batch: int = 256, policy_id: str = "") -> SyntheticSet:
    """Draw triples until ``n`` new ones are kept or 50 * n draws are spent.

    Pairs are put in canonical order before the duplicate checks against the
    training edges and against earlier draws.
    """
    if n < 0:
        raise ContractError("n must be >= 0")
    seen = set(g_train.edge_set)
    kept = []
    sampled = 0
    budget = BUDGET_FACTOR * n
    while len(kept) < n and sampled < budget:
        m = min(batch, budget - sampled)
        b = sample_batch(policy, candidates, latent, m, rng)
        sampled += m
        lo = np.minimum(b.firsts, b.seconds)
        hi = np.maximum(b.firsts, b.seconds)
        for e in zip(lo.tolist(), hi.tolist(), b.types.tolist()):
            if e in seen:
                continue
            seen.add(e)
            kept.append(e)
            if len(kept) == n:
                break
    if len(kept) < n:
        warnings.warn(f"kept {len(kept)} of {n} requested synthetic triples after {sampled} draws",
                      stacklevel=2)
    arr = np.asarray(kept, dtype=np.int64).reshape(-1, 3)
    return SyntheticSet(arr, g_train.drugs, g_train.types, n, sampled, policy_id)


def merge(g_train: InteractionGraph, synth: SyntheticSet) -> InteractionGraph:
    """Union of training and synthetic edges with recomputed type counts."""
    if tuple(synth.drugs) != g_train.drugs or tuple(synth.types) != g_train.types:
        raise ContractError("synthetic set was generated over a different vocabulary")
    return union(g_train, synth.triples)


def write_synthetic(synth: SyntheticSet, path):
    _write_rows(path, synth.drugs, synth.types, [(e, synth.provenance) for e in synth.triples.tolist()])


def write_augmented(g_train: InteractionGraph, synth: SyntheticSet, path):
    """Merged edge list with a provenance column (``train`` or ``synthetic``)."""
    rows = [(e, "train") for e in g_train.edge_array.tolist()]
    rows += [(e, synth.provenance) for e in synth.triples.tolist()]
    _write_rows(path, g_train.drugs, g_train.types, rows)


def _write_rows(path, drugs, types, rows):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(HEADER + ("provenance",))
    for (a, b, t), tag in rows:
        w.writerow([drugs[a], drugs[b], types[t], tag])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_synthetic(path, g_train: InteractionGraph, requested: Optional[int] = None) -> SyntheticSet:
    if len(Path(path).read_text(encoding="utf-8").splitlines()) <= 1:
        arr = np.zeros((0, 3), dtype=np.int64)
    else:
        arr = ingest_edge_list(path, vocabulary=(g_train.drugs, g_train.types)).edge_array.copy()
    n = len(arr) if requested is None else requested
    return SyntheticSet(arr, g_train.drugs, g_train.types, n, n)
