"""Planted-structure synthetic interaction datasets with controllable type imbalance."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List

import numpy as np

from .errors import ContractError
from .graph import InteractionGraph, save_graph, split_edges, write_edge_list


@dataclass
class FixtureSpec:
    num_drugs: int = 50
    num_types: int = 8
    num_edges: int = 2000
    ratio: float = 0.5
    num_clusters: int = 6
    affinity: float = 1000.0
    seed: int = 0
    split: tuple = (0.6, 0.2, 0.2)

    def validate(self):
        if self.num_types < 2:
            raise ContractError("fixture needs at least 2 types")
        if self.num_drugs < 4:
            raise ContractError("fixture needs at least 4 drugs")
        if not self.ratio > 0:
            raise ContractError("ratio must be positive")
        if not 1 <= self.num_clusters <= self.num_drugs:
            raise ContractError("num_clusters must be in [1, num_drugs]")
        if self.affinity < 1:
            raise ContractError("affinity must be >= 1")
        counts = geometric_counts(self.num_edges, self.num_types, self.ratio)
        pairs = self.num_drugs * (self.num_drugs - 1) // 2
        if counts.max() > pairs:
            raise ContractError(f"type 0 needs {counts.max()} edges but only {pairs} drug pairs exist")
        if counts.min() < 1:
            raise ContractError("num_edges too small: some type would get no edges")


def geometric_counts(total: int, num_types: int, ratio: float) -> np.ndarray:
    """Largest-remainder allocation of ``total`` proportional to ratio**t."""
    w = ratio ** np.arange(num_types, dtype=np.float64)
    exact = total * w / w.sum()
    counts = np.floor(exact).astype(np.int64)
    short = total - counts.sum()
    order = np.lexsort((np.arange(num_types), -(exact - counts)))
    counts[order[:short]] += 1
    return counts


@dataclass
class Fixture:
    graph: InteractionGraph
    clusters: np.ndarray
    type_blocks: List[tuple]
    spec: FixtureSpec


def make_fixture(spec: FixtureSpec) -> Fixture:
    """Drugs fall into latent clusters; each type prefers one cluster-pair block.

    A pair inside its type's block is ``affinity`` times more likely to carry
    that type than any other pair; pairs are drawn without replacement per type.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, T, C = spec.num_drugs, spec.num_types, spec.num_clusters
    clusters = rng.permutation(np.arange(n) % C)
    blocks = [(a, b) for a in range(C) for b in range(a, C)]
    block_order = rng.permutation(len(blocks))
    type_blocks = [blocks[block_order[t % len(blocks)]] for t in range(T)]
    iu, ju = np.triu_indices(n, k=1)
    ci, cj = np.minimum(clusters[iu], clusters[ju]), np.maximum(clusters[iu], clusters[ju])
    counts = geometric_counts(spec.num_edges, T, spec.ratio)
    triples = []
    for t in range(T):
        a, b = type_blocks[t]
        w = np.where((ci == a) & (cj == b), spec.affinity, 1.0)
        chosen = np.sort(rng.choice(len(iu), size=counts[t], replace=False, p=w / w.sum()))
        triples.extend(zip(iu[chosen].tolist(), ju[chosen].tolist(), [t] * len(chosen)))
    drugs = [f"D{k:04d}" for k in range(n)]
    types = [f"T{t:02d}" for t in range(T)]
    return Fixture(InteractionGraph(drugs, types, triples), clusters, type_blocks, spec)


FIXTURE_CONFIG = """\
# generated by make-fixture
[paths]
train = train.tsv
valid = valid.tsv
test = test.tsv
vocab = vocab.tsv
out_dir = run

[run]
seed = {seed}

[vgae]
latent_dim = 16
hidden_dim = 32
encoder_layers = 2
learning_rate = 0.01
epochs = 600
kl_weight = 1.0
optimizer = adam

[gflownet]
knn_k = 20
epochs = 1500
batch = 128
learning_rate = 0.003
log_z_learning_rate = 0.1
hidden = 64

[reward]
alpha = 1.0

[augment]
n_synthetic = auto

[metrics]
reference = uniform
coverage_threshold = 1
"""


def write_fixture(spec: FixtureSpec, out_dir) -> List[Path]:
    """Write full/train/valid/test edge lists, vocabulary, clusters and a config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fx = make_fixture(spec)
    split = split_edges(fx.graph, spec.split, seed=spec.seed)
    paths = [out / "full.tsv", out / "vocab.tsv"]
    save_graph(fx.graph, *paths)
    for name in ("train", "valid", "test"):
        p = out / f"{name}.tsv"
        write_edge_list(getattr(split, name), p)
        paths.append(p)
    p = out / "clusters.tsv"
    p.write_text("drug\tcluster\n" + "".join(f"{d}\t{c}\n" for d, c in zip(fx.graph.drugs, fx.clusters.tolist())))
    paths.append(p)
    meta = asdict(spec)
    meta["split"] = list(spec.split)
    meta["type_counts"] = fx.graph.type_counts.tolist()
    meta["type_blocks"] = [list(b) for b in fx.type_blocks]
    p = out / "fixture.json"
    p.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    paths.append(p)
    p = out / "config.ini"
    p.write_text(FIXTURE_CONFIG.format(seed=spec.seed))
    paths.append(p)
    return paths
