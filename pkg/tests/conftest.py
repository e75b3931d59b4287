import time
from pathlib import Path

import numpy as np
import pytest

from gfnddi import gflownet as gf
from gfnddi import pipeline, vgae
from gfnddi.config import load_config
from gfnddi.fixtures import FixtureSpec, write_fixture
from gfnddi.graph import InteractionGraph
from gfnddi.reward import RewardConfig, log_reward_batch

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def report(criterion: str, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")


def drug_labels(n):
    return [f"d{i}" for i in range(n)]


@pytest.fixture
def five_drug_graph():
    """5 drugs, 2 types; the gradient-check fixture."""
    return InteractionGraph(drug_labels(5), ["a", "b"],
                            [(0, 1, 0), (1, 2, 1), (2, 3, 0), (3, 4, 1), (0, 4, 0), (1, 3, 0), (0, 2, 1)])


@pytest.fixture
def toy_graph():
    """6 drugs in two triangles; type a inside triangles, type b across."""
    return InteractionGraph(drug_labels(6), ["a", "b"],
                            [(0, 1, 0), (0, 2, 0), (1, 2, 0), (3, 4, 0), (3, 5, 0), (4, 5, 0),
                             (0, 3, 1), (1, 4, 1), (2, 5, 1)])


def tiny_graph():
    """6 drugs, 3 types with counts 7/2/1."""
    return InteractionGraph(drug_labels(6), ["a", "b", "c"],
                            [(0, 1, 0), (0, 2, 0), (1, 2, 0), (3, 4, 0), (3, 5, 0), (4, 5, 1),
                             (0, 3, 1), (1, 4, 2), (2, 5, 0), (0, 4, 0)])


TINY_VGAE = vgae.VgaeConfig(latent_dim=4, hidden_dim=8, epochs=400, kl_weight=0.1,
                            optimizer="adam", learning_rate=0.01, seed=0)
TINY_GFN = gf.GfnConfig(epochs=2000, learning_rate=3e-3, log_z_learning_rate=0.1, knn_k=5,
                        alpha=1.0, batch=64, seed=0)


class TinyInstance:
    """Enumerable GFlowNet problem: 3 types x 6 drugs x 5 candidates = 90 triples."""

    def __init__(self, alpha=1.0, uniform_decoder=False, gfn_cfg=TINY_GFN, log_scale=0.0):
        self.graph = tiny_graph()
        self.vgae = vgae.train_vgae(self.graph, TINY_VGAE)
        if uniform_decoder:
            self.vgae.model.params["relation"].data[:] = 0.0
        self.reward_cfg = RewardConfig(alpha=alpha)
        self.cfg = gfn_cfg
        self.log_scale = log_scale
        self.candidates = gf.build_candidate_index(self.vgae.latent, gfn_cfg.knn_k)

    def log_reward(self, t, i, j):
        return self.log_scale + log_reward_batch(t, i, j, self.graph.type_counts, self.vgae.model,
                                                 self.vgae.latent, self.reward_cfg)

    def fresh_policy(self):
        return gf.GfnPolicy(3, 6, TINY_VGAE.latent_dim, self.cfg.hidden, self.cfg.type_embed_dim,
                            np.random.default_rng([self.cfg.seed, 10]))

    def train(self):
        policy = self.fresh_policy()
        t0 = time.perf_counter()
        self.result = gf.fit_policy(policy, self.candidates, self.vgae.latent, self.log_reward, self.cfg)
        self.seconds = time.perf_counter() - t0
        return self.result

    def target(self):
        r = gf.enumerate_rewards(self.candidates, self.log_reward, 3)
        return r / r.sum(), r.sum()

    def learned(self):
        return gf.enumerate_terminal_distribution(self.result.policy, self.candidates, self.vgae.latent).probs


@pytest.fixture(scope="session")
def tiny_trained():
    inst = TinyInstance()
    inst.train()
    return inst


# ---------------------------------------------------------------------------
# end-to-end fixture runs (shared by acceptance and CLI tests)
# ---------------------------------------------------------------------------

class FixtureRun:
    def __init__(self, root: Path, seed: int):
        self.root = root
        self.seed = seed
        write_fixture(FixtureSpec(seed=seed), root)
        self.config_path = root / "config.ini"
        self.cfg = load_config(self.config_path)
        t0 = time.perf_counter()
        self.manifest = pipeline.cmd_run_all(self.cfg)
        self.seconds = time.perf_counter() - t0
        self.out = self.cfg.paths.out_dir

    def json(self, rel):
        import json
        return json.loads((self.out / rel).read_text())


@pytest.fixture(scope="session")
def fixture_runs(tmp_path_factory):
    return {seed: FixtureRun(tmp_path_factory.mktemp(f"fixture_seed{seed}"), seed) for seed in (0, 1, 2)}


def artifact_tree(out: Path):
    """relative path -> bytes for every output file; manifest timings are dropped."""
    import json
    tree = {}
    for p in sorted(out.rglob("*")):
        if not p.is_file():
            continue
        data = p.read_bytes()
        if p.name == "manifest.json":
            doc = json.loads(data)
            doc.pop("timings_seconds", None)
            data = json.dumps(doc, sort_keys=True).encode()
        tree[p.relative_to(out).as_posix()] = data
    return tree


def tree_differences(a: Path, b: Path):
    ta, tb = artifact_tree(a), artifact_tree(b)
    return sorted(k for k in ta.keys() | tb.keys() if ta.get(k) != tb.get(k))
