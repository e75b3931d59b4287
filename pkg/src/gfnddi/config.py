"""INI-style pipeline configuration.

Hyperparameters the method names explicitly (latent size, candidate count,
rareness exponent, number of synthetic samples) must be written out; the
rest fall back to defaults.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ValidationError
from .gflownet import GfnConfig
from .reward import RewardConfig
from .vgae import VgaeConfig

REQUIRED = {"vgae": ("latent_dim",), "gflownet": ("knn_k",), "reward": ("alpha",),
            "augment": ("n_synthetic",), "paths": ("train", "valid", "test")}


@dataclass
class Paths:
    train: Path
    valid: Path
    test: Path
    vocab: Optional[Path]
    out_dir: Path


@dataclass
class PipelineConfig:
    paths: Paths
    seed: int
    vgae: VgaeConfig
    vgae_final: VgaeConfig
    gfn: GfnConfig
    reward: RewardConfig
    n_synthetic: Optional[int]  # None: |train| // 10
    reference: str = "uniform"
    coverage_threshold: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed, vgae=replace(self.vgae, seed=seed),
                       vgae_final=replace(self.vgae_final, seed=seed), gfn=replace(self.gfn, seed=seed))

    def with_out_dir(self, out_dir) -> "PipelineConfig":
        return replace(self, paths=replace(self.paths, out_dir=Path(out_dir)))

    def synthetic_count(self, num_train_edges: int) -> int:
        return num_train_edges // 10 if self.n_synthetic is None else self.n_synthetic

    def fingerprint(self) -> str:
        """Hash of every setting that influences results (output dir excluded)."""
        doc = {"seed": self.seed, "vgae": asdict(self.vgae), "vgae_final": asdict(self.vgae_final),
               "gfn": asdict(self.gfn), "reward": asdict(self.reward), "n_synthetic": self.n_synthetic,
               "reference": self.reference, "coverage_threshold": self.coverage_threshold}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _typed(section, cls, overrides=None):
    kwargs = {}
    for name, f in cls.__dataclass_fields__.items():
        if name not in section:
            continue
        raw = section[name].strip()
        default = f.default
        if isinstance(default, bool):
            kwargs[name] = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int) or (default is None and name == "batch_size"):
            kwargs[name] = None if raw.lower() == "none" else int(raw)
        elif isinstance(default, float):
            kwargs[name] = float(raw)
        else:
            kwargs[name] = raw
    kwargs.update(overrides or {})
    return cls(**kwargs)


def load_config(path, seed: Optional[int] = None, out_dir=None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read(path, encoding="utf-8")
    for sec, keys in REQUIRED.items():
        for key in keys:
            if not cp.has_option(sec, key):
                raise ValidationError(f"{path}: missing required key [{sec}] {key}")
    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    paths = cp["paths"]
    pp = Paths(resolve(paths["train"]), resolve(paths["valid"]), resolve(paths["test"]),
               resolve(paths["vocab"]) if "vocab" in paths else None,
               Path(out_dir) if out_dir is not None else resolve(paths.get("out_dir", "run")))
    run_seed = seed if seed is not None else cp.getint("run", "seed", fallback=0)
    try:
        vgae_cfg = _typed(cp["vgae"], VgaeConfig, {"seed": run_seed})
        final_sec = dict(cp["vgae"])
        if cp.has_section("vgae_final"):
            final_sec.update(cp["vgae_final"])
        vgae_final = _typed(final_sec, VgaeConfig, {"seed": run_seed})
        reward = _typed(cp["reward"], RewardConfig)
        gfn = _typed(cp["gflownet"], GfnConfig, {"seed": run_seed, "alpha": reward.alpha})
        raw_n = cp["augment"]["n_synthetic"].strip().lower()
        n_synth = None if raw_n == "auto" else int(raw_n)
        metrics = cp["metrics"] if cp.has_section("metrics") else {}
        reference = metrics.get("reference", "uniform").strip()
        cov = int(metrics.get("coverage_threshold", 1))
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if reference not in ("uniform", "train", "heldout"):
        reference = str(resolve(reference))
    return PipelineConfig(pp, run_seed, vgae_cfg, vgae_final, gfn, reward, n_synth, reference, cov,
                          raw={s: dict(cp[s]) for s in cp.sections()})
