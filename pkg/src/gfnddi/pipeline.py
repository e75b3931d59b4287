"""Three-stage pipeline: pre-train VGAE, train GFlowNet, augment and re-train.

Output layout under ``out_dir``::

    stage1/vgae.{bin,json} latent.{bin,json} embeddings.tsv loss_curve.csv
    stage2/policy.{bin,json} candidates.tsv tb_curve.csv
    stage3/synthetic.tsv augmented.tsv vgae.{bin,json} latent.{bin,json}
           embeddings.tsv loss_curve.csv
    reports/metrics_{baseline,augmented}.{json,csv} per_type_{baseline,augmented}.csv
            diversity.json summary.txt
    manifest.json
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import numerics as nx
from .augment import generate_synthetic, merge, read_synthetic, write_augmented, write_synthetic
from .config import PipelineConfig
from .errors import MissingPrerequisite
from .gflownet import (GfnPolicy, build_candidate_index, load_policy, save_policy,
                       train_gflownet)
from .graph import InteractionGraph, ingest_edge_list, read_vocabulary
from .metrics import (MetricReport, build_report, classification_metrics, diversity_report,
                      sample_non_edges)
from .vgae import LatentState, TrainResult, VgaeConfig, VgaeModel, predict_pairs, train_vgae

log = logging.getLogger(__name__)

STAGE1, STAGE2, STAGE3, REPORTS = "stage1", "stage2", "stage3", "reports"


# ---------------------------------------------------------------------------
# data loading
# ---------------------------------------------------------------------------

def load_splits(cfg: PipelineConfig):
    p = cfg.paths
    for path in (p.train, p.valid, p.test) + ((p.vocab,) if p.vocab else ()):
        if not Path(path).is_file():
            raise FileNotFoundError(f"input file not found: {path}")
    if p.vocab is not None:
        vocab = read_vocabulary(p.vocab)
    else:
        # shared vocabulary in first-seen order over train, valid, test
        drugs, types = {}, {}
        for path in (p.train, p.valid, p.test):
            g = ingest_edge_list(path)
            for d in g.drugs:
                drugs.setdefault(d, len(drugs))
            for t in g.types:
                types.setdefault(t, len(types))
        vocab = (list(drugs), list(types))
    return tuple(ingest_edge_list(path, vocabulary=vocab) for path in (p.train, p.valid, p.test))


# ---------------------------------------------------------------------------
# artifact io
# ---------------------------------------------------------------------------

def _rel(out: Path, path: Path) -> str:
    return Path(path).relative_to(out).as_posix()


def _write_curve(path: Path, header: str, values) -> Path:
    path.write_text(f"epoch,{header}\n" + "".join(f"{k},{v!r}\n" for k, v in enumerate(values, start=1)))
    return path


def _write_embeddings(path: Path, g: InteractionGraph, z: np.ndarray) -> Path:
    lines = ["drug\t" + "\t".join(f"z{k}" for k in range(z.shape[1]))]
    lines += [d + "\t" + "\t".join(repr(float(v)) for v in row) for d, row in zip(g.drugs, z)]
    path.write_text("\n".join(lines) + "\n")
    return path


def save_vgae(stage_dir: Path, result: TrainResult, g: InteractionGraph) -> List[Path]:
    stage_dir.mkdir(parents=True, exist_ok=True)
    meta = {"num_drugs": g.num_drugs, "num_types": g.num_types, "config": asdict(result.model.cfg)}
    paths = nx.save_arrays(stage_dir / "vgae", result.model.state_dict(), meta)
    lat = result.latent
    paths += nx.save_arrays(stage_dir / "latent", {"mu": lat.mu, "log_var": lat.log_var, "z": lat.z})
    paths.append(_write_embeddings(stage_dir / "embeddings.tsv", g, lat.z))
    paths.append(_write_curve(stage_dir / "loss_curve.csv", "neg_elbo", result.losses))
    return paths


def load_vgae(stage_dir: Path, stage_label: str) -> TrainResult:
    for name in ("vgae.bin", "vgae.json", "latent.bin", "latent.json"):
        if not (stage_dir / name).is_file():
            raise MissingPrerequisite(f"{stage_label} artifact missing: {stage_dir / name}")
    arrays, meta = nx.load_arrays(stage_dir / "vgae")
    cfg = VgaeConfig(**meta["config"])
    model = VgaeModel(meta["num_drugs"], meta["num_types"], cfg)
    model.load_state_dict(arrays)
    lat, _ = nx.load_arrays(stage_dir / "latent")
    return TrainResult(model, LatentState(lat["mu"], lat["log_var"], lat["z"]))


def _update_manifest(cfg: PipelineConfig, stage: str, artifacts: List[Path], seconds: float) -> Path:
    out = cfg.paths.out_dir
    path = out / "manifest.json"
    doc = json.loads(path.read_text()) if path.is_file() else {}
    if doc.get("config_hash") != cfg.fingerprint():
        doc = {}
    doc["config_hash"] = cfg.fingerprint()
    doc["seed"] = cfg.seed
    doc.setdefault("stages", {})[stage] = sorted(_rel(out, p) for p in artifacts)
    doc.setdefault("timings_seconds", {})[stage] = round(seconds, 3)
    doc["stages"] = dict(sorted(doc["stages"].items()))
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def cmd_pretrain(cfg: PipelineConfig) -> List[Path]:
    t0 = time.perf_counter()
    train, _, _ = load_splits(cfg)
    result = train_vgae(train, cfg.vgae)
    paths = save_vgae(cfg.paths.out_dir / STAGE1, result, train)
    _update_manifest(cfg, STAGE1, paths, time.perf_counter() - t0)
    log.info("stage 1: final loss %.4f", result.losses[-1] if result.losses else float("nan"))
    return paths


def cmd_train_gfn(cfg: PipelineConfig) -> List[Path]:
    t0 = time.perf_counter()
    train, _, _ = load_splits(cfg)
    pre = load_vgae(cfg.paths.out_dir / STAGE1, "stage 1")
    res = train_gflownet(train, pre, cfg.gfn, cfg.reward)
    stage_dir = cfg.paths.out_dir / STAGE2
    stage_dir.mkdir(parents=True, exist_ok=True)
    paths = save_policy(res.policy, stage_dir / "policy", {"knn_k": cfg.gfn.knn_k})
    cand = stage_dir / "candidates.tsv"
    cand.write_text("drug\tcandidates\n" + "".join(
        f"{train.drugs[i]}\t{','.join(train.drugs[j] for j in row)}\n"
        for i, row in enumerate(res.candidates.neighbors.tolist())))
    paths.append(cand)
    curve = np.stack([res.losses, res.log_z_trace], axis=1) if res.losses else np.zeros((0, 2))
    p = stage_dir / "tb_curve.csv"
    p.write_text("epoch,tb_loss,log_z\n" + "".join(f"{k},{a!r},{b!r}\n" for k, (a, b) in enumerate(curve.tolist(), 1)))
    paths.append(p)
    _update_manifest(cfg, STAGE2, paths, time.perf_counter() - t0)
    log.info("stage 2: log Z %.4f", res.policy.log_z)
    return paths


def _load_policy(cfg: PipelineConfig) -> GfnPolicy:
    stage_dir = cfg.paths.out_dir / STAGE2
    for name in ("policy.bin", "policy.json"):
        if not (stage_dir / name).is_file():
            raise MissingPrerequisite(f"stage 2 artifact missing: {stage_dir / name}")
    return load_policy(stage_dir / "policy", cfg.gfn.hidden, cfg.gfn.type_embed_dim)


def reference_counts(cfg: PipelineConfig, train, valid, test) -> np.ndarray:
    if cfg.reference == "uniform":
        return np.ones(train.num_types)
    if cfg.reference == "train":
        return train.type_counts.astype(np.float64)
    if cfg.reference == "heldout":
        return (valid.type_counts + test.type_counts).astype(np.float64)
    counts = {}
    for line in Path(cfg.reference).read_text().splitlines()[1:]:
        label, value = line.split("\t")
        counts[label] = float(value)
    return np.array([counts.get(t, 0.0) for t in train.types])


def evaluate_model(model: VgaeModel, latent: LatentState, test: InteractionGraph,
                   negatives: np.ndarray, train_counts, ref_counts, coverage_threshold: int) -> MetricReport:
    probs = predict_pairs(model, latent, test.heads, test.tails)
    neg = predict_pairs(model, latent, negatives[:, 0], negatives[:, 1])
    cm = classification_metrics(probs, test.edge_types, neg)
    return build_report(cm, test.types, train_counts, ref_counts, coverage_threshold)


def negative_pairs(cfg: PipelineConfig, train, valid, test) -> np.ndarray:
    known = train.pair_set() | valid.pair_set() | test.pair_set()
    return sample_non_edges(known, train.num_drugs, max(test.num_edges, 1), nx.make_rng(cfg.seed, 30))


def _write_report(reports: Path, tag: str, report: MetricReport) -> List[Path]:
    paths = [reports / f"metrics_{tag}.json", reports / f"metrics_{tag}.csv", reports / f"per_type_{tag}.csv"]
    paths[0].write_text(report.to_json())
    paths[1].write_text(report.csv_row())
    paths[2].write_text(report.per_type_csv())
    return paths


def cmd_augment_retrain(cfg: PipelineConfig) -> List[Path]:
    t0 = time.perf_counter()
    train, valid, test = load_splits(cfg)
    pre = load_vgae(cfg.paths.out_dir / STAGE1, "stage 1")
    policy = _load_policy(cfg)
    candidates = build_candidate_index(pre.latent, cfg.gfn.knn_k)
    n = cfg.synthetic_count(train.num_edges)
    synth = generate_synthetic(policy, candidates, pre.latent, train, n, nx.make_rng(cfg.seed, 20),
                               policy_id=cfg.fingerprint()[:12])
    aug = merge(train, synth)
    stage_dir = cfg.paths.out_dir / STAGE3
    stage_dir.mkdir(parents=True, exist_ok=True)
    paths = [stage_dir / "synthetic.tsv", stage_dir / "augmented.tsv"]
    write_synthetic(synth, paths[0])
    write_augmented(train, synth, paths[1])
    # the final model's embeddings are encoded over the augmented graph
    final = train_vgae(aug, cfg.vgae_final)
    paths += save_vgae(stage_dir, final, aug)

    reports = cfg.paths.out_dir / REPORTS
    reports.mkdir(parents=True, exist_ok=True)
    ref = reference_counts(cfg, train, valid, test)
    negs = negative_pairs(cfg, train, valid, test)
    base_report = evaluate_model(pre.model, pre.latent, test, negs, train.type_counts, ref, cfg.coverage_threshold)
    aug_report = evaluate_model(final.model, final.latent, test, negs, aug.type_counts, ref, cfg.coverage_threshold)
    paths += _write_report(reports, "baseline", base_report)
    paths += _write_report(reports, "augmented", aug_report)
    div = diversity_report(train.type_counts, aug.type_counts, ref, cfg.coverage_threshold)
    doc = asdict(div)
    doc.update(n_requested=synth.requested, n_kept=synth.kept, n_sampled=synth.sampled,
               synthetic_type_counts=synth.type_counts.tolist(), train_type_counts=train.type_counts.tolist(),
               reference=cfg.reference)
    p = reports / "diversity.json"
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    paths.append(p)
    p = reports / "summary.txt"
    p.write_text(format_summary(base_report, aug_report, div))
    paths.append(p)
    _update_manifest(cfg, STAGE3, paths, time.perf_counter() - t0)
    return paths


def format_summary(base: MetricReport, aug: MetricReport, div) -> str:
    cols = ("auroc", "accuracy", "auprc", "f1_macro", "f1_micro", "shannon_entropy", "jsd", "coverage")
    lines = ["setup      " + " ".join(f"{c:>15}" for c in cols)]
    for name, r in (("without", base), ("with_gfn", aug)):
        lines.append(f"{name:<10} " + " ".join(f"{getattr(r, c):15.5f}" for c in cols))
    lines.append(f"SE {div.se_before:.4f} -> {div.se_after:.4f}; JSD {div.jsd_before:.4f} -> "
                 f"{div.jsd_after:.4f}; coverage {div.coverage_before:.4f} -> {div.coverage_after:.4f}")
    lines.append("protocol: " + base.protocol)
    return "\n".join(lines) + "\n"


def cmd_run_all(cfg: PipelineConfig) -> Dict:
    cmd_pretrain(cfg)
    cmd_train_gfn(cfg)
    cmd_augment_retrain(cfg)
    return json.loads((cfg.paths.out_dir / "manifest.json").read_text())


def cmd_evaluate(cfg: PipelineConfig, which: str = "stage1") -> MetricReport:
    """Score a saved model (``stage1`` or ``stage3``) on the test split."""
    train, valid, test = load_splits(cfg)
    res = load_vgae(cfg.paths.out_dir / which, which)
    counts = train.type_counts
    if which == STAGE3:
        synth_path = cfg.paths.out_dir / STAGE3 / "synthetic.tsv"
        if not synth_path.is_file():
            raise MissingPrerequisite(f"stage 3 artifact missing: {synth_path}")
        counts = merge(train, read_synthetic(synth_path, train)).type_counts
    return evaluate_model(res.model, res.latent, test, negative_pairs(cfg, train, valid, test), counts,
                          reference_counts(cfg, train, valid, test), cfg.coverage_threshold)
