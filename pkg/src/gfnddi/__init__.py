"""GFlowNet + VGAE augmentation for imbalanced typed interaction graphs."""
from .graph import DatasetSplit, Edge, InteractionGraph, ingest_edge_list, split_edges, type_frequencies
from .vgae import LatentState, VgaeConfig, VgaeModel, train_vgae
from .gflownet import GfnConfig, GfnPolicy, build_candidate_index, train_gflownet
from .reward import RewardConfig, reward
from .augment import SyntheticSet, generate_synthetic, merge

__version__ = "0.1.0"
