"""Contrastive graph embeddings trained across federated clients."""
from .augment import DiffusionMatrix, normalize_adjacency, ppr_diffusion
from .evaluation import clustering_accuracy, evaluate_embeddings, export_embeddings, kmeans, macro_f1
from .federated import FLConfig, RoundMetrics, run, run_federated, run_intra_central, run_vanilla_ensemble
from .losses import LossValue, fedprox_term, inter_loss_graph, inter_loss_node, intra_loss, kd_kl, kd_mse
from .graphs import Graph, GraphBatch, GraphSet, load_tu_dataset, make_batches
from .nn import EncoderParams, encode, encode_with_grad, init_params
from .partition import Partition, calibrate_dominant_fraction, partition_iid, partition_noniid

__version__ = "0.1.0"
