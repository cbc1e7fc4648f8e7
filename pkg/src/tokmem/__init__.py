"""Token-constrained contrastive learning with instance/prototype memory
banks, DBSCAN pseudo-labels, and retrieval evaluation on synthetic
identity data."""

from .cluster import PseudoLabels, dbscan, pairwise_cosine_dist
from .config import EvalConfig, RunConfig, RunPaths, load_run_config
from .encoder import (EncodeOutput, EncoderGrads, EncoderParams, encode,
                      encode_backward, init_params, load_checkpoint,
                      save_checkpoint)
from .errors import ConfigError, DataFormatError, NumericError
from .evaluate import (RankingResult, average_precision, cmc_curve,
                       evaluate_retrieval, rank_gallery)
from .linalg import (DegenerateNormWarning, dot, finite_diff_grad,
                     l2_normalize, relative_error)
from .losses import (LossOutput, anchor_loss, constraint_loss, patch_rate,
                     prototype_loss, select_constraint_tokens, total_loss)
from .memory import (InstanceMemory, PrototypeMemory, build_instance_memory,
                     compute_prototypes, hardest_positive,
                     momentum_update_instance, momentum_update_prototype,
                     top_k_negatives)
from .synth import (SynthDataset, SynthSpec, generate, load_dataset,
                    save_dataset, split_query_gallery)
from .training import TrainConfig, TrainResult, encode_dataset, sample_batches, train

__version__ = "0.1.0"
