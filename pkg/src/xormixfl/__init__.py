"""XOR-encoded mixup for one-shot federated learning on MNIST."""

from .baselines import fedavg_aggregate, run_mixfl, run_standalone, run_vanilla_fl
from .blending import BlendParams, blend_chain
from .classifier import EvalReport, ModelParams, SoftmaxMLP, TrainConfig, evaluate, gradient_check, train
from .config import ExperimentConfig, RunReport
from .dataset import Dataset, PartitionSpec, inventory, load_idx, load_mnist, partition
from .errors import ConfigError, XorMixFLError
from .experiment import run_config, run_sweep
from .privacy import ClassicalMDS, PrivacySummary, classical_mds, score_augmented, summarize
from .protocol import plan_quotas, run_exchange, run_one_shot
from .xorcodec import decode, encode, mix_encode, quantize

__version__ = "0.1.0"

__all__ = [
    "BlendParams", "ClassicalMDS", "ConfigError", "Dataset", "EvalReport", "ExperimentConfig", "ModelParams",
    "PartitionSpec", "PrivacySummary", "RunReport", "SoftmaxMLP", "TrainConfig", "XorMixFLError",
    "blend_chain", "classical_mds", "decode", "encode", "evaluate", "fedavg_aggregate", "gradient_check",
    "inventory", "load_idx", "load_mnist", "mix_encode", "partition", "plan_quotas", "quantize",
    "run_config", "run_exchange", "run_mixfl", "run_one_shot", "run_standalone", "run_sweep",
    "run_vanilla_fl", "score_augmented", "summarize", "train",
]
