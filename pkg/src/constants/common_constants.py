"""
Shared constants and defaults.

Values are grouped by concern; modules import the group they need instead of
repeating literals.
"""

import math

import torch


class NumericDefaults:
    """Numeric carrier settings."""

    DTYPE = torch.float64
    RMS_EPS = 1e-6
    SOFTPLUS_THRESHOLD = 30.0
    GRAD_CHECK_EPS = 1e-5


class SsmModes:
    """State-space parameterisations."""

    DIAG = "diag"
    SCALAR = "scalar"
    DEFAULT = SCALAR
    ALL = (DIAG, SCALAR)


class Discretization:
    """Discretisation rules for the input matrix (A is always zero-order hold)."""

    ZOH = "zoh"
    EULER = "euler"
    DEFAULT = EULER
    ALL = (ZOH, EULER)


class SsmDefaults:
    """Selective scan defaults."""

    STATE_DIM = 16
    N_HEADS = 1
    INITIAL_DELTA = 0.01


class StripeEncoderDefaults:
    """Vertical dilated position encoder defaults."""

    KERNEL_SIZE = 3
    DILATION = 2
    RESIDUAL = True


class InstancePooling:
    """Bag-level pooling of the instance learner's token logits."""

    MEAN = "mean"
    MAX = "max"
    DEFAULT = MEAN
    ALL = (MEAN, MAX)


class TokenSelectionDefaults:
    """Entropy-ranked token masking defaults."""

    RATIO = 0.3
    LOCAL_CHANNELS = 0
    # ceil(r * N) is taken on r * N rounded to this many decimals
    COUNT_ROUNDING_DIGITS = 9


class BaselineKinds:
    """Pooling comparators."""

    MEAN = "mean"
    MAX = "max"
    GATED_ATTENTION = "gated_attention"
    ALL = (MEAN, MAX, GATED_ATTENTION)


class LrSchedules:
    CONSTANT = "constant"
    COSINE = "cosine"
    ALL = (CONSTANT, COSINE)


class ModelDefaults:
    """Desk-scale model defaults."""

    IN_FEATURES = 32
    D_MODEL = 64
    N_BLOCKS = 2
    K_CLASSES = 2
    ATTENTION_DIM = 32
    AUX_WEIGHT = 1.0


class OptimizerDefaults:
    """Adam settings shared by every training run."""

    LEARNING_RATE = 1e-3
    FULL_SCALE_LEARNING_RATE = 2e-5
    WEIGHT_DECAY = 1e-5
    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8
    EPOCHS = 30
    VALIDATION_FRACTION = 0.2


class BagSpecDefaults:
    """Synthetic bag geometry defaults."""

    HEIGHT = 16
    WIDTH = 16
    FEATURE_DIM = 32
    TISSUE_FRACTION = 0.6
    CLUSTER_RADIUS = 2.0
    SIGNAL_STRENGTH = 1.5
    NOISE_SCALE = 0.5
    K_CLASSES = 2
    TEST_FRACTION = 1.0 / 3.0
    # Class directions are fixed across datasets so that bags from different seeds share them
    DIRECTION_SEED = 20240601


class FileFormats:
    """Binary and text interchange formats."""

    CHECKPOINT_MAGIC = b"SSMP"
    CHECKPOINT_VERSION = 1
    BAG_MAGIC = b"SSMB"
    BAG_VERSION = 1
    MANIFEST_NAME = "manifest.json"
    BAG_SUFFIX = ".ssmb"
    CONFIG_SUFFIX = ".config"
    HISTORY_SUFFIX = ".history.csv"
    VALIDATION_SUFFIX = ".validation.txt"
    FLOAT_FORMAT = ".17g"


class Splits:
    TRAIN = "train"
    TEST = "test"
    VALIDATION = "validation"
    ALL = (TRAIN, TEST)
    # validation is carved out of train at training time
    EVAL_CHOICES = (TRAIN, VALIDATION, TEST)


class ExitCodes:
    OK = 0
    CONTRACT_VIOLATION = 1
    IO_ERROR = 2


class EnvVars:
    LOG_LEVEL = "SSM_MIL_LOG_LEVEL"
    JOBS = "SSM_MIL_JOBS"
    TORCH_THREADS = "SSM_MIL_TORCH_THREADS"
    RUN_BENCHMARK = "SSM_MIL_RUN_BENCHMARK"


class LoggingDefaults:
    LEVEL = "INFO"
    FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


NO_SELECTION_THRESHOLD = math.inf
