"""
Constants and configuration values for EventKernel.
"""

import os as _os

# Application metadata
__version__ = "0.4.0"

# Model defaults
DEFAULT_EMBEDDING_DIM = 4
DEFAULT_HIDDEN = (16, 16)
DEFAULT_SMOOTHNESS = 0.1
CLIP_LOWER = 0.0
CLIP_UPPER = 1.0
DEFAULT_SOFTPLUS_BETA = 10.0
LINK_SOFTPLUS = "softplus"
LINK_ELU_PLUS_ONE = "elu-plus-one"
LINKS = (LINK_SOFTPLUS, LINK_ELU_PLUS_ONE)

# Parameter initialization
DELAY_RAW_INIT = -2.0  # softplus(-2.0) ~ 0.127
INIT_HALF_WIDTH = 0.5
PHI_OUTPUT_BIAS_INIT = -0.5

# Likelihood
DEFAULT_SEGMENTS = 4
ESTIMATOR_STRATIFIED = "stratified"
ESTIMATOR_GMCE = "global-gmce"
ESTIMATORS = (ESTIMATOR_STRATIFIED, ESTIMATOR_GMCE)
INTENSITY_FLOOR = 1e-12
# gradient engines: numpy pair kernels feeding the tape, or the scalar tape alone
ENGINE_VECTORIZED = "vectorized"
ENGINE_TAPE = "tape"
ENGINES = (ENGINE_VECTORIZED, ENGINE_TAPE)

# Optimizer (AdamW)
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON = 1e-8
DEFAULT_WEIGHT_DECAY = 1e-2
SYNTHETIC_BATCH_SIZE = 128
REAL_STYLE_BATCH_SIZE = 16

# Training loop
DEFAULT_EPOCHS = 100
DEFAULT_PATIENCE = 15

# Prediction
DEFAULT_TRUNCATION_MULTIPLIER = 10.0
DEFAULT_GRID_POINTS = 256
TYPE_AT_PREDICTED = "predicted"
TYPE_AT_TRUE = "true"
KERNEL_GRID_POINTS = 200
KERNEL_GRID_SPAN = 3.0  # x mean inter-event time

# Generators
GENERATOR_PP1 = "pp1"
GENERATOR_PP2 = "pp2"
GENERATOR_SUPPLY_CHAIN = "supply-chain"
GENERATOR_HOMOGENEOUS = "homogeneous"
GENERATORS = (GENERATOR_PP1, GENERATOR_PP2, GENERATOR_SUPPLY_CHAIN, GENERATOR_HOMOGENEOUS)

# Supply-chain event marks
MARK_CUSTOMER_ORDER = 0
MARK_REPLENISHMENT_ORDER = 1
MARK_STOCK_ARRIVAL = 2
MARK_STOCKOUT = 3

# Dataset files written by `simulate`
TRAIN_FILE = "train.jsonl"
VAL_FILE = "val.jsonl"
MANIFEST_FILE = "manifest.json"

# Logs directory - resolve to project root (same directory as app.py)
LOG_DIR = _os.path.join(_os.path.dirname(_os.path.dirname(_os.path.abspath(__file__))), 'logs')

