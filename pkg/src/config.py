"""
Configuration module for the PMU event classification system.

Contains all configuration constants and settings.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Project root
PROJECT_ROOT = Path(__file__).parent.parent

# Output directory
OUTPUT_DIR = Path(os.getenv("PMU_EVENTS_OUTPUT_DIR", PROJECT_ROOT / "outputs"))

# Runtime
LOG_LEVEL = os.getenv("PMU_EVENTS_LOG_LEVEL", "INFO")
MASTER_SEED = int(os.getenv("PMU_EVENTS_MASTER_SEED", "2018"))
DEFAULT_JOBS = int(os.getenv("PMU_EVENTS_JOBS", "1"))

# File formats
DATASET_SCHEMA_VERSION = 1
MODEL_SCHEMA_VERSION = 1

# PMU reporting rates (samples per second)
SUPPORTED_SPS = (60, 120)
DEFAULT_SPS = 60

# Thevenin-equivalent feeder (per unit)
THEVENIN_SOURCE = 1.02
THEVENIN_IMPEDANCE = 0.05
THEVENIN_IMPEDANCE_ANGLE = 70.0
BASE_LOAD_CURRENT = 0.8

# Capacitor bank switching
CAP_STEP_V = 0.015
CAP_TRANSITION_S = 1.0 / 60.0

# Regulator on-load tap changer
TAP_STEP_V = 0.00625
OLTC_TRANSITION_RANGE_S = (0.030, 0.200)
OLTC_DWELL_RANGE_S = (0.100, 0.500)

# Loads
NUM_LOADS = 15
LOAD_PF_ANGLE_RANGE = (15.0, 35.0)
LOAD_NOMINAL_LOADING_RANGE = (0.50, 0.95)

# Scenario grid
LOADING_LEVELS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
LOAD_STEP_LEVELS = (-0.25, -0.20, -0.15, -0.10, -0.05, 0.05, 0.10, 0.15, 0.20, 0.25)
EVENT_TIME_RANGE_S = (0.2, 0.6)

# PMU measurement noise (fraction of the measured value)
NOISE_STD_FRACTION = 0.01

# Feature normalization
STD_FLOOR = 1e-9

# PCA
PCA_COMPONENTS = 6
JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 100

# SVM
SVM_C = 10.0
SVM_SIGMA = 1.0
SVM_TOL = 1e-3
SVM_MAX_PASSES = 200
SVM_GRID_C = (1.0, 10.0, 100.0)
SVM_GRID_SIGMA = (0.5, 1.0, 2.0)
SVM_GRID_FOLDS = 3

# Autoencoder + softmax
AE_HIDDEN_SIZE = 50
LEARNING_RATE = 0.1
EPOCHS_AE = 200
EPOCHS_SOFTMAX = 200
EPOCHS_FINE_TUNE = 300
AE_FINE_TUNE = True
BATCH_SIZE = 16
L2_PENALTY = 1e-4
SQUASH_RANGE = (0.1, 0.9)

# Evaluation protocol
SPLIT_FRACTION = 0.5
SWEEP_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(2, 10))

# Method names
METHOD_PCA_SVM = "pca-svm"
METHOD_AE_SOFTMAX = "ae-softmax"
