"""
Settings for the dynreg project.

Every hyperparameter default of the pipeline lives here as a module-level
constant. Run configs (harness_cli.serializer.RunConfigSerializer) start from
these values and may override them per run.

Only three environment variables are honoured:
DYNREG_OUTPUT_DIR, DYNREG_NUM_THREADS and DYNREG_LOG_LEVEL.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Not used for anything security related: the project serves no requests.
SECRET_KEY = "dynreg-offline-pipeline"

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "math_pose",
    "humanoid_model",
    "physics_sim",
    "nn_rl_core",
    "uhc",
    "kin_policy",
    "metrics_eval",
    "harness_cli",
]

# No database: every artifact is a file (JSON, JSON-lines or .npz).
DATABASES = {}

TIME_ZONE = "UTC"

USE_TZ = True


# Logging

LOG_LEVEL = os.environ.get("DYNREG_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "concise": {
            "format": "{asctime} {levelname:<7} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "concise",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "WARNING",
    },
    "loggers": {
        app: {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False}
        for app in INSTALLED_APPS[1:]
    },
}


# Artifacts

FORMAT_VERSION = "1.0"

FIXTURES_DIR = BASE_DIR / "humanoid_model" / "fixtures"
RUN_CONFIGS_DIR = BASE_DIR / "harness_cli" / "fixtures"

OUTPUT_DIR = Path(os.environ.get("DYNREG_OUTPUT_DIR", BASE_DIR.parent / "runs"))
NUM_THREADS = max(1, int(os.environ.get("DYNREG_NUM_THREADS", "1")))

SEED = 0


# Simulation

MOTION_FPS = 30
SIM_SUBSTEPS = 15
SIM_DT = 1.0 / 450.0
GRAVITY = (0.0, 0.0, -9.81)

PD_MODE = "stable"  # "stable" or "explicit"

CONTACT_STIFFNESS = 5.0e4  # N/m
CONTACT_DAMPING = 500.0  # N s/m
FRICTION_MU = 0.9
FRICTION_VISCOSITY = 2000.0  # N s/m, slope of the regularized Coulomb law

# Residual root wrench: action units are scaled to N / N m, then clamped.
RESIDUAL_FORCE_SCALE = 100.0
RESIDUAL_TORQUE_SCALE = 20.0
RESIDUAL_FORCE_CEILING = 300.0
RESIDUAL_TORQUE_CEILING = 60.0

DIVERGENCE_LIMIT = 1.0e4


# Universal Humanoid Controller (hyperparameter table)

UHC_GAMMA = 0.95
UHC_GAE_LAMBDA = 0.95
UHC_BATCH_SIZE = 50000
UHC_VALUE_LR = 3e-4
UHC_POLICY_LR = 5e-5
UHC_CLIP_EPS = 0.2
UHC_COV_STD = 0.1
UHC_TEMPERATURE = 2.0
UHC_EPISODE_LEN = 300
UHC_PPO_EPOCHS = 10
UHC_MINIBATCH_SIZE = 2048
UHC_ITERATIONS = 1000
UHC_NUM_PRIMITIVES = 8
UHC_PRIMITIVE_HIDDEN = (512, 256)
UHC_COMPOSER_HIDDEN = (300, 200)
UHC_VALUE_HIDDEN = (512, 256)

UHC_REWARD_WEIGHTS = {"jr": 0.3, "jp": 0.55, "jv": 0.1, "res": 0.05}
UHC_REWARD_EXPONENTS = {"jr": 2.0, "jp": 5.0, "jv": 0.005, "res": 1.0}

# Mean joint position error (m) that ends a training episode and triggers the
# evaluation fail-safe.
TERMINATION_THRESHOLD = 0.5


# Kinematic policy (hyperparameter table)

KIN_GAMMA = 0.95
KIN_GAE_LAMBDA = 0.95
KIN_BATCH_SIZE = 10000
KIN_VALUE_LR = 3e-4
KIN_POLICY_LR = 5e-4
KIN_CLIP_EPS = 0.2
KIN_COV_STD = 0.04
KIN_RL_EPOCHS = 10
KIN_SL_EPOCHS = 10
KIN_SL_LR = 1e-4
KIN_SL_MEMORY = 10000
KIN_WARM_START = True
KIN_WARM_START_EPOCHS = 20
KIN_ITERATIONS = 100
KIN_EPISODE_LEN = 300

KIN_GRU_HIDDEN = 1024
KIN_MLP_HIDDEN = (1024, 512, 256)
KIN_INIT_GRU_HIDDEN = 256
KIN_INIT_MLP_HIDDEN = (256, 128)
KIN_VALUE_HIDDEN = (512, 256)

KIN_REWARD_WEIGHTS = {
    "hp": 0.15,
    "hq": 0.15,
    "gt_jv": 0.1,
    "gt_jr": 0.2,
    "dyna_jr": 0.2,
    "dyna_jp": 0.2,
}
KIN_REWARD_EXPONENTS = {
    "hp": 45.0,
    "hq": 45.0,
    "gt_jv": 0.005,
    "gt_jr": 50.0,
    "dyna_jr": 50.0,
    "dyna_jp": 50.0,
}


# Scene context channels

PHI_DIM = 64
PHI_NOISE_STD = 0.05
CAMERA_NOISE_STD = 0.005
CONTEXT_NOISE_STD = 0.0

# Head-mounted camera relative to the head body frame: translation (m), wxyz.
CAMERA_MOUNT_OFFSET = (0.10, 0.0, 0.05)
CAMERA_MOUNT_ROTATION = (1.0, 0.0, 0.0, 0.0)


# Metrics

FOOT_HEIGHT_THRESHOLD = 0.033  # m
FAILSAFE_THRESHOLD = TERMINATION_THRESHOLD
PUSH_MIN_DISPLACEMENT = 0.10  # m
STEP_MIN_RAISE = 0.10  # m
AVOID_MAX_END_DISTANCE = 0.50  # m
ACTION_LABELS = ("sit", "push", "step", "avoid", "walk")
