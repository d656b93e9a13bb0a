# NOTE: audio front-end values are pinned; changing them changes every FeatureImage
SAMPLE_RATE = 16000
N_FFT = 2048
HOP_LENGTH = 512
N_MELS = 224
TOP_DB = 80.0
AMIN = 1e-10
DELTA_WIDTH = 9
IMAGE_SIZE = 224
N_CHANNELS = 3

EMBEDDING_DIM = 768
HEAD_HIDDEN = 128
N_CLASSES = 2

# mean guard of every coefficient-of-variation loss
CV_EPS = 1e-10
L2_EPS = 1e-12

LABELS = ("control", "depression")
TASKS = ("reading", "interview")

CONTAINER_MAGIC = b"MOET"
CONTAINER_VERSION = 1
DTYPE_F64 = 1

SEED_ENV_VAR = "SPEECHMOE_SEED"

METRIC_NAMES = ("precision", "recall", "f1", "accuracy", "specificity")
