"""Constants used throughout the cloudseg package."""

# Working resolution of the network and of evaluation
DEFAULT_RESOLUTION = 128

# Ground-truth PNG code for each label (8-bit grayscale); Sky, Thin, Thick
DEFAULT_LABEL_CODES = {"sky": 0, "thin": 128, "thick": 255}

# Regression targets per label
TARGET_VALUES = (0.0, 0.5, 1.0)

DEFAULT_THRESHOLDS = (0.3, 0.6)

# Rendering palettes
COOLWARM_STOPS = ((59, 76, 192), (221, 221, 221), (180, 4, 38))
TERNARY_PALETTE = ((0, 0, 0), (128, 128, 128), (255, 255, 255))

# Checkpoint container
CHECKPOINT_MAGIC = b"NMBS"
CHECKPOINT_VERSION = 1

# Published per-label error percentages (sky, thin, thick), reference only
PUBLISHED_REFERENCE_ROWS = (
    ("Published: multivariate-distribution baseline", (15.4, 52.0, 23.4)),
    ("Published: U-Net", (7.3, 4.4, 4.4)),
)

SUPPORTED_REPORT_FORMATS = ['csv', 'json', 'excel']
LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
