# ============================================================
# settings.py
# Environment-driven defaults shared by the library and the CLI.
# Every value can be overridden from the shell or a .env file.
# ============================================================

from __future__ import annotations

import os

from dotenv import load_dotenv

load_dotenv()

# ─────────────────────────────────────────────────────────────
# CONFIG
# ─────────────────────────────────────────────────────────────
NORM_TOL      = float(os.getenv("LADDER_NORM_TOL", "1e-9"))
DEFAULT_DT    = float(os.getenv("LADDER_DT", "1e-3"))
EPSILON       = float(os.getenv("LADDER_EPSILON", "1e-4"))
BETA          = float(os.getenv("LADDER_BETA", "0.5"))
SAMPLE_STRIDE = int(os.getenv("LADDER_SAMPLE_STRIDE", "10"))
OUTPUT_DIR    = os.getenv("LADDER_OUTPUT_DIR", "out")
LOG_LEVEL     = os.getenv("LADDER_LOG_LEVEL", "INFO").upper()
WORKERS       = int(os.getenv("LADDER_WORKERS", "3"))   # compare fan-out

# Polar equations divide by r_j; below this they are refused.
R_FLOOR = 1e-12

# Per-step drift above DRIFT_FACTOR * norm_tol aborts integration.
DRIFT_FACTOR = 1e3

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
