import os
from pathlib import Path

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent

load_dotenv(BASE_DIR / ".env")

RESULTS_DIR = Path(os.getenv("RESULTS_DIR", str(BASE_DIR / "results")))

# Run ledger (SQLite through SQLAlchemy, same as the rest of the DAL)
RESULTS_DB_URL = os.getenv("RESULTS_DB_URL", f"sqlite:///{(RESULTS_DIR / 'runs.db').as_posix()}")

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

# Size caps
MAX_VERTICES = int(os.getenv("MAX_VERTICES", "10000000"))
TREE_VERTEX_BUDGET = int(os.getenv("TREE_VERTEX_BUDGET", "1000000"))

# Graph generation
CONFIG_MODEL_MAX_ATTEMPTS = int(os.getenv("CONFIG_MODEL_MAX_ATTEMPTS", "100"))

# Isomorphism classes
ISO_GENERAL_MAX_VERTICES = int(os.getenv("ISO_GENERAL_MAX_VERTICES", "24"))
ISO_MARKED_MAX_VERTICES = int(os.getenv("ISO_MARKED_MAX_VERTICES", "12"))
ISO_ENUMERATION_CAP = int(os.getenv("ISO_ENUMERATION_CAP", "100000"))

# Gibbs
GIBBS_MAX_STATES = int(os.getenv("GIBBS_MAX_STATES", "10000000"))
GIBBS_KERNEL_MAX_STATES = int(os.getenv("GIBBS_KERNEL_MAX_STATES", "1000000"))
GLAUBER_BURN_IN_FACTOR = int(os.getenv("GLAUBER_BURN_IN_FACTOR", "10"))

# Limit trees
POISSON_TAIL_TOLERANCE = float(os.getenv("POISSON_TAIL_TOLERANCE", "1e-12"))

# Empirical measures
W1_MAX_SAMPLES = int(os.getenv("W1_MAX_SAMPLES", "256"))

DEFAULT_THREADS = int(os.getenv("DEFAULT_THREADS", "1"))
