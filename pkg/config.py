# config.py
from pathlib import Path
import logging
import os
from dotenv import load_dotenv

load_dotenv()

# Paths
BASE_DIR = Path(__file__).parent
REPORT_DIR = Path(os.environ.get("LAB_REPORT_DIR", BASE_DIR / "reports"))
CONFIG_DIR = BASE_DIR / "configs"
LOG_PATH = BASE_DIR / "logs" / "lab.log"

for dir_path in [REPORT_DIR, BASE_DIR / "logs"]:
    dir_path.mkdir(parents=True, exist_ok=True)

LAB_VERSION = "0.3.0"
REPORT_SCHEMA_VERSION = "1"

# Numerical tolerances
RANK_TOL = float(os.environ.get("LAB_RANK_TOL", "1e-8"))
HARMONIC_TOL = float(os.environ.get("LAB_HARMONIC_TOL", "1e-9"))
SYMMETRY_TOL = 1e-12
UNIPOTENT_TOL = 1e-6
DEGREE_TOL = 1e-9

# Budgets and caps
BALL_POINT_BUDGET = int(os.environ.get("LAB_BALL_POINT_BUDGET", "2000000"))
SUPPORT_BUDGET = int(os.environ.get("LAB_SUPPORT_BUDGET", "200000"))
WORD_LENGTH_CAP = int(os.environ.get("LAB_WORD_LENGTH_CAP", "64"))
LAMPLIGHTER_CAP = int(os.environ.get("LAB_LAMPLIGHTER_CAP", "12"))
ADAPTED_CAP = int(os.environ.get("LAB_ADAPTED_CAP", "6"))
DOUBLING_RMAX_FACTOR = int(os.environ.get("LAB_DOUBLING_RMAX_FACTOR", "4"))

# Hitting measures
HITTING_TRUNC = int(os.environ.get("LAB_HITTING_TRUNC", "40"))
HITTING_ESCAPE_TOL = float(os.environ.get("LAB_HITTING_ESCAPE_TOL", "1e-6"))
# Monte Carlo symmetry band, in combined standard errors
MC_SYMMETRY_Z = float(os.environ.get("LAB_MC_SYMMETRY_Z", "4.0"))
MC_STEP_CAP = int(os.environ.get("LAB_MC_STEP_CAP", "1000000"))

# Parallelism
WORKERS = int(os.environ.get("LAB_WORKERS", "1"))

# Logging
LOG_LEVEL = os.environ.get("LAB_LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.FileHandler(LOG_PATH), logging.StreamHandler()]
)
logger = logging.getLogger(__name__)
