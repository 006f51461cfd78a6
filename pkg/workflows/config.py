"""
Prefect settings for the reproduction pipeline.
"""

import os

from dotenv import load_dotenv

load_dotenv()

# Problem file and output root from environment
PIPELINE_CONFIG_FILE = os.getenv("TRTROM_CONFIG")
OUTPUT_ROOT = os.getenv("TRTROM_OUT")

# ROM thresholds swept by the pipeline
ROM_EPS_VALUES = [
    float(v) for v in os.getenv("TRTROM_EPS_LIST", "1e-5,1e-7,1e-9,1e-12,1e-16").split(",")
]

# Output times of the error-vs-eps table (ns)
ERROR_TABLE_TIMES = [
    float(v) for v in os.getenv("TRTROM_ERROR_TIMES", "0.3,0.6,1.0,1.2,3.0,6.0").split(",")
]

BASELINE_KINDS = ["p1", "fld"]
