import sys
from pathlib import Path

sys.path.insert(1, "./src/")

from settings import config

DATA_DIR = Path(config("DATA_DIR"))
OUTPUT_DIR = Path(config("OUTPUT_DIR"))
CONFIG_DIR = Path(config("CONFIG_DIR"))
SEED = config("SEED")

SRC = [
    "./src/settings.py",
    "./src/lattice.py",
    "./src/paths.py",
    "./src/wilson.py",
    "./src/tree.py",
    "./src/capacity.py",
    "./src/typical_time.py",
    "./src/walk_stats.py",
    "./src/experiments.py",
]

SWEEPS = {
    "calibration_line": "calibration_line.json",
    "sweep_d4": "sweep_d4.json",
    "zero_wired_d4": "zero_wired_d4.json",
    "trend_d4": "trend_d4.json",
}

# criterion-sized runs; only on request (`doit acceptance`)
ACCEPTANCE_SWEEPS = {
    "acceptance_d4": "acceptance_d4.json",
    "acceptance_trend_d4": "acceptance_trend_d4.json",
}

DOIT_CONFIG = {
    "default_tasks": ["config", "oracle_check", "oracle_check_statistical", "sample_tree", "sweep"],
}


##################################
## Begin rest of PyDoit tasks here
##################################


def task_config():
    """Create empty directories for data, output and cache if they don't exist"""
    return {
        "actions": ["ipython ./src/settings.py"],
        "targets": [DATA_DIR, OUTPUT_DIR],
        "file_dep": ["./src/settings.py"],
    }


def task_oracle_check():
    """Run the exact oracle batteries at smoke size; fails the build on any violation"""
    return {
        "actions": ["python src/experiments.py oracle-check --suite exact --scale smoke"],
        "targets": [OUTPUT_DIR / "oracle_exact_smoke.json"],
        "file_dep": SRC,
        "verbosity": 2,
    }


def task_oracle_check_statistical():
    """Run the statistical batteries at smoke size"""
    return {
        "actions": ["python src/experiments.py oracle-check --suite statistical --scale smoke"],
        "targets": [OUTPUT_DIR / "oracle_statistical_smoke.json"],
        "file_dep": SRC,
        "task_dep": ["oracle_check"],
        "verbosity": 2,
    }


def task_sample_tree():
    """Sample a reference wired UST in d = 4 for the analyze and walk commands"""
    target = DATA_DIR / f"tree_wired_d4_L8_s{SEED}.ust"
    return {
        "actions": [f"python src/experiments.py sample-tree --d 4 --L 8 --out {target}"],
        "targets": [target],
        "file_dep": ["./src/wilson.py", "./src/experiments.py"],
    }


def task_sweep():
    """Run every configured sweep and fit its exponents"""
    for name, filename in SWEEPS.items():
        rows = OUTPUT_DIR / f"{name}.csv"
        yield {
            "name": name,
            "actions": [
                f"python src/experiments.py sweep --config {CONFIG_DIR / filename} --out {rows}"
            ],
            "targets": [rows, OUTPUT_DIR / f"{name}_fits.csv"],
            "file_dep": [CONFIG_DIR / filename, *SRC],
            "task_dep": ["oracle_check"],
            "verbosity": 2,
        }


def task_acceptance():
    """Every oracle battery and the d = 4 trend sweeps at acceptance size"""
    report = OUTPUT_DIR / "oracle_all_acceptance.json"
    yield {
        "name": "oracle",
        "actions": ["python src/experiments.py oracle-check --suite all --scale acceptance"],
        "targets": [report],
        "file_dep": SRC,
        "verbosity": 2,
    }
    for name, filename in ACCEPTANCE_SWEEPS.items():
        rows = OUTPUT_DIR / f"{name}.csv"
        yield {
            "name": name,
            "actions": [
                f"python src/experiments.py sweep --config {CONFIG_DIR / filename} --out {rows}"
            ],
            "targets": [rows, OUTPUT_DIR / f"{name}_fits.csv"],
            "file_dep": [CONFIG_DIR / filename, *SRC],
            "task_dep": ["acceptance:oracle"],
            "verbosity": 2,
        }
