"""Config-driven sweeps, exponent fits, oracle batteries and the command line.

Usage
-----
```
python src/experiments.py sample-tree --d 4 --L 8 --out _data/tree.ust
python src/experiments.py analyze --tree _data/tree.ust --n 16
python src/experiments.py walk --tree _data/tree.ust --steps 1024 --walks 32
python src/experiments.py capacity --points "0,0,0,0;1,0,0,0" --method both
python src/experiments.py sweep --config configs/calibration_line.json
python src/experiments.py oracle-check --suite exact
python src/experiments.py oracle-check --suite all --scale smoke
python src/experiments.py fit --rows _output/sweep.csv
```

Precedence of settings is command line flags, then the JSON config file, then
the defaults of ``settings.py``. Exit codes: 0 success, 2 configuration error,
3 resource guard, 4 oracle failure.
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path as FilePath

import numpy as np
import pandas as pd
import statsmodels.api as sm
from joblib import Parallel, delayed

import capacity
import lattice
import misc_tools
import paths
import tree as tree_tools
import typical_time
import walk_stats
import wilson
from settings import config

logger = logging.getLogger(__name__)

OUTPUT_DIR = config("OUTPUT_DIR")
DATA_DIR = config("DATA_DIR")
DIMENSION = config("DIMENSION")
SEED = config("SEED")
THREADS = config("THREADS")
LOG_LEVEL = config("LOG_LEVEL")
MAX_VERTICES = config("MAX_VERTICES")
COLLINEARITY_THRESHOLD = config("COLLINEARITY_THRESHOLD")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_ORACLE = 4

TREND_STREAM = 3
ORACLE_STREAM = 4

CSV_COLUMNS = [
    "statistic",
    "d",
    "L",
    "n",
    "estimate",
    "ci_lo",
    "ci_hi",
    "trees",
    "walks",
    "discard_rate",
    "seed",
    "config_hash",
]
FIT_COLUMNS = [
    "statistic",
    "model",
    "a",
    "b",
    "c",
    "se_a",
    "se_b",
    "se_c",
    "residual_norm",
    "n_min",
    "n_max",
    "points",
    "condition_number",
    "b_identifiable",
    "weighted",
]


class ConfigError(ValueError):
    """Invalid or infeasible sweep configuration."""


class ResourceGuardError(RuntimeError):
    """The configuration would exceed the memory budget."""


########################################################################################
## Statistics catalogue
########################################################################################

# kind, and the extrinsic radius a statistic at n reaches (for the L policy)
STATISTICS = {
    "volume": ("tree", lambda n: math.sqrt(n)),
    "resistance": ("tree", lambda n: math.sqrt(n)),
    "past_survival": ("tree", lambda n: math.sqrt(n)),
    "extrinsic_radius": ("tree", lambda n: math.sqrt(n)),
    "extrinsic_volume": ("tree", lambda n: n),
    "zero_wired_radius_tail": ("zero_wired", lambda n: n),
    "return_probability": ("walk", lambda n: n ** (1 / 6)),
    "intrinsic_displacement": ("walk", lambda n: n ** (1 / 6)),
    "max_intrinsic_displacement": ("walk", lambda n: n ** (1 / 6)),
    "extrinsic_displacement": ("walk", lambda n: n ** (1 / 6)),
    "mean_square_displacement": ("walk", lambda n: n ** (1 / 6)),
    "range": ("walk", lambda n: n ** (1 / 6)),
    "exit_time": ("exit", lambda n: math.sqrt(n)),
    "lerw_concentration": ("trend", None),
    "uniform_hit_scaling": ("trend", lambda n: n),
}

WALK_COLUMNS = {
    "return_probability": ("at_start", "mean", None),
    **walk_stats.DISPLACEMENT_STATISTICS,
    "range": ("range", "median", None),
}


def tree_statistic(name, sampled, start, n, component=None):
    """Value of one tree-level statistic at ``n`` (``nan`` where undefined)."""
    if name == "volume":
        return float(tree_tools.ball(sampled, start, n).volume)
    if name == "resistance":
        if tree_tools.ball(sampled, start, n).sphere.size == 0:
            return math.nan
        return tree_tools.resistance_to_sphere(sampled, start, n)
    if name == "past_survival":
        return float(tree_tools.past_reaches(sampled, start, n))
    if name == "extrinsic_radius":
        return float(tree_tools.extrinsic_stats(sampled, start, n).max_displacement)
    if name == "extrinsic_volume":
        return float(tree_tools.extrinsic_volume(sampled, start, n))
    if name == "zero_wired_radius_tail":
        radius = int(np.abs(sampled.coords[component]).max())
        return float(radius >= n)
    raise ValueError(f"{name} is not a tree statistic")


########################################################################################
## Configuration
########################################################################################


@dataclass(frozen=True)
class SweepConfig:
    """Declarative description of a sweep; see ``configs/*.json``.

    ``grids`` maps a statistic to its own ``n`` grid, overriding ``n_grid``.
    ``radius_factor`` is the required ratio of ``L`` to the extrinsic radius
    each statistic reaches at its largest ``n``.
    """

    d: int = DIMENSION
    L: int = 16
    boundary: str = "wired"
    n_grid: tuple = (4, 8, 16, 32)
    grids: dict = field(default_factory=dict)
    trees: int = 8
    walks_per_tree: int = 16
    exit_trials: int = 32
    statistics: tuple = ("volume",)
    seed: int = SEED
    surrogate: str = "ust"
    line_length: int = 1 << 14
    radius_factor: float = 4.0
    fit_weighted: bool = False
    out: str | None = None
    format: str = "csv"
    threads: int = THREADS

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("n_grid", "statistics"):
            if key in data:
                data[key] = tuple(data[key])
        if "grids" in data:
            data["grids"] = {k: tuple(v) for k, v in data["grids"].items()}
        return cls(**data)

    @classmethod
    def from_file(cls, filepath):
        try:
            data = json.loads(FilePath(filepath).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {filepath}: {err}") from err
        return cls.from_dict(data)

    def with_overrides(self, **overrides):
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self):
        out = asdict(self)
        out["n_grid"] = list(self.n_grid)
        out["statistics"] = list(self.statistics)
        out["grids"] = {k: list(v) for k, v in sorted(self.grids.items())}
        return out

    def config_hash(self):
        """Hash of everything that affects the numbers (not where they are written)."""
        relevant = {k: v for k, v in self.to_dict().items() if k not in ("out", "format", "threads")}
        return misc_tools.config_hash(relevant)

    def grid_for(self, statistic):
        return tuple(self.grids.get(statistic, self.n_grid))

    def ensemble(self):
        return walk_stats.EnsembleConfig(
            d=self.d,
            L=self.L,
            trees=self.trees,
            walks_per_tree=self.walks_per_tree,
            seed=self.seed,
            surrogate=self.surrogate,
            line_length=self.line_length,
            threads=self.threads,
        )

    def kinds(self):
        return {STATISTICS[s][0] for s in self.statistics}

    def validate(self):
        unknown = [s for s in self.statistics if s not in STATISTICS]
        if unknown:
            raise ConfigError(f"unknown statistics: {unknown}")
        if self.boundary not in ("wired", "zero-wired"):
            raise ConfigError(f"unknown boundary mode {self.boundary!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.format!r}")
        if self.surrogate not in ("ust", "line"):
            raise ConfigError(f"unknown surrogate {self.surrogate!r}")
        if self.trees < 1 or self.walks_per_tree < 1 or self.exit_trials < 1:
            raise ConfigError("trees, walks_per_tree and exit_trials must be positive")
        if not 1 <= self.d <= lattice.MAX_DIMENSION or self.L < 1:
            raise ConfigError(f"invalid box d={self.d}, L={self.L}")
        for statistic in self.statistics:
            grid = self.grid_for(statistic)
            if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"n grid for {statistic} must be positive and strictly ascending")
        kinds = self.kinds()
        if "zero_wired" in kinds and self.boundary != "zero-wired":
            raise ConfigError("zero_wired_radius_tail needs boundary 'zero-wired'")
        if {"walk", "exit"} & kinds and self.boundary != "wired":
            raise ConfigError("walk statistics need the wired boundary")
        if self.surrogate == "line" and kinds - {"walk", "exit"}:
            raise ConfigError("the line surrogate only supports walk statistics")
        if self.surrogate == "ust" and kinds - {"trend"}:
            vertices = (2 * self.L + 1) ** self.d + 1
            if vertices > MAX_VERTICES:
                raise ResourceGuardError(
                    f"a box with d={self.d}, L={self.L} has {vertices} vertices, "
                    f"above MAX_VERTICES={MAX_VERTICES}"
                )
            for statistic in self.statistics:
                radius_of = STATISTICS[statistic][1]
                if STATISTICS[statistic][0] == "trend" or radius_of is None:
                    continue
                radius = radius_of(max(self.grid_for(statistic)))
                if self.L < self.radius_factor * radius:
                    raise ConfigError(
                        f"{statistic} at n={max(self.grid_for(statistic))} reaches radius "
                        f"{radius:.1f}; L={self.L} is below {self.radius_factor} times that"
                    )
        return self


########################################################################################
## Sweeps
########################################################################################


def _sample(cfg, index):
    if cfg.boundary == "zero-wired":
        seed = lattice.RngSeed(cfg.seed, walk_stats.TREE_STREAM).child(index)
        sampled, component = wilson.zero_wired_box(cfg.d, cfg.L, seed)
        return sampled, sampled.origin, component
    sampled, start = cfg.ensemble().sample_tree(index)
    return sampled, start, None


def _per_tree(cfg, index):
    """Everything a sweep needs from tree ``index``: tree rows, walk rows, discards."""
    kinds = cfg.kinds()
    if not kinds & {"tree", "zero_wired", "walk", "exit"}:
        return [], [], 0
    sampled, start, component = _sample(cfg, index)
    rows = []
    for statistic in cfg.statistics:
        kind = STATISTICS[statistic][0]
        if kind in ("tree", "zero_wired"):
            for n in cfg.grid_for(statistic):
                value = tree_statistic(statistic, sampled, start, n, component)
                row = {"tree": index, "statistic": statistic, "n": n, "value": value, "se": math.nan}
                rows.append(row)
        elif kind == "exit":
            for n in cfg.grid_for(statistic):
                seed = lattice.RngSeed(cfg.seed, walk_stats.WALK_STREAM).child(index, n)
                try:
                    times = walk_stats.exit_time(sampled, n, cfg.exit_trials, seed, start=start)
                    value = float(times.mean())
                    se = float(times.std(ddof=1) / math.sqrt(times.size)) if times.size > 1 else math.nan
                except walk_stats.BoundaryEffectError:
                    logger.warning("tree %d: exit ball of radius %d reaches the boundary", index, n)
                    value = se = math.nan
                rows.append({"tree": index, "statistic": statistic, "n": n, "value": value, "se": se})

    walk_rows, discarded = [], 0
    checkpoints = sorted(
        {n for s in cfg.statistics if STATISTICS[s][0] == "walk" for n in cfg.grid_for(s)}
    )
    if checkpoints:
        walk_rows, discarded = walk_stats.tree_walk_records(
            cfg.ensemble(), index, [0] + checkpoints, sampled=sampled, start=start
        )
    logger.info("tree %d done", index)
    return rows, walk_rows, discarded


def _row(cfg, statistic, n, estimate, lo, hi, trees, walks, discard_rate):
    return {
        "statistic": statistic,
        "d": cfg.d,
        "L": cfg.L if cfg.surrogate == "ust" else 0,
        "n": int(n),
        "estimate": float(estimate),
        "ci_lo": float(lo),
        "ci_hi": float(hi),
        "trees": int(trees),
        "walks": int(walks),
        "discard_rate": float(discard_rate),
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
    }


def _trend_rows(cfg, statistic):
    seed = lattice.RngSeed(cfg.seed, TREND_STREAM)
    rows = []
    if statistic == "lerw_concentration":
        for n in cfg.grid_for(statistic):
            ratios = np.array(
                [paths.lerw_length_ratios(n, seed.child(n, i), cfg.d)[0] for i in range(cfg.trees)]
            )
            median = float(np.median(ratios))
            half = 1.96 * misc_tools.median_standard_error(ratios)
            rows.append(_row(cfg, statistic, n, median, median - half, median + half, cfg.trees, 0, 0.0))
    elif statistic == "uniform_hit_scaling":
        single = [lattice.origin(cfg.d)]
        trials = cfg.trees * cfg.walks_per_tree
        cap = capacity.capacity_escape_mc(single, trials, horizon=10_000, seed=seed.child(0))
        for r in cfg.grid_for(statistic):
            est = capacity.uniform_hit_sum(single, r, trials, seed=seed.child(1, r), capacity=cap)
            half = 1.96 * est.ratio_std_error
            rows.append(_row(cfg, statistic, r, est.ratio, est.ratio - half, est.ratio + half, 0, trials, 0.0))
    return rows


def run_sweep(cfg):
    """Run every statistic of ``cfg``; returns ``(rows, fits)`` DataFrames."""
    cfg.validate()
    logger.info("sweep %s: %s", cfg.config_hash(), ", ".join(cfg.statistics))
    n_trees = 1 if cfg.surrogate == "line" else cfg.trees
    results = Parallel(n_jobs=cfg.threads)(delayed(_per_tree)(cfg, i) for i in range(n_trees))

    tree_frame = pd.DataFrame(
        [row for rows, _, _ in results for row in rows], columns=["tree", "statistic", "n", "value", "se"]
    )
    walk_frame = pd.DataFrame([row for _, rows, _ in results for row in rows])
    discarded = sum(count for _, _, count in results)
    records = walk_stats.WalkRecords(walk_frame, discarded, cfg.ensemble())

    out = []
    for statistic in cfg.statistics:
        kind = STATISTICS[statistic][0]
        if kind in ("tree", "zero_wired", "exit"):
            walks = cfg.exit_trials if kind == "exit" else 0
            for n in cfg.grid_for(statistic):
                sel = tree_frame[(tree_frame["statistic"] == statistic) & (tree_frame["n"] == n)]
                sel = sel.dropna(subset=["value"])
                values = sel["value"].to_numpy()
                if values.size == 0:
                    logger.warning("%s at n=%d is undefined on every tree", statistic, n)
                    continue
                mean, lo, hi, _ = misc_tools.mean_confidence_interval(values)
                within = sel["se"].to_numpy()
                if values.size == 1 and np.isfinite(within[0]):
                    # one tree: the interval comes from the spread over its walks
                    lo, hi = mean - 1.96 * within[0], mean + 1.96 * within[0]
                out.append(_row(cfg, statistic, n, mean, lo, hi, values.size, walks, 0.0))
        elif kind == "walk":
            column, reducer, transform = WALK_COLUMNS[statistic]
            for n in cfg.grid_for(statistic):
                try:
                    est = walk_stats.aggregate(records, statistic, n, column, reducer, transform)
                except walk_stats.BoundaryEffectError:
                    logger.warning("%s at n=%d: every walk touched the boundary", statistic, n)
                    continue
                out.append(
                    _row(cfg, statistic, n, est.estimate, est.ci_low, est.ci_high, est.trees,
                         cfg.walks_per_tree, est.discard_rate)
                )
        else:
            out.extend(_trend_rows(cfg, statistic))

    rows = pd.DataFrame(out, columns=CSV_COLUMNS)
    fits = fit_all(rows, weighted=cfg.fit_weighted)
    return rows, fits


def output_path(cfg):
    if cfg.out:
        return FilePath(cfg.out)
    return FilePath(OUTPUT_DIR) / f"sweep_{cfg.config_hash()}.{cfg.format}"


def _json_records(df):
    return df.astype(object).where(df.notna(), None).to_dict(orient="records")


def write_results(cfg, rows, fits, filepath=None):
    """Write rows (and fits) in the configured format; returns the paths written."""
    filepath = output_path(cfg) if filepath is None else FilePath(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    if cfg.format == "json":
        payload = {
            "config": cfg.to_dict(),
            "config_hash": cfg.config_hash(),
            "rows": _json_records(rows),
            "fits": _json_records(fits),
        }
        filepath.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return [filepath]
    fits_path = filepath.with_name(f"{filepath.stem}_fits.csv")
    rows.to_csv(filepath, index=False, float_format="%.10g", lineterminator="\n")
    fits.to_csv(fits_path, index=False, float_format="%.10g", lineterminator="\n")
    return [filepath, fits_path]


########################################################################################
## Exponent fits
########################################################################################


@dataclass(frozen=True)
class FitResult:
    """``log Y = a log n + b log log n + c`` fitted over ``[n_min, n_max]``.

    ``b_identifiable`` is false when the column-normalized design has a
    condition number above the collinearity threshold; ``b`` is then
    reported but should not be read as a measurement.
    """

    model: str
    a: float
    b: float
    c: float
    std_errors: tuple
    residual_norm: float
    n_min: int
    n_max: int
    points: int
    condition_number: float
    b_identifiable: bool
    weighted: bool

    def predict(self, n):
        n = np.asarray(n, dtype=float)
        if self.model == "power":
            return np.exp(self.a * np.log(n) + self.c)
        return np.exp(self.a * np.log(n) + self.b * np.log(np.log(n)) + self.c)

    def to_dict(self):
        return {
            "model": self.model,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "se_a": self.std_errors[0],
            "se_b": self.std_errors[1],
            "se_c": self.std_errors[2],
            "residual_norm": self.residual_norm,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "points": self.points,
            "condition_number": self.condition_number,
            "b_identifiable": self.b_identifiable,
            "weighted": self.weighted,
        }


# smallest n each model is defined for
MIN_FIT_N = {"powerlog": 3, "power": 1}

# small-n tails, volumes and normalized trend ratios: plain power laws
POWER_MODEL_STATISTICS = {
    "extrinsic_volume",
    "zero_wired_radius_tail",
    "lerw_concentration",
    "uniform_hit_scaling",
}


def _design(n, model):
    log_n = np.log(n)
    if model == "powerlog":
        return np.column_stack([log_n, np.log(log_n), np.ones_like(log_n)])
    if model == "power":
        return np.column_stack([log_n, np.ones_like(log_n)])
    raise ValueError(f"unknown model {model!r}")


def log_weights(rows):
    """Inverse variances of ``log Y`` from 95% intervals, or ``None`` if unusable."""
    if not {"ci_lo", "ci_hi"} <= set(rows.columns):
        return None
    y = rows["estimate"].to_numpy(dtype=float)
    sigma = (rows["ci_hi"].to_numpy(dtype=float) - rows["ci_lo"].to_numpy(dtype=float)) / (2 * 1.96 * y)
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
        return None
    return 1.0 / sigma**2


def fit_exponents(rows, model="powerlog", weighted=False, threshold=COLLINEARITY_THRESHOLD):
    """Least squares fit of ``log Y`` on ``(log n, log log n, 1)``.

    Parameters
    ----------
    rows : pandas.DataFrame
        Columns ``n`` and ``estimate``; ``ci_lo`` and ``ci_hi`` when ``weighted``.
    model : {"powerlog", "power"}
        ``"power"`` drops the ``log log n`` column (``b`` is then 0).
    weighted : bool
        Weight by inverse squared interval width of ``log Y``; falls back to
        ordinary least squares when intervals are missing or degenerate.

    Examples
    --------
    >>> n = 2.0 ** np.arange(4, 12)
    >>> fit = fit_exponents(pd.DataFrame({"n": n, "estimate": 3 * n**2}))
    >>> round(fit.a, 6)
    2.0
    >>> abs(fit.b) < 1e-8
    True
    """
    n = rows["n"].to_numpy(dtype=float)
    y = rows["estimate"].to_numpy(dtype=float)
    if n.size < 4:
        raise ValueError("an exponent fit needs at least 4 points")
    if np.any(n < MIN_FIT_N.get(model, 3)):
        raise ValueError(f"the {model} model needs n >= {MIN_FIT_N.get(model, 3)}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("an exponent fit needs positive estimates")
    X = _design(n, model)
    log_y = np.log(y)

    weights = log_weights(rows) if weighted else None
    if weighted and weights is None:
        logger.warning("confidence intervals unusable as weights; fitting unweighted")
    if weights is None:
        result = sm.OLS(log_y, X).fit()
        w = np.ones_like(log_y)
    else:
        result = sm.WLS(log_y, X, weights=weights).fit()
        w = weights
    params = np.asarray(result.params, dtype=float)
    errors = np.asarray(result.bse, dtype=float)
    residual = log_y - X @ params
    if model == "power":
        params = np.array([params[0], 0.0, params[1]])
        errors = np.array([errors[0], 0.0, errors[1]])
    residual_norm = float(np.sqrt(np.sum(w * residual**2)))

    normalized = X / np.linalg.norm(X, axis=0)
    condition = float(np.linalg.cond(normalized))
    identifiable = model == "powerlog" and condition <= threshold
    if model == "powerlog" and not identifiable:
        logger.warning(
            "log log n coefficient not identifiable over n in [%g, %g] (condition number %.3g)",
            n.min(),
            n.max(),
            condition,
        )
    return FitResult(
        model=model,
        a=float(params[0]),
        b=float(params[1]),
        c=float(params[2]),
        std_errors=tuple(float(e) for e in errors),
        residual_norm=residual_norm,
        n_min=int(n.min()),
        n_max=int(n.max()),
        points=int(n.size),
        condition_number=condition,
        b_identifiable=identifiable,
        weighted=weights is not None,
    )


def fit_model(statistic):
    return "power" if statistic in POWER_MODEL_STATISTICS else "powerlog"


def fit_all(rows, weighted=False, model=None):
    """One fit per statistic with at least 4 usable rows.

    ``model=None`` picks :func:`fit_model` per statistic.
    """
    fits = []
    for statistic, sub in rows.groupby("statistic", sort=False):
        chosen = model or fit_model(statistic)
        usable = sub[
            np.isfinite(sub["estimate"]) & (sub["estimate"] > 0) & (sub["n"] >= MIN_FIT_N[chosen])
        ]
        if len(usable) < 4:
            logger.info("not fitting %s: %d usable points", statistic, len(usable))
            continue
        fit = fit_exponents(usable, model=chosen, weighted=weighted)
        fits.append({"statistic": statistic, **fit.to_dict()})
    return pd.DataFrame(fits, columns=FIT_COLUMNS)


########################################################################################
## Oracle batteries
########################################################################################


@dataclass
class BatteryResult:
    name: str
    checks: int = 0
    violations: int = 0
    counterexample: object = None
    detail: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.violations == 0

    def fail(self, counterexample):
        self.violations += 1
        if self.counterexample is None:
            self.counterexample = counterexample

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "checks": self.checks,
            "violations": self.violations,
            "counterexample": self.counterexample,
            "detail": self.detail,
        }


@dataclass
class OracleReport:
    suite: str
    batteries: list

    @property
    def passed(self):
        return all(b.passed for b in self.batteries)

    def to_dict(self):
        return {
            "suite": self.suite,
            "passed": self.passed,
            "batteries": [b.to_dict() for b in self.batteries],
        }


def definitional_erasure(points):
    """Chronological loop-erasure by direct list surgery."""
    out = []
    for p in map(tuple, np.asarray(points).tolist()):
        if p in out:
            del out[out.index(p) + 1 :]
        else:
            out.append(p)
    return out


def _random_walks(seed, count, steps, dims):
    for i in range(count):
        d = dims[i % len(dims)]
        yield lattice.sample_srw(lattice.origin(d), steps, seed.child(i))


def battery_loop_erasure(seed, count=1000, steps=100, erase=paths.erase_loops):
    result = BatteryResult("loop_erasure")
    for walk in _random_walks(seed, count, steps, (2, 4)):
        record = erase(walk)
        eraser = paths.LoopEraser(walk[0])
        eraser.extend(list(walk)[1:])
        result.checks += 1
        erased = record.erased.tolist()
        if erased != definitional_erasure(walk.points) or erased != eraser.stack:
            result.fail(walk.tolist())
            continue
        if list(record.ell) != eraser.times:
            result.fail(walk.tolist())
            continue
        ell = record.ell
        for m in range(walk.length + 1):
            rho_m = paths.rho(record, m)
            if not all((ell[k] <= m) == (rho_m >= k) for k in range(ell.size)):
                result.fail(walk.tolist())
                break
    return result


def battery_cut_times(seed, count=500, steps=100, erase=paths.erase_loops):
    result = BatteryResult("cut_times")
    for walk in _random_walks(seed, count, steps, (3, 4)):
        whole = erase(walk).erased
        for t in paths.cut_times(walk):
            if t >= walk.length:
                continue
            result.checks += 1
            try:
                joined = paths.concatenate(erase(walk[: t + 1]).erased, erase(walk[t + 1 :]).erased)
            except ValueError:
                joined = None
            if joined != whole:
                result.fail({"walk": walk.tolist(), "cut": int(t)})
                break
    return result


def battery_resistance(seed, max_line=256, max_depth=20, fixtures=50):
    result = BatteryResult("resistance")
    line = tree_tools.line_tree(max_line)
    for n in range(1, max_line + 1):
        result.checks += 1
        if tree_tools.resistance_to_sphere(line, 0, n) != n:
            result.fail({"tree": "line", "n": n})
    for depth in range(1, max_depth + 1):
        binary = tree_tools.full_binary_tree(depth)
        result.checks += 1
        if abs(tree_tools.resistance_to_sphere(binary, 0, depth) - (1 - 2.0**-depth)) > 1e-10:
            result.fail({"tree": "binary", "depth": depth})
    rng = seed.generator()
    for i in range(fixtures):
        fixture = tree_tools.random_tree(int(rng.integers(5, 51)), rng)
        v = int(rng.integers(0, fixture.n_vertices))
        for n in range(1, 6):
            if tree_tools.ball(fixture, v, n).sphere.size == 0:
                break
            result.checks += 1
            fast = tree_tools.resistance_to_sphere(fixture, v, n)
            slow = tree_tools.resistance_to_sphere_linear(fixture, v, n)
            if abs(fast - slow) > 1e-10 * max(1.0, slow):
                result.fail({"parents": fixture.parent.tolist(), "v": v, "n": n})
    return result


def battery_covering(seed, instances=50, radii=(2, 5, 11)):
    result = BatteryResult("covering")
    rng = seed.generator()
    overlapping = 0
    for i in range(instances):
        size = int(rng.integers(1, 501))
        spread = int(rng.integers(1, 201))
        S = rng.integers(-spread, spread + 1, size=(size, 4))
        for r in radii:
            centres = capacity.greedy_cover(S, r)
            check = capacity.covering_bullets(S, r, centres)
            result.checks += 1
            if not (check.lower_ok and check.upper_ok and check.min_separation >= 2 * (2 * r + 1)):
                result.fail({"S": S.tolist(), "r": r})
            if not check.disjoint_3r:
                overlapping += 1
    result.detail["overlapping_3r_covers"] = overlapping
    return result


def _oracle_trees(seed, count, d=4, L=6):
    for i in range(count):
        yield wilson.wired_box_ust(d, L, seed.child(i))


def battery_geodesic_inequality(seed, trees=100, max_n=32, L=24):
    result = BatteryResult("geodesic_inequality")
    for sampled in _oracle_trees(seed, trees, L=L):
        origin = sampled.origin
        for n in range(1, max_n + 1):
            if tree_tools.ball(sampled, origin, n).sphere.size == 0:
                break
            R = tree_tools.resistance_to_sphere(sampled, origin, n)
            counts = tree_tools.geodesic_counts(sampled, origin, n)
            result.checks += 1
            tolerance = 1e-9
            if R > n + tolerance:
                result.fail({"n": n, "resistance": R})
            for k in range(1, n + 1):
                if 1.0 / R > counts[k - 1] / k * (1 + tolerance):
                    result.fail({"n": n, "k": k, "resistance": R, "N": int(counts[k - 1])})
    return result


def battery_weighted_metric(seed, trees=20, triples=10_000, L=12):
    result = BatteryResult("weighted_metric")
    rng = seed.generator()
    for sampled in _oracle_trees(seed.child(1), trees, L=L):
        n_lattice = sampled.coords.shape[0]
        weights = {}
        for _ in range(triples):
            u, v = (int(x) for x in rng.integers(0, n_lattice, size=2))
            r = int(rng.integers(1, 9))
            if r not in weights:
                weights[r] = tree_tools.omega_r(sampled, r)
            distance = tree_tools.tree_distance(sampled, u, v)
            if math.isinf(distance):
                continue
            result.checks += 1
            if distance > 4 * r + 4 * tree_tools.weighted_distance(sampled, weights[r], u, v):
                result.fail({"u": u, "v": v, "r": r})
    return result


def battery_wilson_uniformity(seed, samples=300_000):
    """Chi-square of Wilson samples against enumeration on K3, C4 and K4."""
    result = BatteryResult("wilson_uniformity")
    graphs = {
        "K3": wilson.FiniteGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)]),
        "C4": wilson.WiredBox(1, 1),
        "K4": wilson.FiniteGraph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
    }
    for i, (name, graph) in enumerate(graphs.items()):
        finite = graph.to_finite_graph() if isinstance(graph, wilson.WiredBox) else graph
        trees = wilson.enumerate_spanning_trees(finite)
        index = {frozenset(t): j for j, t in enumerate(trees)}
        probs = np.array([wilson.tree_weight(finite, t) for t in trees], dtype=float)
        counts = np.zeros(len(trees))
        root = graph.supernode if graph.supernode is not None else 0
        for s in range(samples):
            sampled = wilson.wilson_sample(graph, root, seed.child(i, s))
            counts[index[sampled.edges()]] += 1
        p_value = misc_tools.chi_square_gof(counts, probs / probs.sum())
        result.checks += 1
        result.detail[name] = p_value
        if p_value <= 1e-3:
            result.fail({"graph": name, "p_value": p_value})
    return result


def battery_typical_time(seed, trials=20000, lengths=(4, 8, 16, 32), t_tilde_trials=4000, tail_trials=20000):
    """Exact versus Monte Carlo escape curves, growth of the straight-line T~,
    the forced one-step typical time and the concentration tail."""
    result = BatteryResult("typical_time")
    line = paths.Path([(i, 0, 0, 0) for i in range(6)])
    exact = typical_time.escape_curve(line, 4, method="exact")
    mc = typical_time.escape_curve(line, 4, trials, seed.child(0), method="mc")
    for k in range(5):
        result.checks += 1
        sigma = max(mc.std_errors[k], 1.0 / trials)
        if abs(mc.values[k] - exact.values[k]) > 3 * sigma:
            result.fail({"k": k, "exact": exact.values[k], "mc": mc.values[k]})

    # T~ / n of the straight line against log n
    per_step = []
    for n in lengths:
        straight = paths.Path([(i, 0, 0, 0) for i in range(n + 1)])
        value, _ = typical_time.t_tilde(straight, t_tilde_trials, seed.child(2, n))
        per_step.append(value / n)
    per_step = np.asarray(per_step)
    log_n = np.log(np.asarray(lengths, dtype=float))
    slope = float(np.polyfit(log_n, per_step, 1)[0])
    spread = float(np.max(per_step / log_n) / np.min(per_step / log_n))
    result.detail["t_tilde_per_step"] = per_step.tolist()
    result.detail["t_tilde_slope"] = slope
    result.detail["t_tilde_spread"] = spread
    result.checks += 1
    if slope <= 0 or spread >= 2:
        result.fail({"lengths": list(lengths), "t_tilde_per_step": per_step.tolist()})

    x, a = (0, 0, 0, 0), (1, 0, 0, 0)
    B = [p for p in lattice.neighbors(x) if p != a]
    forced = typical_time.typical_time_mc(paths.Path([x, a]), {a}, B, 200, seed.child(1))
    result.checks += 1
    if forced.t_hat != 1.0:
        result.fail({"t_hat": forced.t_hat})

    # walks from 0 stopped at (2, 0, 0, 0) or on the faces of Lambda(4)
    short = paths.Path([(0, 0, 0, 0), (1, 0, 0, 0), (2, 0, 0, 0)])
    faces = lattice.Box.around_origin(4, 4).boundary_points()
    tail_result = typical_time.typical_time_mc(short, {short.end}, faces, tail_trials, seed.child(3))
    tails = typical_time.concentration_profile(tail_result, short.length)["tail"].to_numpy()
    result.detail["concentration_tail"] = tails.tolist()
    result.checks += 1
    if np.any(np.diff(tails) > 0):
        result.fail({"tail": tails.tolist()})
    return result


def battery_capacity_agreement(seed, sets=20, max_size=4, trials=4000, horizon=4000,
                               green_trials=4000, green_horizon=4000):
    """Escape Monte Carlo against the variational estimate on small sets in Z^4,
    and translation invariance of the capacity of a point."""
    result = BatteryResult("capacity_agreement")
    rng = seed.generator()
    table = capacity.GreenTable(4, trials=green_trials, horizon=green_horizon, seed=seed.child(0))
    box = lattice.Box.around_origin(4, 2).points()
    scores = []
    for i in range(sets):
        size = int(rng.integers(1, max_size + 1))
        S = box[rng.choice(box.shape[0], size=size, replace=False)]
        escape = capacity.capacity_escape_mc(S, trials, horizon, seed.child(1, i))
        result.checks += 1
        try:
            variational, _ = capacity.capacity_variational(S, table)
        except capacity.IllConditionedError as err:
            result.fail({"S": S.tolist(), "condition_number": err.condition_number})
            continue
        z = abs(escape.value - variational.value) / math.hypot(escape.std_error, variational.std_error)
        scores.append(z)
        if z > 3:
            result.fail({"S": S.tolist(), "escape": escape.value, "variational": variational.value})

    here = capacity.capacity_escape_mc([lattice.origin(4)], trials, horizon, seed.child(2, 0))
    there = capacity.capacity_escape_mc([(5, -3, 2, 7)], trials, horizon, seed.child(2, 1))
    z = abs(here.value - there.value) / math.hypot(here.std_error, there.std_error)
    scores.append(z)
    result.checks += 1
    if z > 3:
        result.fail({"origin": here.value, "translate": there.value})
    result.detail["max_z"] = float(max(scores))
    return result


def battery_line_calibration(seed, exit_n=64, exit_trials=6000, grid=(64, 256, 1024, 4096), walks=4000):
    """Closed forms of the walk on Z: mean exit time n^2 and slopes -1/2 and
    1/2 of the return probability and the median displacement."""
    result = BatteryResult("line_calibration")
    half = 2 * max(max(grid), exit_n)
    line = tree_tools.line_tree(2 * half, center=half)
    mean_exit = float(walk_stats.exit_time(line, exit_n, exit_trials, seed.child(0), start=half).mean())
    result.detail["mean_exit"] = mean_exit
    result.checks += 1
    if abs(mean_exit / exit_n**2 - 1) > 0.05:
        result.fail({"n": exit_n, "mean_exit": mean_exit})

    cfg = walk_stats.EnsembleConfig(
        d=1,
        trees=1,
        walks_per_tree=walks,
        seed=int(seed.generator(1).integers(2**62)),
        surrogate="line",
        line_length=2 * half,
        threads=1,
    )
    records = walk_stats.ensemble_walks(cfg, grid)
    windows = {
        "return_probability": (("at_start", "mean", None), (-0.65, -0.35)),
        "intrinsic_displacement": (("end_distance", "median", None), (0.4, 0.6)),
    }
    for statistic, ((column, reducer, transform), (lo, hi)) in windows.items():
        estimates = [walk_stats.aggregate(records, statistic, n, column, reducer, transform) for n in grid]
        rows = pd.DataFrame({"n": list(grid), "estimate": [e.estimate for e in estimates]})
        slope = fit_exponents(rows, model="power").a
        result.detail[f"{statistic}_slope"] = slope
        result.checks += 1
        if not lo <= slope <= hi:
            result.fail({"statistic": statistic, "slope": slope})
    return result


def battery_uniform_hit_scaling(seed, radii=(8, 16, 32), trials=2000, cap_trials=4000):
    """``sum_x P_x(hit 0) / (r^2 Cap({0}))`` stays within a factor 2 across ``radii``."""
    result = BatteryResult("uniform_hit_scaling")
    single = [lattice.origin(4)]
    cap = capacity.capacity_escape_mc(single, cap_trials, horizon=10_000, seed=seed.child(0))
    ratios = [
        capacity.uniform_hit_sum(single, r, trials, seed=seed.child(1, r), capacity=cap).ratio
        for r in radii
    ]
    result.detail["ratios"] = ratios
    result.checks += 1
    if max(ratios) >= 2 * min(ratios):
        result.fail({"radii": list(radii), "ratios": ratios})
    return result


def battery_lerw_concentration(seed, lengths=(10**4, 10**5, 10**6), walks=200, window=(0.5, 2.0)):
    """Median of ``rho_n / (n (log n)^{-1/3})`` over independent walks in Z^4."""
    result = BatteryResult("lerw_concentration")
    medians = {}
    for n in lengths:
        ratios = [paths.lerw_length_ratios(n, seed.child(n, i), 4)[0] for i in range(walks)]
        medians[n] = float(np.median(ratios))
        result.checks += 1
        if not window[0] <= medians[n] <= window[1]:
            result.fail({"n": n, "median": medians[n]})
    result.detail["medians"] = medians
    return result


EXACT_BATTERIES = (
    "loop_erasure",
    "cut_times",
    "resistance",
    "covering",
    "geodesic_inequality",
    "weighted_metric",
)
STATISTICAL_BATTERIES = ("wilson_uniformity", "typical_time", "capacity_agreement", "line_calibration")
TREND_BATTERIES = ("uniform_hit_scaling", "lerw_concentration")
SUITES = {
    "exact": EXACT_BATTERIES,
    "statistical": STATISTICAL_BATTERIES,
    "trend": TREND_BATTERIES,
    "all": EXACT_BATTERIES + STATISTICAL_BATTERIES + TREND_BATTERIES,
}

# battery defaults are the acceptance sizes; "smoke" runs in seconds
SMOKE_SIZES = {
    "loop_erasure": {"count": 200},
    "cut_times": {"count": 100},
    "resistance": {"max_line": 64, "max_depth": 12, "fixtures": 20},
    "covering": {"instances": 50},
    "geodesic_inequality": {"trees": 3, "max_n": 8, "L": 6},
    "weighted_metric": {"trees": 3, "triples": 500, "L": 6},
    "wilson_uniformity": {"samples": 20000},
    "typical_time": {"trials": 20000, "lengths": (4, 8), "tail_trials": 2000},
    "capacity_agreement": {"sets": 4, "trials": 1000, "horizon": 2000, "green_trials": 1000, "green_horizon": 2000},
    "line_calibration": {"exit_n": 16, "exit_trials": 4000, "grid": (64, 128, 256, 512), "walks": 2000},
    "uniform_hit_scaling": {"radii": (2, 4), "trials": 100, "cap_trials": 500},
    "lerw_concentration": {"lengths": (64, 256), "walks": 5},
}
SCALES = ("acceptance", "smoke")


def oracle_check(suite="exact", seed=SEED, erase=paths.erase_loops, scale="acceptance"):
    """Run a suite of batteries; ``erase`` allows mutant injection.

    ``scale="acceptance"`` runs every battery at its full size;
    ``scale="smoke"`` uses :data:`SMOKE_SIZES`.
    """
    if suite not in SUITES:
        raise ConfigError(f"unknown oracle suite {suite!r}")
    if scale not in SCALES:
        raise ConfigError(f"unknown oracle scale {scale!r}")
    base = lattice.RngSeed(seed, ORACLE_STREAM)
    runners = {
        "loop_erasure": lambda **kw: battery_loop_erasure(base.child(0), erase=erase, **kw),
        "cut_times": lambda **kw: battery_cut_times(base.child(1), erase=erase, **kw),
        "resistance": lambda **kw: battery_resistance(base.child(2), **kw),
        "covering": lambda **kw: battery_covering(base.child(3), **kw),
        "geodesic_inequality": lambda **kw: battery_geodesic_inequality(base.child(4), **kw),
        "weighted_metric": lambda **kw: battery_weighted_metric(base.child(5), **kw),
        "wilson_uniformity": lambda **kw: battery_wilson_uniformity(base.child(6), **kw),
        "typical_time": lambda **kw: battery_typical_time(base.child(7), **kw),
        "capacity_agreement": lambda **kw: battery_capacity_agreement(base.child(8), **kw),
        "line_calibration": lambda **kw: battery_line_calibration(base.child(9), **kw),
        "uniform_hit_scaling": lambda **kw: battery_uniform_hit_scaling(base.child(10), **kw),
        "lerw_concentration": lambda **kw: battery_lerw_concentration(base.child(11), **kw),
    }
    batteries = []
    for name in SUITES[suite]:
        sizes = SMOKE_SIZES[name] if scale == "smoke" else {}
        battery = runners[name](**sizes)
        logger.info(
            "battery %s: %s (%d checks, %d violations)",
            name,
            "pass" if battery.passed else "FAIL",
            battery.checks,
            battery.violations,
        )
        batteries.append(battery)
    return OracleReport(suite, batteries)


########################################################################################
## Command line
########################################################################################


def parse_points(text):
    """``"0,0,0,0;1,0,0,0"`` to a list of tuples."""
    try:
        return [tuple(int(c) for c in chunk.split(",")) for chunk in text.split(";") if chunk.strip()]
    except ValueError as err:
        raise ConfigError(f"cannot parse points {text!r}") from err


def _emit(df, args, default_name):
    fmt = args.format or "csv"
    out = FilePath(args.out) if args.out else FilePath(OUTPUT_DIR) / f"{default_name}.{fmt}"
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        out.write_text(json.dumps(_json_records(df), indent=2, sort_keys=True) + "\n")
    else:
        df.to_csv(out, index=False, float_format="%.10g", lineterminator="\n")
    logger.info("wrote %s", out)
    return out


def _load_tree(filepath):
    try:
        return wilson.SpanningTree.load(filepath)
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot load tree {filepath}: {err}") from err


def cmd_sample_tree(args):
    seed = lattice.RngSeed(args.seed, walk_stats.TREE_STREAM)
    if args.zero_wired:
        sampled, _ = wilson.zero_wired_box(args.d, args.L, seed)
    else:
        sampled = wilson.wired_box_ust(args.d, args.L, seed)
    kind = "zw" if args.zero_wired else "wired"
    out = FilePath(args.out) if args.out else FilePath(DATA_DIR) / f"tree_{kind}_d{args.d}_L{args.L}_s{args.seed}.ust"
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.text:
        out.write_text(sampled.to_text())
    else:
        sampled.save(out)
    logger.info("wrote %s", out)
    return EXIT_OK


def cmd_analyze(args):
    sampled = _load_tree(args.tree)
    v = sampled.origin if args.vertex is None else args.vertex
    b = tree_tools.ball(sampled, v, args.n)
    table = pd.DataFrame(
        {
            "k": np.arange(args.n + 1),
            "sphere": [level.size for level in b.levels],
            "volume": b.volumes(),
        }
    )
    if b.sphere.size:
        counts = tree_tools.geodesic_counts(sampled, v, args.n)
        table["N"] = np.concatenate([[1], counts])
        table["resistance"] = tree_tools.resistance_to_sphere(sampled, v, args.n)
    if sampled.coords is not None:
        stats = tree_tools.extrinsic_stats(sampled, v, args.n)
        table["max_displacement"] = stats.max_displacement
        table["containment_radius"] = stats.containment_radius
    _emit(table, args, f"analyze_n{args.n}")
    return EXIT_OK


def cmd_walk(args):
    sampled = _load_tree(args.tree)
    start = sampled.origin if sampled.coords is not None else sampled.root
    checkpoints = sorted(set(args.checkpoints or []) | {args.steps})
    seed = lattice.RngSeed(args.seed, walk_stats.WALK_STREAM)
    rows = []
    for w in range(args.walks):
        for s in walk_stats.run_walk_checkpoints(sampled, start, checkpoints, seed.child(w)):
            rows.append({"walk": w, **s.to_dict()})
    _emit(pd.DataFrame(rows), args, f"walk_{args.steps}")
    return EXIT_OK


def cmd_capacity(args):
    points = parse_points(args.points)
    if not points:
        raise ConfigError("no points given")
    seed = lattice.RngSeed(args.seed, TREND_STREAM)
    report = {"points": [list(p) for p in points]}
    if args.method in ("escape", "both"):
        est = capacity.capacity_escape_mc(points, args.trials, args.horizon, seed.child(0))
        report["escape_mc"] = est.to_dict()
    if args.method in ("variational", "both"):
        table = capacity.GreenTable(len(points[0]), args.trials, args.horizon, seed.child(1))
        est, measure = capacity.capacity_variational(points, table)
        report["variational"] = est.to_dict()
        report["equilibrium_weights"] = measure.weights.tolist()
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        FilePath(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _sweep_config(args):
    cfg = SweepConfig.from_file(args.config) if args.config else SweepConfig()
    return cfg.with_overrides(seed=args.seed, out=args.out, format=args.format, threads=args.threads)


def cmd_sweep(args):
    cfg = _sweep_config(args)
    rows, fits = run_sweep(cfg)
    for filepath in write_results(cfg, rows, fits):
        logger.info("wrote %s", filepath)
    return EXIT_OK


def cmd_oracle_check(args):
    report = oracle_check(
        args.suite, seed=args.seed if args.seed is not None else SEED, scale=args.scale
    )
    out = FilePath(args.out) if args.out else FilePath(OUTPUT_DIR) / f"oracle_{args.suite}_{args.scale}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True, default=str) + "\n")
    logger.info("wrote %s", out)
    return EXIT_OK if report.passed else EXIT_ORACLE


def cmd_fit(args):
    try:
        rows = pd.read_csv(args.rows)
    except OSError as err:
        raise ConfigError(f"cannot read rows {args.rows}: {err}") from err
    fits = fit_all(rows, weighted=args.weighted, model=args.model)
    _emit(fits, args, f"{FilePath(args.rows).stem}_fits")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON sweep configuration")
    common.add_argument("--seed", type=int, default=None, help=f"master seed (default {SEED})")
    common.add_argument("--out", help="output file")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--threads", type=int, default=None, help="worker processes")
    common.add_argument("--log-level", default=LOG_LEVEL)

    parser = argparse.ArgumentParser(
        description="Uniform spanning tree and loop-erased walk experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-tree", parents=[common], help="sample a box UST and save it")
    p.add_argument("--d", type=int, default=DIMENSION)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--zero-wired", action="store_true")
    p.add_argument("--text", action="store_true", help="write the text format")
    p.set_defaults(func=cmd_sample_tree)

    p = sub.add_parser("analyze", parents=[common], help="ball, resistance and geodesic table")
    p.add_argument("--tree", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--vertex", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("walk", parents=[common], help="random walks on a saved tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--walks", type=int, default=1)
    p.add_argument("--checkpoints", type=int, nargs="*")
    p.set_defaults(func=cmd_walk)

    p = sub.add_parser("capacity", parents=[common], help="capacity of a finite point set")
    p.add_argument("--points", required=True, help='e.g. "0,0,0,0;1,0,0,0"')
    p.add_argument("--method", choices=("escape", "variational", "both"), default="escape")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--horizon", type=int, default=20000)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("sweep", parents=[common], help="run a configured sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", parents=[common], help="run the oracle batteries")
    p.add_argument("--suite", choices=tuple(SUITES), default="exact")
    p.add_argument("--scale", choices=SCALES, default="acceptance")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("fit", parents=[common], help="fit exponents to sweep rows")
    p.add_argument("--rows", required=True)
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--model", choices=tuple(MIN_FIT_N), default=None, help="default: per statistic")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    misc_tools.configure_logging(args.log_level)
    if args.seed is None and args.command != "sweep":
        args.seed = SEED
    try:
        return args.func(args)
    except ConfigError as err:
        logger.error("configuration error: %s", err)
        return EXIT_CONFIG
    except (ResourceGuardError, MemoryError, OverflowError) as err:
        logger.error("resource guard: %s", err)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
