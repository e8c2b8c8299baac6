"""Collection of miscelaneous tools useful in a variety of situations
(not specific to any one estimator in the project)
"""

import hashlib
import json
import logging

import numpy as np
from scipy import stats

########################################################################################
## Logging and bookkeeping
########################################################################################

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level="INFO"):
    """Install a single stream handler on the root logger.

    Library modules only ever call ``logging.getLogger(__name__)``; the command
    line entry point (and ``dodo.py``) decide where records go.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper() if isinstance(level, str) else level)
    return root


def canonical_json(obj):
    """Serialize with sorted keys and no whitespace so equal configs hash equally.

    Examples
    --------
    >>> canonical_json({"b": 1, "a": [1, 2]})
    '{"a":[1,2],"b":1}'
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(obj, length=12):
    """Short sha256 digest of the canonical JSON form of `obj`.

    Examples
    --------
    >>> config_hash({"a": 1}) == config_hash({"a": 1})
    True
    >>> len(config_hash({"a": 1}))
    12
    """
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:length]


########################################################################################
## Statistics helpers
########################################################################################


def mean_confidence_interval(values, level=0.95):
    """Mean with a Student-t confidence interval.

    Parameters
    ----------
    values : array-like
        Independent replicate values (e.g. one per tree).
    level : float, default=0.95
        Two-sided coverage.

    Returns
    -------
    tuple
        ``(mean, ci_low, ci_high, standard_error)``. With a single replicate
        the interval collapses onto the mean and the standard error is ``nan``.

    Examples
    --------
    >>> m, lo, hi, se = mean_confidence_interval([1.0, 2.0, 3.0])
    >>> m
    2.0
    >>> bool(lo < 2.0 < hi)
    True
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise ValueError("mean_confidence_interval needs at least one value")
    mean = float(values.mean())
    if n == 1:
        return mean, mean, mean, float("nan")
    se = float(values.std(ddof=1) / np.sqrt(n))
    half = float(stats.t.ppf(0.5 + level / 2.0, df=n - 1)) * se
    return mean, mean - half, mean + half, se


def median_standard_error(values):
    """Large-sample standard error of a sample median, ``sqrt(pi/2) * sd / sqrt(n)``.

    Exact for normal data and adequate for the unimodal walk statistics it is
    applied to.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float("nan")
    return float(np.sqrt(np.pi / 2.0) * values.std(ddof=1) / np.sqrt(values.size))


def chi_square_gof(observed, expected_probs):
    """Chi-square goodness of fit p-value of counts against probabilities.

    Examples
    --------
    >>> round(chi_square_gof([100, 100, 100], [1/3, 1/3, 1/3]), 6)
    1.0
    """
    observed = np.asarray(observed, dtype=float)
    expected_probs = np.asarray(expected_probs, dtype=float)
    if observed.shape != expected_probs.shape:
        raise ValueError("observed and expected_probs must have the same shape")
    expected = expected_probs / expected_probs.sum() * observed.sum()
    return float(stats.chisquare(observed, expected).pvalue)


def weighted_quantile(
    values, quantiles, sample_weight=None, values_sorted=False, old_style=False
):
    """Very close to numpy.percentile, but supports weights.

    Used to pool per-walk values across trees with weight ``1/walks`` per tree,
    so every tree counts equally even when boundary discards leave trees with
    different numbers of accepted walks.

    Parameters
    ----------
    values:
        numpy.array with data
    quantiles :
        array-like with many quantiles needed
    sample_weight :
        array-like of the same length as `array`
    values_sorted : bool, Default False
        if True, then will avoid sorting of initial array
    old_style:
        if True, will correct output to be consistent with numpy.percentile.

    Returns
    -------
    numpy.array
        with computed quantiles.

    Notes
    -----
    quantiles should be in [0, 1]!

    FROM: https://stackoverflow.com/a/29677616
    """
    values = np.array(values, dtype=float)
    quantiles = np.array(quantiles)
    if sample_weight is None:
        sample_weight = np.ones(len(values))
    sample_weight = np.array(sample_weight, dtype=float)
    if not (np.all(quantiles >= 0) and np.all(quantiles <= 1)):
        raise ValueError("quantiles should be in [0, 1]")

    if not values_sorted:
        sorter = np.argsort(values, kind="stable")
        values = values[sorter]
        sample_weight = sample_weight[sorter]

    weighted_quantiles = np.cumsum(sample_weight) - 0.5 * sample_weight
    if old_style:
        # To be convenient with numpy.percentile
        weighted_quantiles -= weighted_quantiles[0]
        weighted_quantiles /= weighted_quantiles[-1]
    else:
        weighted_quantiles /= np.sum(sample_weight)
    return np.interp(quantiles, weighted_quantiles, values)
