import logging

import numpy as np
import pytest

import misc_tools


def test_mean_confidence_interval():
    """
    For [1, 2, 3] the mean is 2, the sample sd is 1 and the standard error is
    1 / sqrt(3) = 0.57735. The 97.5% Student-t quantile with 2 degrees of
    freedom is 4.302653, so the half width is 4.302653 * 0.57735 = 2.48414.
    """
    mean, lo, hi, se = misc_tools.mean_confidence_interval([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert se == pytest.approx(0.577350, abs=1e-6)
    assert lo == pytest.approx(2.0 - 2.484138, abs=1e-5)
    assert hi == pytest.approx(2.0 + 2.484138, abs=1e-5)


def test_mean_confidence_interval_single_value():
    mean, lo, hi, se = misc_tools.mean_confidence_interval([5.0])
    assert mean == lo == hi == 5.0
    assert np.isnan(se)
    with pytest.raises(ValueError):
        misc_tools.mean_confidence_interval([])


def test_median_standard_error():
    """sqrt(pi / 2) * 1 / sqrt(3) = 1.253314 * 0.577350 = 0.723601"""
    assert misc_tools.median_standard_error([1.0, 2.0, 3.0]) == pytest.approx(0.723601, abs=1e-6)
    assert np.isnan(misc_tools.median_standard_error([1.0]))


def test_chi_square_gof():
    assert misc_tools.chi_square_gof([50, 50], [0.5, 0.5]) == pytest.approx(1.0)
    # 90 against an expected 50 gives chi2 = 2 * 40^2 / 50 = 64
    assert misc_tools.chi_square_gof([90, 10], [0.5, 0.5]) < 1e-10
    with pytest.raises(ValueError):
        misc_tools.chi_square_gof([1, 2, 3], [0.5, 0.5])


def test_config_hash_ignores_key_order():
    a = misc_tools.config_hash({"d": 4, "L": 16, "grid": [1, 2]})
    b = misc_tools.config_hash({"grid": [1, 2], "L": 16, "d": 4})
    c = misc_tools.config_hash({"grid": [1, 2], "L": 17, "d": 4})
    assert a == b
    assert a != c
    assert len(misc_tools.config_hash({"a": 1}, length=20)) == 20


def test_weighted_quantile():
    """
    Equal weights on [1, 2, 3, 4] put the cumulative midpoints at
    0.125, 0.375, 0.625, 0.875, so the median interpolates to 2.5.

    With weights [3, 1, 1, 1] the midpoints are 1.5/6, 3.5/6, 4.5/6, 5.5/6 and
    the median 0.5 falls between 0.25 and 0.5833 at fraction 0.75: 1.75.
    """
    values = [1.0, 2.0, 3.0, 4.0]
    assert misc_tools.weighted_quantile(values, 0.5) == pytest.approx(2.5)
    assert misc_tools.weighted_quantile(values, 0.5, sample_weight=[3, 1, 1, 1]) == pytest.approx(1.75)
    with pytest.raises(ValueError):
        misc_tools.weighted_quantile(values, 1.5)


def test_configure_logging_installs_one_handler():
    root = logging.getLogger()
    saved_handlers, saved_level = list(root.handlers), root.level
    try:
        misc_tools.configure_logging("warning")
        misc_tools.configure_logging("debug")
        assert len(root.handlers) == 1
        assert root.level == logging.DEBUG
    finally:
        for handler in list(root.handlers):
            root.removeHandler(handler)
        for handler in saved_handlers:
            root.addHandler(handler)
        root.setLevel(saved_level)
