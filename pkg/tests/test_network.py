import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlroa.errors import InsufficientData, NonPositiveSlope, ScanFormatError
from tlroa.network import (FitResult, ImpedanceScan, PlantAggregation, Referral, aggregate, fit_impedance,
                           read_scan_csv, referred_to_hv, referred_to_lv, write_scan_csv)


def _fit_quiet(scan, *a):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_impedance(scan, *a)


def test_recovers_synthetic_rl():
    scan = ImpedanceScan.synthetic_rl(98.5e-6, 2.17e-6, np.arange(1.0, 101.0))
    fit = _fit_quiet(scan)
    assert fit.r_Lg == pytest.approx(98.5e-6, rel=1e-9)
    assert fit.L_g == pytest.approx(2.17e-6, rel=1e-9)
    assert fit.n_points == 11
    assert fit.residual < 1e-15


def test_corner_frequency_and_resistance_read_at_it():
    # reactance line crosses zero at 20 Hz; resistance varies with frequency
    f = np.arange(10.0, 91.0)
    z = (1e-3 + 1e-5 * f) + 1j * 0.01 * (f - 20.0)
    fit = fit_impedance(ImpedanceScan(f, z))
    assert fit.f_corner == pytest.approx(20.0)
    assert fit.r_Lg == pytest.approx(1e-3 + 1e-5 * 20.0)
    assert fit.L_g == pytest.approx(0.01 / (2 * math.pi))


def test_corner_outside_scan_warns():
    scan = ImpedanceScan.synthetic_rl(1e-4, 2e-6, np.arange(40.0, 61.0))
    with pytest.warns(RuntimeWarning, match="outside scan range"):
        fit_impedance(scan)


def test_too_few_points():
    scan = ImpedanceScan.synthetic_rl(1e-4, 2e-6, np.array([40.0, 50.0, 60.0]))
    with pytest.raises(InsufficientData):
        fit_impedance(scan)


def test_falling_reactance_rejected():
    f = np.arange(45.0, 56.0)
    with pytest.raises(NonPositiveSlope):
        fit_impedance(ImpedanceScan(f, 1e-3 + 1j * (1.0 - 0.01 * f)))


@settings(max_examples=30, deadline=None)
@given(r=st.floats(1e-6, 1e-2), L=st.floats(1e-7, 1e-3), noise=st.floats(0, 1e-3))
def test_fit_tolerates_small_noise(r, L, noise):
    f = np.arange(45.0, 55.5, 0.5)
    rng = np.random.default_rng(1)
    x = 2 * np.pi * f * L
    z = r + 1j * x * (1 + noise * rng.standard_normal(f.size))
    fit = _fit_quiet(ImpedanceScan(f, z))
    assert fit.L_g == pytest.approx(L, rel=20 * noise + 1e-9)


def test_scan_csv_round_trip(tmp_path):
    scan = ImpedanceScan.synthetic_rl(98.5e-6, 2.17e-6, np.arange(40.0, 61.0))
    p = tmp_path / "scan.csv"
    write_scan_csv(scan, p)
    back = read_scan_csv(p)
    np.testing.assert_array_equal(back.freqs, scan.freqs)
    np.testing.assert_array_equal(back.z, scan.z)


def test_scan_csv_missing_header(tmp_path):
    p = tmp_path / "scan.csv"
    p.write_text("50,1e-4,6e-4\n51,1e-4,6.1e-4\n")
    with pytest.raises(ScanFormatError, match="f_hz,re_ohm,im_ohm"):
        read_scan_csv(p)


def test_scan_csv_bad_row_reports_line(tmp_path):
    p = tmp_path / "scan.csv"
    p.write_text("f_hz,re_ohm,im_ohm\n50,1e-4,6e-4\n51,abc,6e-4\n")
    with pytest.raises(ScanFormatError, match=r":3:"):
        read_scan_csv(p)


def test_aggregation_parallel_turbines():
    agg = aggregate(PlantAggregation(15, 2.49e-4, 18.45e-6, 1.0, 0.1))
    assert agg.r_Ls_eq == pytest.approx(16.6e-6)
    assert agg.L_s_eq == pytest.approx(1.23e-6)
    assert (agg.id_eq, agg.iq_eq) == pytest.approx((15.0, 1.5))


def test_referral_round_trip():
    fit = FitResult(1e-3, 2e-5, 0.0, 1.0, (45, 55), 0.0)
    lv = referred_to_lv(fit, 50.0)
    assert lv.r == pytest.approx(1e-3 / 2500)
    hv = referred_to_hv(Referral(lv.r, lv.L, 1.0), 50.0)
    assert (hv.r, hv.L, hv.v) == pytest.approx((1e-3, 2e-5, 50.0))
