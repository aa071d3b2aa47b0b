import numpy as np
import pytest

from nvltm.analysis import detect_peaks, finesse_from_trace
from nvltm.constants import photon_energy
from nvltm.physics import OdmrDrive, Physics, magnet_mixing_rate, operating_point, small_signal_gain
from nvltm.simulate import (
    ScanConfig,
    _odmr_point,
    add_detection_noise,
    amplification_map,
    contrast_map,
    drive_quadrature,
    grid_map,
    magnet_toggle_timeseries,
    net_gain_vs_pump,
    noiseless,
    odmr_spectrum,
    pl_power,
    synthesize_trace,
)

PHYSICS = Physics()


def square(x):
    return x * x


def test_scan_holds_eight_resonances():
    trace = synthesize_trace(noiseless(ScanConfig()), PHYSICS)
    assert int(3e-6 // 355e-9) == 8
    assert len(trace.truth["peak_positions"]) == 8
    assert len(detect_peaks(trace)) == 8


def test_noiseless_unpumped_trace_round_trip():
    trace = synthesize_trace(noiseless(ScanConfig()), PHYSICS)
    height = operating_point(PHYSICS, 0.0, 0.3).transmitted
    res = finesse_from_trace(trace)
    # fitted peak heights, since samples straddle the exact maxima
    assert np.allclose([f.amplitude + f.baseline for f in res.peaks], height, rtol=1e-4)
    assert trace.detected_power.max() <= height * (1 + 1e-5)
    assert res.finesse == pytest.approx(PHYSICS.base_finesse, rel=1e-6)


def test_resonance_spacing_independent_of_pump():
    fsr = [finesse_from_trace(synthesize_trace(noiseless(ScanConfig(pump_power=p)), PHYSICS)).fsr
           for p in (0.0, 1.0, 2.5)]
    assert np.allclose(fsr, 355e-9, rtol=1e-6)


def test_trace_is_deterministic_per_seed():
    a = synthesize_trace(ScanConfig(rng_seed=7), PHYSICS).detected_power
    b = synthesize_trace(ScanConfig(rng_seed=7), PHYSICS).detected_power
    c = synthesize_trace(ScanConfig(rng_seed=8), PHYSICS).detected_power
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_scan_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(scan_amplitude=0.0)
    with pytest.raises(ValueError):
        ScanConfig(samples_per_scan=99)
    with pytest.raises(ValueError):
        ScanConfig(channel="sideways")


def test_detection_noise_variance():
    rng = np.random.default_rng(0)
    power = np.full(200_000, 1e-3)
    e, bw, nep = photon_energy(710e-9), 5.55e6, 1e-11
    noisy = add_detection_noise(power, e, bw, nep, rng)
    expected = 1e-3 * e * bw + nep**2 * bw
    assert np.var(noisy) == pytest.approx(expected, rel=0.02)
    assert np.mean(noisy) == pytest.approx(1e-3, abs=5 * np.sqrt(expected / power.size))


def test_shot_noise_scales_as_root_power():
    rng = np.random.default_rng(1)
    e, bw = photon_energy(710e-9), 5.55e6
    powers = np.geomspace(1e-5, 1e-3, 5)
    sd = [np.std(add_detection_noise(np.full(20_000, p), e, bw, 0.0, rng)) for p in powers]
    assert np.allclose(sd / np.sqrt(powers * e * bw), 1.0, rtol=0.05)


def test_grid_map_keeps_order_across_workers():
    points = list(range(37))
    assert grid_map(square, points, jobs=2) == grid_map(square, points, jobs=1)
    assert grid_map(square, points, jobs=1) == [p * p for p in points]


def test_zero_pump_and_zero_field_maps():
    seeds = np.linspace(0.01, 0.65, 4)
    amp = amplification_map([0.0], seeds, PHYSICS)
    assert np.all(amp.values == 0.0)
    con = contrast_map([0.5, 2.0], seeds, 0.0, PHYSICS)
    assert np.all(con.values == 0.0)


def test_net_gain_without_pump_is_zero():
    assert net_gain_vs_pump([0.0], PHYSICS)[0] == 0.0


def test_timeseries_without_field_has_no_contrast():
    ts = magnet_toggle_timeseries(90, (30, 60), PHYSICS.with_(magnet_field=0.0), 2.0, 0.05)
    assert ts["pl_contrast"] == 0.0
    assert ts["cavity_contrast"] == 0.0
    with pytest.raises(ValueError):
        magnet_toggle_timeseries(90, (60, 30), PHYSICS)


def test_zero_microwave_drive_gives_flat_spectrum():
    ph = PHYSICS.with_(odmr_cavity=OdmrDrive(rate=0.0))
    spec = odmr_spectrum(np.linspace(2.85e9, 2.89e9, 21), ph, "cavity", pump_power=1.0,
                         seed_power=0.01)
    assert np.ptp(spec.power) == 0.0


def test_half_grid_shortcut_matches_direct_evaluation():
    freqs = np.linspace(2.86e9, 2.88e9, 21)
    ph = PHYSICS.with_(odmr_cavity=OdmrDrive(rate=3e6, linewidth=3e6, splitting=3e6))
    spec = odmr_spectrum(freqs, ph, "cavity", pump_power=1.0, seed_power=0.01)
    d = ph.odmr_cavity
    nodes, weights = drive_quadrature(d.spread)
    ref = operating_point(ph, 1.0, 0.01)
    direct = [_odmr_point(ph, "cavity", d, (2.87e9 - 1.5e6, 2.87e9 + 1.5e6), nodes, weights,
                          1.0, 0.01, "transmitted", ref, f) for f in freqs]
    assert np.array_equal(spec.power, np.array(direct))
    # shifted grid bypasses the shortcut
    shifted = odmr_spectrum(freqs + 1e5, ph, "cavity", pump_power=1.0, seed_power=0.01)
    assert shifted.power.shape == freqs.shape


def test_drive_quadrature_moments():
    nodes, weights = drive_quadrature(0.3)
    assert weights.sum() == pytest.approx(1.0)
    # mean relative power is 1 + spread^2 for a Gaussian amplitude; the
    # outermost node is clipped at zero amplitude
    assert weights @ nodes == pytest.approx(1.09, rel=1e-5)


def test_calibrated_trends(calibrated):
    _, ph = calibrated
    seed = 0.01
    amp = amplification_map([1.5, 3.0], [seed], ph).values[:, 0]
    assert amp[1] < amp[0]
    assert net_gain_vs_pump([1.0], ph)[0] > net_gain_vs_pump([3.5], ph)[0]


def test_magnet_lowers_pumped_finesse(calibrated):
    _, ph = calibrated
    ph = ph.with_(base_finesse=958.0)
    off = operating_point(ph, 2.0, 0.3)
    on = operating_point(ph, 2.0, 0.3, magnet_mixing_rate(ph))
    assert on.finesse < 958.0 < off.finesse


def test_cavity_contrast_exceeds_pl_contrast(calibrated):
    # sampled over the measured regime: finesse 900-1200, pump below the
    # gain zero crossing, fields and seeds spanning the experiment
    _, ph = calibrated
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(60):
        pump, seed = rng.uniform(1.0, 3.0), rng.uniform(0.01, 0.65)
        p = ph.with_(base_finesse=rng.uniform(900, 1200))
        b = rng.uniform(0.05, 0.4)
        if small_signal_gain(p, pump) <= 0:
            continue
        checked += 1
        off = operating_point(p, pump, seed)
        on = operating_point(p, pump, seed, magnet_mixing_rate(p, b))
        cavity = 1 - on.transmitted / off.transmitted
        pl = 1 - pl_power(p, on, off) / pl_power(p, off)
        assert cavity > pl, (pump, seed, p.base_finesse, b)
    assert checked > 30


def test_magnet_scales_both_output_channels_alike(calibrated):
    _, ph = calibrated
    for pump, seed in [(1.0, 0.05), (2.0, 0.3), (3.4, 1.14)]:
        off = operating_point(ph, pump, seed)
        on = operating_point(ph, pump, seed, magnet_mixing_rate(ph))
        t, r = on.transmitted / off.transmitted, on.reflected / off.reflected
        assert t == pytest.approx(r, rel=0.01)


def test_maps_are_noise_free_and_repeatable(calibrated):
    _, ph = calibrated
    pumps, seeds = [0.5, 2.0], [0.01, 0.3]
    a = contrast_map(pumps, seeds, ph.magnet_field, ph).values
    assert np.array_equal(a, contrast_map(pumps, seeds, ph.magnet_field, ph, jobs=2).values)
