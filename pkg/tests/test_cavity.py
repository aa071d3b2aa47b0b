import numpy as np
import pytest

from nvltm import cavity as cav
from nvltm.constants import C_LIGHT
from nvltm.errors import AboveThresholdError, InvalidGeometryError, StabilityError

GEOM = cav.CavityGeometry()


def q_parameter_waist(roc, length, wavelength):
    """Waist from the self-consistent complex beam parameter of one round trip.

    Reference plane at the cavity centre, where the symmetric mode has
    its waist and q is purely imaginary.
    """
    def prop(d):
        return np.array([[1.0, d], [0.0, 1.0]])

    mirror = np.array([[1.0, 0.0], [-2.0 / roc, 1.0]])
    (a, b), (c, d) = prop(length / 2) @ mirror @ prop(length) @ mirror @ prop(length / 2)
    # q = (a q + b) / (c q + d)  ->  c q^2 + (d - a) q - b = 0
    roots = np.roots([c, d - a, -b])
    q = roots[np.argmax(roots.imag)]
    assert abs(q.real) < 1e-9 * abs(q)
    return np.sqrt(wavelength * q.imag / np.pi)


def test_mode_waist_matches_reported_value():
    assert cav.mode_waist(GEOM) == pytest.approx(52.0e-6, abs=0.5e-6)


@pytest.mark.parametrize("length", [2e-3, 12e-3, 29.5e-3, 45e-3, 59e-3])
def test_mode_waist_matches_q_parameter_solve(length):
    geom = cav.CavityGeometry(geometric_length=length)
    assert cav.mode_waist(geom) == pytest.approx(
        q_parameter_waist(30e-3, length, 710e-9), rel=1e-9)


def test_confocal_waist():
    geom = cav.CavityGeometry(geometric_length=30e-3)
    assert cav.mode_waist(geom) == pytest.approx(np.sqrt(710e-9 * 30e-3 / (2 * np.pi)), rel=1e-12)


def test_concentric_limit():
    near = cav.CavityGeometry(geometric_length=60e-3 * (1 - 1e-10))
    assert cav.mode_waist(near) < 1e-6
    with pytest.raises(StabilityError):
        cav.mode_waist(cav.CavityGeometry(geometric_length=60e-3))


def test_brewster_plate():
    bp = cav.optical_path_brewster(295e-6, 2.41)
    assert np.rad2deg(bp.brewster_angle) == pytest.approx(67.5, abs=0.1)
    assert np.rad2deg(bp.internal_angle) == pytest.approx(22.5, abs=0.1)
    assert bp.single_pass_path == pytest.approx(319e-6, abs=0.5e-6)
    # tilted-plate optical path excess, t (sqrt(n^2 - sin^2 theta) - cos theta)
    th = bp.brewster_angle
    excess = 295e-6 * (np.sqrt(2.41**2 - np.sin(th) ** 2) - np.cos(th))
    assert bp.optical_length_added == pytest.approx(excess, rel=1e-12)


def test_brewster_trivial_plates():
    vac = cav.optical_path_brewster(295e-6, 1.0)
    assert np.rad2deg(vac.brewster_angle) == pytest.approx(45.0)
    assert vac.optical_length_added == pytest.approx(0.0, abs=1e-18)
    assert all(v == 0 for v in cav.optical_path_brewster(0.0, 2.41)[2:])
    with pytest.raises(InvalidGeometryError):
        cav.optical_path_brewster(1e-3, 0.5)


def test_fsr_and_linewidth():
    fsr = cav.free_spectral_range(GEOM.optical_length())
    assert fsr == pytest.approx(12.0e9, rel=0.01)
    assert fsr / 800 == pytest.approx(15e6, abs=0.5e6)
    assert cav.free_spectral_range(0.15) == pytest.approx(1.0e9, rel=0.002)
    assert cav.free_spectral_range(2 * 0.15) == pytest.approx(cav.free_spectral_range(0.15) / 2)
    assert cav.free_spectral_range(0.15) == C_LIGHT / 0.3


def test_finesse_loss_relations():
    base = cav.loss_from_finesse(958)
    assert cav.finesse_from_losses(cav.LossBudget(base)) == pytest.approx(958, rel=1e-12)
    gain = np.pi * (1 / 958 - 1 / 1086)
    assert cav.finesse_from_losses(cav.LossBudget(base, gain)) == pytest.approx(1086, rel=1e-12)
    for g in np.linspace(-1e-3, 0.9 * base, 7):
        f = cav.finesse_from_losses(cav.LossBudget(base, g))
        assert np.pi / f + g == pytest.approx(base, rel=1e-12)
    with pytest.raises(AboveThresholdError):
        cav.finesse_from_losses(cav.LossBudget(base, base))


def test_net_gain_from_finesse_pair():
    assert cav.net_gain_from_finesse_pair(958, 1086, 295e-6) == pytest.approx(1.31, abs=1e-3)
    assert cav.net_gain_from_finesse_pair(900, 900, 295e-6) == 0.0
    assert cav.net_gain_from_finesse_pair(1086, 958, 295e-6) < 0


def test_lossless_impedance_matched_cavity_transmits_everything():
    geom = cav.CavityGeometry(mirror_reflectivity=0.999, mirror_transmission=0.001)
    out = cav.peak_output_powers(1e-3, geom, cav.LossBudget(1 - 0.999), 0.0)
    assert out.transmitted_peak == pytest.approx(1e-3, rel=1e-12)


def test_transmission_increases_with_gain():
    base = cav.loss_from_finesse(958)
    gains = np.linspace(0, 0.95 * base, 20)
    t = [cav.peak_output_powers(0.3, GEOM, cav.LossBudget(base, g), 1e-3).transmitted_peak
         for g in gains]
    assert np.all(np.diff(t) > 0)
    with pytest.raises(AboveThresholdError):
        cav.peak_output_powers(0.3, GEOM, cav.LossBudget(base, base), 1e-3)


@pytest.mark.parametrize("f0,fg", [(958, 1086), (710, 822), (600, 1200), (1144, 1300)])
def test_amplitude_follows_finesse_squared(f0, fg):
    base = cav.loss_from_finesse(f0)
    gain = base - cav.loss_from_finesse(fg)
    a0 = cav.peak_output_powers(0.3, GEOM, cav.LossBudget(base), 1e-3).transmitted_peak
    ag = cav.peak_output_powers(0.3, GEOM, cav.LossBudget(base, gain), 1e-3).transmitted_peak
    assert abs(ag / a0 - (fg / f0) ** 2) < 0.01 * (fg / f0) ** 2


def test_fig3a_pair_predicts_about_thirty_percent():
    predicted = (1086 / 958) ** 2 - 1
    assert predicted == pytest.approx(0.285, abs=1e-3)
    assert abs(predicted - 0.30) < 0.03


def test_geometry_validation():
    with pytest.raises(InvalidGeometryError):
        cav.CavityGeometry(mirror_reflectivity=-0.1)
    with pytest.raises(InvalidGeometryError):
        cav.CavityGeometry(mirror_reflectivity=0.9, mirror_transmission=0.2)
    assert GEOM.mirror_transmission == pytest.approx(1 - 0.9998 - cav.MIRROR_ABSORPTION)
