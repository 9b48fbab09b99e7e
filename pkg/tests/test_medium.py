import numpy as np
import pytest

from specklepair.errors import AliasingError, DimensionError
from specklepair.field import FieldGrid, PhaseMask
from specklepair.medium import (
    DiffuserScreen,
    Geometry,
    SignalTrain,
    TransmissionMatrix,
    forward_train,
    ground_truth_tm,
    make_diffuser,
    pattern_fields,
)

SMALL = Geometry(grid=32, pitch_mm=1 / 32, slm_roi=16, macropixel=4, camera_roi=8)


def test_geometry_derived_quantities():
    g = Geometry()
    assert g.n_macro == 16 and g.n_inputs == 256 and g.n_outputs == 1024
    assert g.freq_pitch == pytest.approx(1.0)
    assert g.nu_to_camera_index(3, -3) == (13, 19)
    assert g.camera_index_to_nu(13, 19) == (3.0, -3.0)


def test_geometry_validation():
    with pytest.raises(DimensionError):
        Geometry(grid=32, slm_roi=64)
    with pytest.raises(DimensionError):
        Geometry(grid=128, slm_roi=60, macropixel=8)


def test_diffuser_phase_marginal_is_uniform():
    s = make_diffuser(0.02, 128, 0.01, seed=3)
    assert s.phases.min() >= 0 and s.phases.max() < 2 * np.pi
    hist, _ = np.histogram(s.phases, bins=8, range=(0, 2 * np.pi))
    assert np.all(np.abs(hist / hist.mean() - 1) < 0.15)


def test_diffuser_correlation_length_is_phasor_fwhm():
    n, pitch, ell = 256, 0.01, 0.08
    acc = np.zeros(n)
    for seed in range(6):
        u = np.exp(1j * make_diffuser(ell, n, pitch, seed=seed).phases)
        # circular autocorrelation along x, averaged over rows
        acc += np.real(np.fft.ifft(np.abs(np.fft.fft(u, axis=1)) ** 2, axis=1).mean(axis=0))
    acc /= acc[0]
    lag = np.arange(n // 2) * pitch
    half = np.interp(0.5, acc[: n // 2][::-1], lag[::-1])
    assert 2 * half == pytest.approx(ell, rel=0.1)


def test_diffuser_reproducible_and_seed_dependent():
    a = make_diffuser(0.03, 64, 0.01, seed=5)
    b = make_diffuser(0.03, 64, 0.01, seed=5)
    c = make_diffuser(0.03, 64, 0.01, seed=6)
    np.testing.assert_array_equal(a.phases, b.phases)
    assert not np.array_equal(a.phases, c.phases)


def test_diffuser_aliasing_and_infinite_length():
    with pytest.raises(AliasingError):
        make_diffuser(0.015, 64, 0.01)
    flat = make_diffuser(np.inf, 32, 0.01, seed=1)
    assert np.ptp(flat.phases) == 0


def test_tm_shape_checked():
    with pytest.raises(DimensionError):
        TransmissionMatrix(np.zeros((10, 16)), SMALL)


def test_train_matches_field_level_composition():
    g = SMALL
    rng = np.random.default_rng(0)
    screen = make_diffuser(0.07, g.grid, g.pitch_mm, seed=2)
    mask = PhaseMask(rng.uniform(0, 2 * np.pi, (g.n_macro, g.n_macro)), g.macropixel)
    inp = rng.normal(size=(g.grid, g.grid)) + 1j * rng.normal(size=(g.grid, g.grid))
    ref = forward_train(FieldGrid(inp, g.pitch_mm), mask, screen)
    out = SignalTrain(g, mask, screen).apply(inp)
    np.testing.assert_allclose(out, ref.values, atol=1e-12)
    assert ref.domain == "frequency"


def test_forward_train_conserves_power():
    g = SMALL
    screen = make_diffuser(0.07, g.grid, g.pitch_mm, seed=4)
    inp = FieldGrid(np.ones((g.grid, g.grid)), g.pitch_mm)
    out = forward_train(inp, PhaseMask.zeros(g.n_macro, g.macropixel), screen)
    assert out.power() == pytest.approx(inp.power(), rel=1e-12)


def test_full_plane_tm_columns_are_orthogonal():
    # the train is unitary and macropixels are disjoint, so T^H T is diagonal
    g = SMALL
    screen = make_diffuser(0.07, g.grid, g.pitch_mm, seed=1)
    t = ground_truth_tm(screen, g, full_plane=True)
    gram = t.conj().T @ t
    expected = g.macropixel**2 * g.grid**2 * g.pitch_mm**4
    np.testing.assert_allclose(gram, expected * np.eye(g.n_inputs), atol=1e-10 * expected)


def test_ground_truth_tm_is_linear_map_of_train():
    g = SMALL
    screen = make_diffuser(0.07, g.grid, g.pitch_mm, seed=8)
    tm = ground_truth_tm(screen, g, chunk=5)
    rng = np.random.default_rng(3)
    pattern = np.exp(1j * rng.uniform(0, 2 * np.pi, g.n_inputs))
    ys, xs = g.camera_slice()
    direct = SignalTrain(g, None, screen).apply(pattern_fields(g, pattern[None])[0])[ys, xs]
    np.testing.assert_allclose(tm.t @ pattern, direct.ravel(), atol=1e-12)
    assert tm.kind == "ground_truth" and tm.seed == 8


def test_transparent_screen_focuses_plane_wave_on_axis():
    g = SMALL
    out = np.abs(SignalTrain(g, None, DiffuserScreen.transparent(g.grid, g.pitch_mm)).apply(g.roi_support())) ** 2
    assert np.unravel_index(out.argmax(), out.shape) == (g.grid // 2, g.grid // 2)


def test_speckle_intensity_is_negative_exponential():
    # fully developed speckle: contrast std/mean = 1 and P(I > I_mean) = 1/e
    g = Geometry()
    ys, xs = g.camera_slice()
    samples = []
    for seed in range(4):
        screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=seed)
        far = SignalTrain(g, None, screen).apply(g.roi_support().astype(complex))
        samples.append((np.abs(far[ys, xs]) ** 2).ravel())
    i = np.concatenate(samples)
    i = i / i.mean()
    assert i.std() == pytest.approx(1.0, abs=0.1)
    assert np.mean(i > 1.0) == pytest.approx(np.exp(-1), abs=0.04)
