import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specklepair.errors import DimensionError, InputError
from specklepair.medium import Geometry, TransmissionMatrix, ground_truth_tm, make_diffuser
from specklepair.probe import (
    PHASE_STEPS,
    FocusTargetSet,
    canonical_basis,
    conjugation_mask,
    enhancement,
    focus_image,
    hadamard_basis,
    measure_tm,
    reconstruct_4phase,
)

SMALL = Geometry(grid=64, pitch_mm=1 / 64, slm_roi=32, macropixel=4, camera_roi=16)


def row_correlation(a, b):
    num = np.abs(np.sum(np.conj(a) * b, axis=1))
    return num / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_four_phase_reconstruction_is_exact(seed):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=20) + 1j * rng.normal(size=20)
    mode = rng.normal(size=20) + 1j * rng.normal(size=20)
    frames = [np.abs(ref + np.exp(1j * a) * mode) ** 2 for a in PHASE_STEPS]
    out = reconstruct_4phase(*frames)
    np.testing.assert_allclose(out, np.conj(ref) * mode, rtol=1e-12, atol=1e-12)


def test_reconstruction_input_checks():
    with pytest.raises(InputError):
        reconstruct_4phase(np.ones(3), np.ones(3), np.ones(3), np.ones(4))
    with pytest.raises(InputError):
        reconstruct_4phase(np.ones(3), -np.ones(3), np.ones(3), np.ones(3))


def test_hadamard_basis_is_orthogonal_and_sequency_ordered():
    b = hadamard_basis(4)
    v = b.vectors
    np.testing.assert_array_equal(v @ v.T, 16 * np.eye(16))
    changes = np.count_nonzero(np.diff(v, axis=1), axis=1)
    assert np.all(np.diff(changes) >= 0)
    assert np.all(v[0] == 1)
    with pytest.raises(DimensionError):
        hadamard_basis(3)


@pytest.mark.parametrize("policy", ["border", "ideal"])
def test_measured_tm_matches_ground_truth(policy):
    g = SMALL
    screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=7)
    truth = ground_truth_tm(screen, g)
    tm = measure_tm(screen, hadamard_basis(g.n_macro), g, policy)
    assert row_correlation(tm.t, truth.t).min() > 0.999999


def test_canonical_basis_with_ideal_reference_is_exact():
    g = SMALL
    screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=2)
    truth = ground_truth_tm(screen, g)
    tm = measure_tm(screen, canonical_basis(g.n_macro), g, "ideal")
    np.testing.assert_allclose(tm.t, truth.t, atol=1e-12 * np.abs(truth.t).max())


def test_canonical_basis_with_border_reference():
    # the stepped macropixel and the rest of the ROI enter the four frames
    # symmetrically, so rows are exact except at pixels where one macropixel
    # outshines the rest of the reference
    g = SMALL
    screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=2)
    truth = ground_truth_tm(screen, g)
    tm = measure_tm(screen, canonical_basis(g.n_macro), g, "border")
    r = row_correlation(tm.t, truth.t)
    assert np.median(r) > 0.999999
    assert np.mean(r > 0.999) > 0.9


def test_ideal_reference_recovers_tm_exactly():
    g = SMALL
    screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=9)
    truth = ground_truth_tm(screen, g)
    tm = measure_tm(screen, hadamard_basis(g.n_macro), g, "ideal")
    np.testing.assert_allclose(tm.t, truth.t, atol=1e-12 * np.abs(truth.t).max())


def test_workers_do_not_change_result():
    g = SMALL
    screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=1)
    a = measure_tm(screen, hadamard_basis(g.n_macro), g, chunk=7)
    b = measure_tm(screen, hadamard_basis(g.n_macro), g, chunk=7, workers=3)
    np.testing.assert_array_equal(a.t, b.t)


def test_basis_size_must_match():
    g = SMALL
    screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=1)
    with pytest.raises(DimensionError):
        measure_tm(screen, hadamard_basis(4), g)


def test_conjugation_on_iid_matrix_follows_focusing_law():
    # phase-only conjugation of a circular Gaussian row: <eta> = 1 + (pi/4)(N - 1)
    n_macro = 16
    g = Geometry(grid=64, pitch_mm=1 / 64, slm_roi=16 * 2, macropixel=2, camera_roi=16)
    rng = np.random.default_rng(0)
    etas = []
    for _ in range(30):
        t = rng.normal(size=(g.n_outputs, g.n_inputs)) + 1j * rng.normal(size=(g.n_outputs, g.n_inputs))
        tm = TransmissionMatrix(t, g)
        mask = conjugation_mask(tm, FocusTargetSet([(0.0, 0.0)]))
        e = np.exp(1j * mask.phases.ravel())
        out = np.abs(t @ e) ** 2
        etas.append(out[g.nu_to_camera_index(0, 0)[0] * g.camera_roi + g.camera_roi // 2] / (np.sum(np.abs(t) ** 2) / g.n_outputs))
    n = n_macro**2
    assert np.mean(etas) == pytest.approx(1 + np.pi / 4 * (n - 1), rel=0.05)


def test_mask_focuses_through_diffuser():
    g = SMALL
    screen = make_diffuser(2 * g.pitch_mm, g.grid, g.pitch_mm, seed=4)
    tm = measure_tm(screen, hadamard_basis(g.n_macro), g)
    target = (2 * g.freq_pitch, -g.freq_pitch)
    mask = conjugation_mask(tm, FocusTargetSet([target]))
    img = focus_image(g, mask, screen)
    px = g.nu_to_camera_index(*target)
    assert np.unravel_index(img.argmax(), img.shape) == px
    assert enhancement(img, focus_image(g, None, screen), px) > 20


def test_target_outside_roi_rejected():
    g = SMALL
    with pytest.raises(InputError):
        FocusTargetSet([(100.0, 0.0)]).pixels(g)
    with pytest.raises(ValueError):
        FocusTargetSet([])
    with pytest.raises(ValueError):
        FocusTargetSet([(0, 0)], weights=[1, 2])


def test_enhancement_errors():
    with pytest.raises(DimensionError):
        enhancement(np.ones((2, 2)), np.ones((3, 3)), (0, 0))
    with pytest.raises(ZeroDivisionError):
        enhancement(np.ones((2, 2)), np.zeros((2, 2)), (0, 0))
