"""Wavefront shaping of momentum-entangled photon pairs through a thin diffuser."""

from .biphoton import DoubleGaussianState, JointMomentumPDF, SchmidtDecomposition, joint_momentum_pdf, propagate_signal_arm, schmidt_decompose, schmidt_number
from .correlator import CorrelationMap, PeakStats, correlate, pair_count_estimate, peak_stats
from .detector import DetectorConfig, FrameStack, pair_survival_rate, sample_frames
from .field import FieldGrid, PhaseMask, apply_mask, bin_intensity, crop_field, fourier_2f, relay_image
from .medium import DiffuserScreen, Geometry, TransmissionMatrix, forward_train, ground_truth_tm, make_diffuser
from .probe import FocusTargetSet, ProbeBasis, canonical_basis, conjugation_mask, enhancement, focus_image, hadamard_basis, measure_tm, reconstruct_4phase

__all__ = [
    "CorrelationMap", "DetectorConfig", "DiffuserScreen", "DoubleGaussianState", "FieldGrid", "FocusTargetSet",
    "FrameStack", "Geometry", "JointMomentumPDF", "PeakStats", "PhaseMask", "ProbeBasis", "SchmidtDecomposition",
    "TransmissionMatrix", "apply_mask", "bin_intensity", "canonical_basis", "conjugation_mask", "correlate",
    "crop_field", "enhancement", "focus_image", "forward_train", "fourier_2f", "ground_truth_tm", "hadamard_basis",
    "joint_momentum_pdf", "make_diffuser", "measure_tm", "pair_count_estimate", "pair_survival_rate", "peak_stats",
    "propagate_signal_arm", "reconstruct_4phase", "relay_image", "sample_frames", "schmidt_decompose", "schmidt_number",
]
