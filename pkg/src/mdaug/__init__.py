"""Deterministic on-the-fly augmentation and domain-shift experiment tooling
for cardiac MRI segmentation."""
from .kernels import BACKEND
from .metrics import CaseScore, DiceReport, dice, ensemble, mean_dice, stratified_report
from .nifti import NiftiError, read_mask, read_volume, write_mask, write_volume
from .pipeline import SampleRequest, SampleSource, SampleStream, augment_sample, stream
from .presets import AugmentationPreset, load_preset
from .splits import SplitManifest
from .volumes import (
    CaseRecord,
    ProbabilityMap,
    SegmentationMask,
    Volume,
    argmax_decode,
    one_hot,
    zscore_normalize,
)

__version__ = "0.1.0"
