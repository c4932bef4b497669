"""blobforge: a probabilistic blob scene engine.

Blobs (2D Gaussians / oriented ellipses) with opacity fields, depth-ordered
composition, feature splatting, element-level edit operations, self-supervised
training-sample generation, dataset curation, a desk-scale dual-branch fusion
harness, and reproducible evaluation metrics. Exposed as a library, a FastAPI
service, and a thin CLI.
"""

from blobforge.blob import (
    BlobEllipse,
    BlobGaussian,
    ConfidenceLevel,
    DEFAULT_CONFIDENCE,
    DegenerateCovarianceError,
    DomainError,
    chi2_quantile_2dof,
    ellipse_to_gaussian,
    gaussian_to_ellipse,
    validate_gaussian,
)
from blobforge.fields import (
    BlobEntry,
    BlobScene,
    CoordGrid,
    FeatureMap,
    FieldMap,
    background_transmittance,
    blob_mask,
    composed_opacities,
    coverage_map,
    make_grid,
    mahalanobis_map,
    opacity_map,
    scene_feature_map,
    splat,
)
from blobforge.curation import (
    BlobRecord,
    CurationRules,
    FilterVerdict,
    FitError,
    curate_directory,
    curate_record,
    fit_ellipse_to_mask,
)
from blobforge.edits import EDIT_KINDS, EditOp, apply_edit
from blobforge.fieldio import field_from_bytes, field_to_bytes, load_field, preview_png, save_field
from blobforge.harness import HarnessState, grad_check, lambda_schedule, loss_total, run_harness_check
from blobforge.metrics import grounding_mse, grounding_report, psnr, run_bench, ssim
from blobforge.samples import (
    PerturbConfig,
    TrainingSample,
    archive_sample,
    build_training_sample,
    write_sample_dir,
)

__version__ = "0.1.0"
