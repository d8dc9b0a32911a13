"""Stochastic-parcellation ensemble learning for functional connectomes.

Pipeline: Poisson disk parcellation over a gray-matter mask, voxel-level
connectivity fingerprints or ROI correlation matrices, four predictor
families (ridge, FCN, 3D CNN, BrainNet), ensemble fusion across
parcellations, and gradient saliency maps.
"""

from .connectome import (
    ConnectivityMatrix,
    RoiTimeSeries,
    connectivity_matrix,
    fingerprints,
    pearson,
    roi_series,
    scrub,
    vectorize_upper,
)
from .ensemble import (
    EvalReport,
    auc_score,
    bootstrap_compare,
    evaluate,
    fuse_classification,
    fuse_regression,
    kfold_cv,
    kfold_indices,
)
from .models import (
    ConnectomeNet,
    RidgeClassifier,
    RidgeRegression,
    load_model,
    ridge_alpha_search,
    ridge_fit,
    save_model,
)
from .parcellation import (
    ParcellationResult,
    SamplingConfig,
    estimate_radius,
    parcel_stats,
    sample_parcellation,
)
from .saliency import SaliencyMap, ensemble_saliency, input_gradient, saliency_map
from .synth import SynthConfig, generate, iter_subjects, write_dataset
from .volume_io import (
    BoldVolume,
    FingerprintVolume,
    GridMeta,
    LabelVolume,
    Manifest,
    MaskVolume,
    read_manifest,
    read_volume,
    write_manifest,
    write_volume,
)

__version__ = "0.1.0"
