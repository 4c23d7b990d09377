"""stpeval: evaluation engine for spatio-temporal prediction models."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .tensor import (
    TASK_PRESETS,
    SequenceTensor,
    TaskSpec,
    get_task,
    slice_window,
    subsample_indices,
    subsample_temporal,
)
from .npyio import load_array, load_features, save_array
from .synthgen import GenConfig, SpriteState, SynthDataset, generate_sequence, step_dynamics
from .frame_metrics import SsimConstants, mae, psnr, rmse, ssim, wmape
from .dist_metrics import (
    FeatureSet,
    GaussianStats,
    fit_gaussian,
    frechet_distance,
    lpips_aggregate,
    pooled_feature_extractor,
    sqrtm_psd,
)
from .weather import (
    Climatology,
    ContingencyTable,
    LatitudeGrid,
    acc,
    c_nino34,
    contingency,
    csi_mean,
    fit_climatology,
    latitude_weights,
    nino34_index,
    wrmse,
)
from .protocol import (
    EvalContext,
    FilePredictor,
    LinearPredictor,
    OraclePredictor,
    PersistencePredictor,
    Predictor,
    evaluate,
    export_inputs,
    extrapolate,
    robustness_sweep,
)
from .report import MetricReport, StabilityReport, aggregate, dump_frames, stability, to_csv, to_json
