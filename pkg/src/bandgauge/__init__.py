"""Banding artifact detection and no-reference quality scoring."""

from .classifier import (
    BaselineConfig,
    DualNetParams,
    PatchSample,
    TrainConfig,
    baseline_predict,
    forward,
    load_params,
    predict,
    save_params,
    train,
)
from .freq import HighFreqMap, LowFreqMap, PwsConfig, pws_energy, pws_lfm, sobel_hfm
from .imgcore import (
    Label,
    PatchGrid,
    PatchLabel,
    PlanarImage,
    load_image,
    rgb_to_ycbcr420,
    save_image,
    tile,
    to_luma,
    ycbcr420_to_rgb,
)
from .pipeline import ImageResult, RunConfig, score_image
from .scoring import BandingMap, QualityScore, banding_map, map_to_image, pool_score
from .sfmask import MaskWeights, SpatialFreqStats, mask_weight, sf_threshold, spatial_frequency
from .subjective import (
    OutlierConfig,
    RatingSet,
    grubbs_statistic,
    grubbs_threshold,
    mos,
    remove_outliers,
)

__version__ = "0.1.0"
