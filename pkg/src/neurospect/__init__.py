"""EEG spectral features (PSD + magnitude-squared coherence), demographic
fusion, a small from-scratch convolutional classifier with data-parallel
training, coherence ablation, and a prediction service."""

from .dataset import (
    DISORDER_LABELS,
    Demographics,
    FeatureSchema,
    SchemaError,
    SubjectRecord,
    TensorScaler,
    assemble_tensor,
    parse_feature_table,
    summarize_dataset,
    write_feature_table,
)
from .montage import ELECTRODES, REGIONS, electrode_region
from .neuralnet import AdamState, Network, gradient_check, reference_network
from .pipeline import (
    ArtifactError,
    ModelArtifact,
    TrainConfig,
    ablation_compare,
    evaluate,
    load_artifact,
    parallel_gradient,
    save_artifact,
    train,
)
from .preprocess import (
    EncoderMap,
    OutlierPolicy,
    PreprocessConfig,
    ResamplePolicy,
    SplitSpec,
    stratified_split,
)
from .spectral import (
    BANDS_FIVE,
    BANDS_SIX,
    FrequencyBand,
    SampledWindow,
    SignalProfile,
    WelchConfig,
    band_powers,
    msc_coherence,
    synth_eeg,
    welch_psd,
)

__version__ = "0.1.0"
