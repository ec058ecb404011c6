"""Phoneme-scale evaluation of binaural multichannel speech enhancement.

The package covers the full loop: spatialize speech and noise through
measured or synthetic impulse responses at a calibrated SNR, enhance
with oracle-mask beamformers (MVDR, MWF, rank-reduced MWF), decompose
the results with shift-tolerant least-squares projections, and score
the distortion metrics per phoneme segment and per utterance.
"""

__version__ = "0.1.0"

from .audio import (
    MultichannelSpectrogram,
    MultichannelWaveform,
    Spectrogram,
    StftConfig,
    Waveform,
    istft,
    read_wav,
    stft,
    write_wav,
)
from .beamforming import (
    ALGORITHMS,
    BeamformerWeights,
    CovarianceField,
    Mask,
    apply_weights,
    enhance_binaural,
    gevd_mwf_weights,
    masked_covariance,
    mvdr_weights,
    mwf_weights,
    oracle_mask,
    steering_from_covariance,
)
from .bsseval import (
    Decomposition,
    MetricTriple,
    decompose,
    input_decomposition,
    input_metrics,
    metrics_from_decomposition,
    segment_metrics,
)
from .fixtures import build_desk_corpus
from .noise import (
    NOISE_KINDS,
    NoiseSpec,
    load_recorded_noise,
    realize_noise,
    speech_shaped_noise,
    white_noise,
)
from .phonemes import (
    CATEGORIES,
    EvalRecord,
    PhonemeCategoryMap,
    PhonemeSegment,
    aggregate,
    load_category_map,
    parse_alignment,
    score_segments,
)
from .pipeline import (
    ConfigError,
    RunConfig,
    RunManifest,
    emit_report,
    run_matrix,
    validate_config,
)
from .scene import (
    BINAURAL_LAYOUT,
    ActivityDetectorConfig,
    RirSet,
    Scene,
    SceneConfig,
    build_scene,
    detect_activity,
    load_rir_set,
    noise_gain_for_snr,
    synth_test_rirs,
)

__all__ = [name for name in dir() if not name.startswith("_")]
