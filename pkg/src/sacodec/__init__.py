"""Low-bitrate neural speech codec with a semantically anchored dual quantizer."""

__version__ = "0.1.0"

from .audio import Waveform, read_wav, resample, snr_db, write_wav
from .bitstream import TokenSequence, pack_tokens, read_sact, stream_bits, unpack_tokens, write_sact
from .codec import decode_file, decode_tokens, encode_file, encode_waveform
from .codebook import (
    build_semantic_codebook,
    default_feature_config,
    kmeans,
    load_semantic_codebook,
    save_semantic_codebook,
)
from .corpus import Clip, load_wav_corpus, make_corpus, sample_crop
from .decoder import Decoder, DecoderConfig, SpectralHead
from .discriminators import DiscriminatorConfig, DiscriminatorEnsemble, DiscriminatorOutput
from .encoder import Encoder, EncoderConfig, output_length
from .losses import (
    LossBreakdown,
    LossWeights,
    adversarial_losses,
    feature_matching_loss,
    mel_loss_configs,
    mel_reconstruction_loss,
    total_generator_loss,
)
from .model import (
    ModelConfig,
    SACodec,
    apply_ablations,
    model_checksum,
    named_profile,
    paper_profile,
    tiny_profile,
)
from .quantizer import (
    DualQuantizer,
    QuantizationResult,
    ResidualActivator,
    SemanticAnchor,
    fuse_and_passthrough,
    nearest_codeword,
    nearest_indices,
    quantization_losses,
    utilization_stats,
)
from .reports import evaluation_report, semantic_probe
from .spectral import (
    ComplexSpectrogram,
    SpectralConfig,
    frame_count,
    istft,
    istft_tensor,
    log_mel,
    log_mel_tensor,
    mel_filterbank,
    stft,
    stft_tensor,
)
from .trainer import TrainConfig, Trainer, cosine_lr, load_model

__all__ = [name for name in dir() if not name.startswith("_")]
