"""Score-based diffusion post-filter for coded speech in the complex STFT domain."""

from scoredec.audio_io import Waveform, read_wav, write_wav
from scoredec.sampler import PcSamplerConfig, pc_sample
from scoredec.score_model import GaussianOracleScoreModel, MlpConfig, MlpScoreModel, TrainConfig, dsm_loss, train
from scoredec.sde import ConditionPair, OuveParams
from scoredec.spectral import CompandingConfig, ComplexSpectrogram, StftConfig, compand, expand, istft, stft

__version__ = "0.1.0"
