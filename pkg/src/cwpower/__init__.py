"""Interference-robust CW carrier-power estimation at desk scale.

Synthesizes calibrated CW + QPSK + noise bursts over a 40-cell power grid,
extracts ground-truth complex gains with a Hann-windowed oracle, scores a
classical FFT 3-bin baseline, and trains lightweight 1-D CNN regressors on a
from-scratch autograd engine.
"""

from .signals import (
    Burst,
    BurstLabel,
    PowerGrid,
    RfConfig,
    frequency_shift,
    mix,
    nominal_sir_db,
    synthesize_cw,
    synthesize_noise,
    synthesize_qpsk,
    tx_to_rx_dbm,
)
from .spectral import (
    GainEstimate,
    Spectrum,
    extract_gain,
    fft,
    fft_3bin_estimate,
    hann_window,
    spectrum,
    welch_psd,
)
from .autograd import AdamW, Tensor, TrainingError, mse_db_loss, power_db
from .models import ModelSpec, ModelWeights, build_model, count_parameters, predict_gain
from .dataset import (
    Corpus,
    CorpusRecord,
    generate_corpus,
    load_burst,
    load_checkpoint,
    load_corpus,
    save_burst,
    save_checkpoint,
    save_corpus,
    split_corpus,
)
from .training import TrainConfig, train
from .evaluation import EvalReport, evaluate, sir_sweep_table

__version__ = "0.1.0"
