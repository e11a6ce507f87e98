"""gridcast: spatio-temporal field forecasting with autoencoded reservoirs."""

from .baselines import (
    EvalReport,
    coverage,
    grand_mean_coverage,
    median_iqr,
    mse_map,
    pca_fit,
    pca_reconstruct,
    persistence_forecast,
)
from .burgers import BurgersConfig, fourier_ic, simulate, simulate_many
from .cae import (
    CAEConfig,
    CAEModel,
    build_cae,
    decode,
    encode,
    flatten_latent,
    reconstruct,
    reconstruct_with_dropout,
    train_cae,
    unflatten_latent,
)
from .errors import (
    ConfigurationError,
    InputError,
    NumericError,
    SolverError,
    TrainingDivergenceError,
)
from .esn import (
    EOFBasis,
    ESNConfig,
    ESNEnsemble,
    Reservoir,
    ensemble_forecast,
    eof_reduce,
    fit_ensemble,
    fit_readout,
    fit_reservoir,
    forecast_iterative,
    grid_search_hyperparams,
    sample_reservoir,
    spectral_radius,
    update_states,
)
from .grid import GridSeries, NormRecord, denormalize, minmax_stats, normalize
from .gsf import read_gsf, write_gsf
from .pipeline import (
    ForecastEnsemble,
    ForecastModel,
    ensemble_mean,
    forecast,
    interval,
    train_model,
)
from .tensor_ops import (
    AdamState,
    FilterBank,
    activation,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    init_filter_bank,
)
from .windpower import PowerCurve, extrapolate, power, power_map, shipped_curve

__version__ = "0.1.0"
