"""Convolutional autoencoder: assembly, training, encoding, and dropout ensembles.

The encoder halves the spatial dimensions per layer with strided
convolutions; the decoder mirrors it with transposed convolutions (filter
counts reversed) and a final stride-1 layer maps back to the data channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError, TrainingDivergenceError
from .grid import GridSeries
from .serialize import pack_block, unpack_block
from .tensor_ops import (
    AdamState,
    FilterBank,
    adam_step,
    conv_backward_batch,
    conv_forward_batch,
    deconv_backward_batch,
    deconv_forward_batch,
    init_filter_bank,
)


@dataclass
class CAEConfig:
    input_shape: tuple[int, int, int]
    encoder_filters: tuple[int, ...] = (16, 32, 64)
    kernel: int = 3
    stride: int = 2
    slope: float = 0.3
    final_activation: str = "sigmoid"
    epochs: int = 500
    batch_size: int = 2
    learning_rate: float = 1e-3
    keep_prob: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.encoder_filters = tuple(int(v) for v in self.encoder_filters)
        m, n, _ = self.input_shape
        down = self.stride ** self.depth
        if m % down or n % down:
            raise ConfigurationError(
                f"input dims {m}x{n} not divisible by stride^depth = {down}"
            )
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigurationError("keep_prob must be in (0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("epochs and batch_size must be positive")

    @property
    def depth(self) -> int:
        return len(self.encoder_filters)

    @property
    def decoder_filters(self) -> tuple[int, ...]:
        return tuple(reversed(self.encoder_filters))

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        m, n, _ = self.input_shape
        down = self.stride ** self.depth
        return (m // down, n // down, self.encoder_filters[-1])

    @property
    def latent_size(self) -> int:
        hm, hn, hc = self.latent_shape
        return hm * hn * hc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["encoder_filters"] = list(self.encoder_filters)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CAEConfig":
        d = dict(d)
        d["input_shape"] = tuple(d["input_shape"])
        d["encoder_filters"] = tuple(d["encoder_filters"])
        return cls(**d)


@dataclass
class CAEModel:
    config: CAEConfig
    encoder: list[FilterBank]
    decoder: list[FilterBank]
    output: FilterBank
    loss_history: list[float] = field(default_factory=list)

    def banks(self) -> list[FilterBank]:
        return [*self.encoder, *self.decoder, self.output]

    def params(self) -> list[np.ndarray]:
        out = []
        for bank in self.banks():
            out.append(bank.weights)
            out.append(bank.biases)
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        banks = self.banks()
        for i, bank in enumerate(banks):
            bank.weights = params[2 * i]
            bank.biases = params[2 * i + 1]

    def to_bytes(self) -> bytes:
        header = {"config": self.config.to_dict(), "seed": self.config.seed}
        arrays = self.params() + [np.asarray(self.loss_history, dtype=np.float64)]
        return pack_block("CAE1", header, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CAEModel":
        header, arrays = unpack_block(data, "CAE1")
        config = CAEConfig.from_dict(header["config"])
        model = build_cae(config)
        model.set_params(arrays[:-1])
        model.loss_history = arrays[-1].tolist()
        return model

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CAEModel":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def build_cae(config: CAEConfig) -> CAEModel:
    """Seeded fan-based initialization of all filter banks."""
    rng = np.random.default_rng(config.seed)
    k = config.kernel
    p = config.input_shape[2]
    enc, dec = [], []
    c_in = p
    for f in config.encoder_filters:
        enc.append(init_filter_bank(k, c_in, f, rng))
        c_in = f
    for f in config.decoder_filters:
        dec.append(init_filter_bank(k, c_in, f, rng))
        c_in = f
    out = init_filter_bank(k, c_in, p, rng)
    return CAEModel(config, enc, dec, out)


def _check_input(config: CAEConfig, x: np.ndarray, expect) -> None:
    if x.shape[-3:] != tuple(expect):
        raise ConfigurationError(f"field shape {x.shape[-3:]} does not match configured {tuple(expect)}")


def encode(model: CAEModel, x: np.ndarray) -> np.ndarray:
    """Map a field (m, n, p) - or a batch (B, m, n, p) - to its latent feature map."""
    cfg = model.config
    _check_input(cfg, np.asarray(x), cfg.input_shape)
    single = np.asarray(x).ndim == 3
    y = np.asarray(x, dtype=np.float64)[None] if single else np.asarray(x, dtype=np.float64)
    for bank in model.encoder:
        y = conv_forward_batch(y, bank, cfg.stride, "leaky_relu", cfg.slope)
    return y[0] if single else y


def decode(model: CAEModel, y: np.ndarray) -> np.ndarray:
    """Map a latent feature map back to data space, final activation applied."""
    cfg = model.config
    _check_input(cfg, np.asarray(y), cfg.latent_shape)
    single = np.asarray(y).ndim == 3
    x = np.asarray(y, dtype=np.float64)[None] if single else np.asarray(y, dtype=np.float64)
    for bank in model.decoder:
        x = deconv_forward_batch(x, bank, cfg.stride, "leaky_relu", cfg.slope)
    x = conv_forward_batch(x, model.output, 1, cfg.final_activation, cfg.slope)
    return x[0] if single else x


def reconstruct(model: CAEModel, x: np.ndarray) -> np.ndarray:
    return decode(model, encode(model, x))


def flatten_latent(y: np.ndarray) -> np.ndarray:
    """Row-major [row][col][channel] flattening of a latent feature map."""
    return np.asarray(y, dtype=np.float64).reshape(-1)


def unflatten_latent(v: np.ndarray, latent_shape) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(latent_shape)


def _forward_train(model: CAEModel, xb: np.ndarray):
    cfg = model.config
    caches = []
    y = xb
    for bank in model.encoder:
        y, cache = conv_forward_batch(y, bank, cfg.stride, "leaky_relu", cfg.slope, want_cache=True)
        caches.append(cache)
    for bank in model.decoder:
        y, cache = deconv_forward_batch(y, bank, cfg.stride, "leaky_relu", cfg.slope, want_cache=True)
        caches.append(cache)
    y, cache = conv_forward_batch(y, model.output, 1, cfg.final_activation, cfg.slope, want_cache=True)
    caches.append(cache)
    return y, caches


def _backward_train(model: CAEModel, caches, d_out: np.ndarray):
    cfg = model.config
    n_enc = len(model.encoder)
    n_dec = len(model.decoder)
    grads = [None] * (2 * (n_enc + n_dec + 1))
    d = d_out
    d, dw, db = conv_backward_batch(model.output, 1, cfg.final_activation, cfg.slope, d, caches[-1])
    grads[-2], grads[-1] = dw, db
    for i in range(n_dec - 1, -1, -1):
        cache = caches[n_enc + i]
        d, dw, db = deconv_backward_batch(model.decoder[i], cfg.stride, "leaky_relu", cfg.slope, d, cache)
        grads[2 * (n_enc + i)] = dw
        grads[2 * (n_enc + i) + 1] = db
    for i in range(n_enc - 1, -1, -1):
        d, dw, db = conv_backward_batch(model.encoder[i], cfg.stride, "leaky_relu", cfg.slope, d, caches[i])
        grads[2 * i] = dw
        grads[2 * i + 1] = db
    return grads


def train_cae(data, config: CAEConfig) -> CAEModel:
    """Minibatch ADAM on the reconstruction MSE, each time slice independent.

    data is a GridSeries (normalized to the unit interval) or a (T, m, n, p)
    array. The shuffle order is seeded, so identical inputs give identical
    models. Raises TrainingDivergenceError if the loss goes non-finite.
    """
    values = data.values if isinstance(data, GridSeries) else np.asarray(data, dtype=np.float64)
    if values.ndim != 4:
        raise ConfigurationError(f"training data must be (T, m, n, p), got {values.shape}")
    _check_input(config, values, config.input_shape)
    t_total = values.shape[0]
    if t_total < config.batch_size:
        raise ConfigurationError(f"need at least batch_size={config.batch_size} frames, got {t_total}")

    model = build_cae(config)
    rng = np.random.default_rng(config.seed)
    params = model.params()
    state = AdamState.for_params(params, lr=config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(t_total)
        epoch_losses = []
        for start in range(0, t_total, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = values[idx]
            recon, caches = _forward_train(model, xb)
            with np.errstate(over="ignore", invalid="ignore"):
                diff = recon - xb
                loss = float(np.mean(diff * diff))
            if not np.isfinite(loss):
                raise TrainingDivergenceError(epoch)
            epoch_losses.append(loss)
            d_out = (2.0 / diff.size) * diff
            grads = _backward_train(model, caches, d_out)
            params = adam_step(params, grads, state)
            model.set_params(params)
        history.append(float(np.mean(epoch_losses)))
    model.loss_history = history
    return model


def mask_banks(banks: list[FilterBank], keep_prob: float, rng: np.random.Generator) -> list[FilterBank]:
    """Bernoulli(keep_prob) masks multiplied into every weight and bias, no rescaling."""
    if not 0.0 < keep_prob <= 1.0:
        raise ConfigurationError("keep_prob must be in (0, 1]")
    if keep_prob == 1.0:
        return banks
    masked = []
    for bank in banks:
        w_mask = rng.random(bank.weights.shape) < keep_prob
        b_mask = rng.random(bank.biases.shape) < keep_prob
        masked.append(FilterBank(bank.weights * w_mask, bank.biases * b_mask))
    return masked


def _masked_model(model: CAEModel, keep_prob: float, rng: np.random.Generator) -> CAEModel:
    banks = mask_banks(model.banks(), keep_prob, rng)
    n_enc = len(model.encoder)
    n_dec = len(model.decoder)
    return CAEModel(model.config, banks[:n_enc], banks[n_enc : n_enc + n_dec], banks[-1],
                    model.loss_history)


def reconstruct_with_dropout(model: CAEModel, x: np.ndarray, keep_prob: float,
                             n_samples: int, seed: int = 0) -> list[np.ndarray]:
    """Ensemble of reconstructions, each with an independent dropout mask.

    With keep_prob = 1 every sample equals the deterministic reconstruction.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(n_samples)
    out = []
    for child in seeds:
        rng = np.random.default_rng(child)
        masked = _masked_model(model, keep_prob, rng)
        out.append(reconstruct(masked, x))
    return out
