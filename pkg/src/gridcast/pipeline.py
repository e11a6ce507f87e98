"""Two-stage hierarchical model: autoencoder space, reservoir-ensemble time.

Training first fits the autoencoder on the (normalized) training slices,
then fits an ensemble of reservoirs on the flattened latent sequence with
one-step-ahead targets. Forecasting rolls latent paths forward iteratively
and decodes them back to fields; uncertainty comes from reservoir draws
(temporal) and decoder dropout masks (spatial), exposed as separate knobs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .cae import CAEConfig, CAEModel, _masked_model, decode, encode, train_cae
from .errors import ConfigurationError, InputError
from .esn import ESNConfig, ESNEnsemble, Reservoir, fit_ensemble, forecast_iterative, member_seeds
from .grid import GridSeries, NormRecord, denormalize
from .serialize import pack_block, unpack_block

CSR_MAGIC = b"CSR1"


@dataclass
class ForecastEnsemble:
    """Forecast realizations (denormalized) with per-member provenance."""

    horizon: int
    members: list[GridSeries]
    provenance: list[dict]

    def stacked(self) -> np.ndarray:
        return np.stack([m.values for m in self.members])


@dataclass
class ForecastModel:
    """Fitted autoencoder + reservoir ensemble + the normalization that binds them."""

    cae: CAEModel
    ensemble: ESNEnsemble
    norm: NormRecord
    latent_history: np.ndarray  # (T_train, latent_size), normalized-data latents
    dt: float
    var_names: list[str]
    sigma2_obs: float
    sigma2_state: float

    @property
    def t_train(self) -> int:
        return self.latent_history.shape[0]

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return self.cae.config.latent_shape

    def to_bytes(self) -> bytes:
        header = {
            "norm": self.norm.to_dict(),
            "dt": self.dt,
            "var_names": list(self.var_names),
            "sigma2_obs": self.sigma2_obs,
            "sigma2_state": self.sigma2_state,
            "esn": {
                "config": self.ensemble.config.to_dict(),
                "alpha": self.ensemble.alpha,
                "zeta": list(self.ensemble.zeta),
                "seeds": [int(s) for s in self.ensemble.seeds],
            },
        }
        latent_block = pack_block("LAT1", {"t_train": self.t_train}, [self.latent_history])
        blobs = [self.cae.to_bytes(), latent_block] + [m.to_bytes() for m in self.ensemble.members]
        head = pack_block("CSR1", header, [])
        out = [head[4:], struct.pack("<I", len(blobs))]
        for blob in blobs:
            out.append(struct.pack("<Q", len(blob)))
            out.append(blob)
        return CSR_MAGIC + b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ForecastModel":
        if data[:4] != CSR_MAGIC:
            raise InputError(f"not a combined model file (magic {data[:4]!r})")
        (hlen,) = struct.unpack("<I", data[4:8])
        header, _ = unpack_block(data[: 8 + hlen], "CSR1")
        off = 8 + hlen
        (n_blobs,) = struct.unpack("<I", data[off : off + 4])
        off += 4
        blobs = []
        for _ in range(n_blobs):
            (blen,) = struct.unpack("<Q", data[off : off + 8])
            off += 8
            blobs.append(data[off : off + blen])
            off += blen
        if off != len(data):
            raise InputError(f"trailing bytes in model file: {len(data) - off}")
        cae = CAEModel.from_bytes(blobs[0])
        _, (latents,) = unpack_block(blobs[1], "LAT1")
        esn_h = header["esn"]
        ensemble = ESNEnsemble(
            ESNConfig.from_dict(esn_h["config"]),
            float(esn_h["alpha"]),
            tuple(esn_h["zeta"]),
            [Reservoir.from_bytes(b) for b in blobs[2:]],
            [int(s) for s in esn_h["seeds"]],
        )
        return cls(cae, ensemble, NormRecord.from_dict(header["norm"]), latents,
                   header["dt"], header["var_names"],
                   header["sigma2_obs"], header["sigma2_state"])

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ForecastModel":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def encode_series(cae: CAEModel, data: GridSeries) -> np.ndarray:
    """Flattened latent vectors for every slice, shape (T, latent_size)."""
    latent = encode(cae, data.values)
    return latent.reshape(data.n_steps, -1)


def train_model(data: GridSeries, cae_config: CAEConfig, esn_config: ESNConfig,
                n_members: int | None = None) -> ForecastModel:
    """Fit the autoencoder on the training slices, then reservoirs on the latents."""
    if data.norm is None:
        raise InputError("training data must be normalized (carry a norm record)")
    if data.n_steps < esn_config.lags + esn_config.washout + 1:
        raise ConfigurationError("too few frames for the configured lags and washout")
    cae = train_cae(data, cae_config)
    latents = encode_series(cae, data)
    recon = decode(cae, latents.reshape((data.n_steps,) + cae_config.latent_shape))
    # median over frames: robust to the noise-excited early slices
    frame_mse = np.mean((recon - data.values) ** 2, axis=(1, 2, 3))
    sigma2_obs = float(np.median(frame_mse))
    ensemble = fit_ensemble(esn_config, latents, n_members)
    sigma2_state = float(np.mean([m.resid_var for m in ensemble.members]))
    return ForecastModel(cae, ensemble, data.norm, latents, data.dt,
                         list(data.var_names), sigma2_obs, sigma2_state)


def forecast(model: ForecastModel, horizon: int, n_temporal: int = 1, n_spatial: int = 1,
             keep_prob: float | None = None, seed: int = 0) -> ForecastEnsemble:
    """Forecast ensemble of n_temporal reservoir draws x n_spatial dropout decodes.

    A single reservoir draw (n_temporal = 1) rolls out deterministically.
    With several draws, each member path also samples the model's fitted
    noise terms: the readout residual at every latent step and the
    observation noise on the decoded fields, both seeded per member.
    Dropout decodes (n_spatial > 1) are dispersed by Bernoulli weight masks
    and re-centered on the path's deterministic decode. Members come back
    denormalized.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if n_temporal < 1 or n_spatial < 1:
        raise ConfigurationError("n_temporal and n_spatial must be >= 1")
    keep = model.cae.config.keep_prob if keep_prob is None else keep_prob
    if not 0.0 < keep <= 1.0:
        raise ConfigurationError("keep_prob must lie in (0, 1]")
    model.ensemble.extend(model.latent_history, n_temporal)
    stochastic = n_temporal > 1
    sigma_o = float(np.sqrt(model.sigma2_obs))
    members = []
    provenance = []
    latent_shape = model.latent_shape
    for i in range(n_temporal):
        reservoir = model.ensemble.members[i]
        member_seed = model.ensemble.seeds[i]
        path_rng = (np.random.default_rng(np.random.SeedSequence([member_seed, 1]))
                    if stochastic else None)
        path = forecast_iterative(reservoir, model.latent_history, horizon, noise_rng=path_rng)
        latent = path.reshape((horizon,) + latent_shape)
        det_fields = decode(model.cae, latent)
        if n_spatial == 1:
            decoded = [det_fields]
            mask_seeds = [None]
        else:
            mask_seeds = [int(s) for s in
                          np.random.SeedSequence([member_seed, 2, seed]).generate_state(n_spatial, np.uint64)]
            masked = []
            for ms in mask_seeds:
                dec = _masked_model(model.cae, keep, np.random.default_rng(ms))
                masked.append(decode(dec, latent))
            center = np.mean(masked, axis=0)
            decoded = [f - center + det_fields for f in masked]
        for j, fields in enumerate(decoded):
            if stochastic or n_spatial > 1:
                obs_rng = np.random.default_rng(np.random.SeedSequence([member_seed, 3, seed, j]))
                fields = fields + sigma_o * obs_rng.standard_normal(fields.shape)
            series = GridSeries(fields, dt=model.dt, var_names=list(model.var_names),
                                norm=model.norm)
            members.append(denormalize(series))
            provenance.append({
                "temporal": i,
                "spatial": j,
                "reservoir_seed": member_seed,
                "mask_seed": mask_seeds[j],
            })
    return ForecastEnsemble(horizon, members, provenance)


def interval(ensemble: ForecastEnsemble, level: float) -> tuple[GridSeries, GridSeries]:
    """Pointwise empirical quantile band at the given central level."""
    if not 0.0 < level < 1.0:
        raise ConfigurationError("level must lie in (0, 1)")
    if len(ensemble.members) < 2:
        raise ConfigurationError("need at least 2 members for an interval")
    stack = ensemble.stacked()
    lo = np.quantile(stack, (1.0 - level) / 2.0, axis=0)
    hi = np.quantile(stack, 1.0 - (1.0 - level) / 2.0, axis=0)
    ref = ensemble.members[0]
    return ref.copy_with(lo), ref.copy_with(hi)


def ensemble_mean(ensemble: ForecastEnsemble) -> GridSeries:
    return ensemble.members[0].copy_with(ensemble.stacked().mean(axis=0))
