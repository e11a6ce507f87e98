"""Deep echo state networks over latent sequences.

Recurrent and input matrices are sampled once from a sparse spike-and-slab
distribution (entries nonzero with probability `sparsity`, values standard
normal) and never trained; only the linear readout is fitted, by ridge
regression on the reservoir states. Layers beyond the first are driven by
an EOF reduction of the previous layer's states.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError, NumericError
from .serialize import pack_block, unpack_block

GRID_ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 11))
GRID_ZETAS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass
class ESNConfig:
    n_reservoir: int = 64
    depth: int = 1
    n_reduced: int = 32
    leaking_rate: float | None = None
    scaling: float | tuple | None = None
    sparsity: float = 0.1
    lags: int = 1
    washout: int = 10
    ridge: float = 1e-2
    ensemble_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1 or self.n_reservoir < 1 or self.lags < 1:
            raise ConfigurationError("depth, n_reservoir, and lags must be positive")
        if not 0.0 <= self.sparsity <= 1.0:
            raise ConfigurationError("sparsity must lie in [0, 1]")
        if self.depth > 1 and self.n_reduced > self.n_reservoir:
            raise ConfigurationError("n_reduced cannot exceed n_reservoir")
        if self.leaking_rate is not None and not 0.0 < self.leaking_rate <= 1.0:
            raise ConfigurationError("leaking_rate must lie in (0, 1]")
        for z in self.zeta_list() or ():
            if not 0.0 < z <= 1.0:
                raise ConfigurationError("scaling values must lie in (0, 1]")
        if self.washout < 0 or self.ridge < 0 or self.ensemble_size < 1:
            raise ConfigurationError("washout, ridge, and ensemble_size must be nonnegative/positive")

    def zeta_list(self) -> tuple[float, ...] | None:
        if self.scaling is None:
            return None
        if np.isscalar(self.scaling):
            return (float(self.scaling),) * self.depth
        if len(self.scaling) != self.depth:
            raise ConfigurationError("per-layer scaling length must equal depth")
        return tuple(float(z) for z in self.scaling)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["scaling"] is not None and not np.isscalar(d["scaling"]):
            d["scaling"] = list(d["scaling"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ESNConfig":
        d = dict(d)
        if isinstance(d.get("scaling"), list):
            d["scaling"] = tuple(d["scaling"])
        return cls(**d)


def spectral_radius(w: np.ndarray, n_iter: int = 1000, tol: float = 1e-10, seed: int = 0) -> float:
    """Magnitude of the dominant eigenvalue, by blocked power (subspace) iteration.

    A multi-column iterate captures complex-conjugate dominant pairs of a
    real matrix, which plain single-vector power iteration cannot, and keeps
    converging when two pairs have nearly equal magnitude. Degenerate block
    columns are restarted with fresh random vectors.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[0]
    if w.shape != (n, n):
        raise ConfigurationError("spectral_radius expects a square matrix")
    if not w.any():
        return 0.0
    block = min(4, n)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, block)))
    prev = np.inf
    est = 0.0
    for _ in range(n_iter):
        z = w @ q
        t_small = q.T @ z
        est = float(np.max(np.abs(np.linalg.eigvals(t_small))))
        q, r = np.linalg.qr(z)
        diag = np.abs(np.diag(r))
        if diag.min() < 1e-14 * max(diag.max(), 1e-300):
            for j in np.nonzero(diag < 1e-14 * max(diag.max(), 1e-300))[0]:
                q[:, j] = rng.standard_normal(n)
            q, _ = np.linalg.qr(q)
        if abs(est - prev) <= tol * max(abs(est), 1e-30):
            break
        prev = est
    return est


@dataclass
class EOFBasis:
    """Leading principal directions of a centered state trajectory."""

    mean: np.ndarray
    components: np.ndarray  # (n_features, n_reduced)
    singular_values: np.ndarray
    degenerate: bool = False

    def project(self, states: np.ndarray) -> np.ndarray:
        return (np.asarray(states, dtype=np.float64) - self.mean) @ self.components

    def captured_variance(self) -> float:
        total = float(np.sum(self.singular_values**2))
        if total == 0.0:
            return 0.0
        r = self.components.shape[1]
        return float(np.sum(self.singular_values[:r] ** 2)) / total


def eof_reduce(states: np.ndarray, n_reduced: int) -> tuple[EOFBasis, np.ndarray]:
    """Reduce a (T, n) state matrix to its leading n_reduced principal scores."""
    states = np.asarray(states, dtype=np.float64)
    t_len, n = states.shape
    if t_len < n_reduced:
        raise ConfigurationError(f"need at least {n_reduced} rows, got {t_len}")
    mean = states.mean(axis=0)
    centered = states - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    # centering constant states leaves roundoff residue, hence the scaled floor
    degenerate = s[0] <= 1e-12 * max(1.0, float(np.abs(mean).max()))
    if degenerate:
        warnings.warn("all-constant states: EOF reduction is degenerate", RuntimeWarning)
        components = np.zeros((states.shape[1], n_reduced))
        return EOFBasis(mean, components, s.copy(), True), np.zeros((t_len, n_reduced))
    components = vt[:n_reduced].T.copy()
    basis = EOFBasis(mean, components, s.copy(), degenerate)
    return basis, centered @ components


def fit_readout(regressors: np.ndarray, targets: np.ndarray, ridge: float) -> np.ndarray:
    """Ridge solution of targets ~ regressors @ B via the normal equations."""
    r = np.asarray(regressors, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    gram = r.T @ r
    if ridge > 0:
        gram = gram + ridge * np.eye(gram.shape[0])
    try:
        return np.linalg.solve(gram, r.T @ y)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "normal equations are singular; set a positive ridge penalty"
        ) from exc


@dataclass
class Reservoir:
    """Sampled weight matrices plus everything fitted on top of them."""

    config: ESNConfig
    input_dim: int
    seed: int
    w: list[np.ndarray]
    w_in: list[np.ndarray]
    radii: list[float]
    alpha: float | None = None
    zeta: tuple[float, ...] | None = None
    eofs: list[EOFBasis | None] = field(default_factory=list)
    k_mu: list[np.ndarray | None] = field(default_factory=list)
    k_scale: list[np.ndarray | None] = field(default_factory=list)
    readout: np.ndarray | None = None
    resid_var: float | None = None
    resid_sd: np.ndarray | None = None  # per-coordinate readout residual scale

    @property
    def out_dim(self) -> int:
        q = self.config.lags
        if self.input_dim % q:
            raise ConfigurationError("input_dim is not a multiple of the lag count")
        return self.input_dim // q

    def feature_width(self) -> int:
        return self.config.n_reservoir + (self.config.depth - 1) * self.config.n_reduced

    def to_bytes(self) -> bytes:
        d = self.config.depth
        header = {
            "config": self.config.to_dict(),
            "input_dim": self.input_dim,
            "seed": int(self.seed),
            "alpha": self.alpha,
            "zeta": list(self.zeta) if self.zeta is not None else None,
            "resid_var": self.resid_var,
            "fitted": self.readout is not None,
        }
        arrays = []
        for i in range(d):
            arrays += [self.w[i], self.w_in[i], np.array([self.radii[i]])]
        if self.readout is not None:
            for i in range(d - 1):
                b = self.eofs[i]
                arrays += [b.mean, b.components, b.singular_values,
                           np.array([1.0 if b.degenerate else 0.0]),
                           self.k_mu[i], self.k_scale[i]]
            arrays.append(self.readout)
            arrays.append(self.resid_sd)
        return pack_block("ESN1", header, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Reservoir":
        header, arrays = unpack_block(data, "ESN1")
        config = ESNConfig.from_dict(header["config"])
        d = config.depth
        w, w_in, radii = [], [], []
        idx = 0
        for _ in range(d):
            w.append(arrays[idx])
            w_in.append(arrays[idx + 1])
            radii.append(float(arrays[idx + 2][0]))
            idx += 3
        res = cls(config, int(header["input_dim"]), int(header["seed"]), w, w_in, radii,
                  alpha=header["alpha"],
                  zeta=tuple(header["zeta"]) if header["zeta"] is not None else None,
                  eofs=[None] * (d - 1), k_mu=[None] * (d - 1), k_scale=[None] * (d - 1))
        if header["fitted"]:
            for i in range(d - 1):
                mean, comps, svals, flag, mu, scale = arrays[idx : idx + 6]
                res.eofs[i] = EOFBasis(mean, comps, svals, bool(flag[0]))
                res.k_mu[i] = mu
                res.k_scale[i] = scale
                idx += 6
            res.readout = arrays[idx]
            res.resid_sd = arrays[idx + 1]
            res.resid_var = header["resid_var"]
        return res

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Reservoir":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def sample_reservoir(config: ESNConfig, input_dim: int, seed: int) -> Reservoir:
    """Draw sparse recurrent and input matrices for every layer, seeded."""
    if input_dim < 1:
        raise ConfigurationError("input_dim must be >= 1")
    rng = np.random.default_rng(seed)
    n = config.n_reservoir
    pi = config.sparsity
    w, w_in, radii = [], [], []
    for d in range(config.depth):
        cols = input_dim if d == 0 else config.n_reduced
        wd = (rng.random((n, n)) < pi) * rng.standard_normal((n, n))
        wi = (rng.random((n, cols)) < pi) * rng.standard_normal((n, cols))
        w.append(wd)
        w_in.append(wi)
        radii.append(spectral_radius(wd))
    depth = config.depth
    return Reservoir(config, input_dim, int(seed), w, w_in, radii,
                     alpha=config.leaking_rate, zeta=config.zeta_list(),
                     eofs=[None] * (depth - 1), k_mu=[None] * (depth - 1),
                     k_scale=[None] * (depth - 1))


def _layer_run(w, w_in_drive, radius, alpha, zeta, h0=None):
    """Leaky tanh recursion for one layer over a precomputed drive sequence."""
    t_len, n = w_in_drive.shape
    scale = zeta / radius if radius > 0 else 0.0
    h = np.zeros(n) if h0 is None else np.asarray(h0, dtype=np.float64).copy()
    seq = np.empty((t_len, n))
    ws = scale * w
    for t in range(t_len):
        h = (1.0 - alpha) * h + alpha * np.tanh(ws @ h + w_in_drive[t])
        seq[t] = h
    return seq


def update_states(reservoir: Reservoir, inputs: np.ndarray,
                  h0: list[np.ndarray] | None = None,
                  fit_reductions: bool = False) -> list[np.ndarray]:
    """Propagate reservoir states over an input sequence, layer by layer.

    inputs has shape (T, input_dim). Layers beyond the first are driven by
    the EOF reduction of the previous layer's trajectory; bases are fitted
    from the post-washout states when fit_reductions is set (or missing).
    Returns one (T, n_reservoir) array per layer.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if not np.isfinite(inputs).all():
        raise NumericError("non-finite reservoir inputs")
    if inputs.ndim != 2 or inputs.shape[1] != reservoir.input_dim:
        raise ConfigurationError(
            f"inputs must be (T, {reservoir.input_dim}), got {inputs.shape}")
    cfg = reservoir.config
    alpha, zeta = _resolved_hyperparams(reservoir)
    drive = inputs
    states = []
    for d in range(cfg.depth):
        w_in_drive = drive @ reservoir.w_in[d].T
        h0_d = None if h0 is None else h0[d]
        seq = _layer_run(reservoir.w[d], w_in_drive, reservoir.radii[d], alpha, zeta[d], h0_d)
        states.append(seq)
        if d < cfg.depth - 1:
            if fit_reductions or reservoir.eofs[d] is None:
                basis, _ = eof_reduce(seq[cfg.washout :], cfg.n_reduced)
                reservoir.eofs[d] = basis
            drive = reservoir.eofs[d].project(seq)
    return states


def _resolved_hyperparams(reservoir: Reservoir) -> tuple[float, tuple[float, ...]]:
    if reservoir.alpha is None or reservoir.zeta is None:
        raise ConfigurationError("leaking rate / scaling not set; fit or grid-search first")
    return reservoir.alpha, reservoir.zeta


def _step_states(reservoir: Reservoir, h_prev: list[np.ndarray], z: np.ndarray) -> list[np.ndarray]:
    cfg = reservoir.config
    alpha, zeta = _resolved_hyperparams(reservoir)
    h_new = []
    drive = z
    for d in range(cfg.depth):
        scale = zeta[d] / reservoir.radii[d] if reservoir.radii[d] > 0 else 0.0
        pre = scale * (reservoir.w[d] @ h_prev[d]) + reservoir.w_in[d] @ drive
        h = (1.0 - alpha) * h_prev[d] + alpha * np.tanh(pre)
        h_new.append(h)
        if d < cfg.depth - 1:
            drive = reservoir.eofs[d].project(h)
    return h_new


def _fit_k_stats(reservoir: Reservoir, states: list[np.ndarray]) -> None:
    cfg = reservoir.config
    cut = cfg.washout
    pooled_std = float(states[-1][cut:].std())
    for d in range(cfg.depth - 1):
        red = reservoir.eofs[d].project(states[d][cut:])
        mu = red.mean(axis=0)
        sig = red.std(axis=0)
        scale = np.where(sig > 1e-12, pooled_std / np.where(sig > 1e-12, sig, 1.0), 0.0)
        reservoir.k_mu[d] = mu
        reservoir.k_scale[d] = scale


def _features(reservoir: Reservoir, states: list[np.ndarray]) -> np.ndarray:
    """Regressor rows [h_D | k(reduced h_1) | ... | k(reduced h_{D-1})]."""
    cfg = reservoir.config
    parts = [states[-1]]
    for d in range(cfg.depth - 1):
        red = reservoir.eofs[d].project(states[d])
        parts.append((red - reservoir.k_mu[d]) * reservoir.k_scale[d])
    return np.concatenate(parts, axis=1)


def _features_single(reservoir: Reservoir, h: list[np.ndarray]) -> np.ndarray:
    return _features(reservoir, [hd[None] for hd in h])[0]


def build_lagged(latents: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Input rows z_t = (Y_{t-1}, ..., Y_{t-q}) and targets Y_t, for t = q..T-1."""
    latents = np.asarray(latents, dtype=np.float64)
    t_len = latents.shape[0]
    if t_len <= q:
        raise ConfigurationError(f"need more than lags={q} frames, got {t_len}")
    cols = [latents[q - 1 - j : t_len - 1 - j] for j in range(q)]
    return np.concatenate(cols, axis=1), latents[q:]


def fit_reservoir(config: ESNConfig, latents: np.ndarray, seed: int,
                  alpha: float | None = None, zeta: tuple | None = None) -> Reservoir:
    """Sample a reservoir and fit its readout on one-step-ahead latent targets."""
    latents = np.asarray(latents, dtype=np.float64)
    alpha = alpha if alpha is not None else config.leaking_rate
    zeta = zeta if zeta is not None else config.zeta_list()
    if alpha is None or zeta is None:
        alpha, zeta = grid_search_hyperparams(config, latents, seed)
    res = sample_reservoir(config, config.lags * latents.shape[1], seed)
    res.alpha = float(alpha)
    res.zeta = tuple(float(z) for z in (zeta if not np.isscalar(zeta) else [zeta] * config.depth))
    inputs, targets = build_lagged(latents, config.lags)
    states = update_states(res, inputs, fit_reductions=True)
    _fit_k_stats(res, states)
    feats = _features(res, states)
    cut = config.washout
    if cut >= feats.shape[0]:
        raise ConfigurationError("washout leaves no rows to fit the readout")
    res.readout = fit_readout(feats[cut:], targets[cut:], config.ridge)
    residuals = targets[cut:] - feats[cut:] @ res.readout
    res.resid_var = float(np.mean(residuals**2))
    res.resid_sd = residuals.std(axis=0)
    return res


def grid_search_hyperparams(config: ESNConfig, latents: np.ndarray, seed: int | None = None,
                            alphas=GRID_ALPHAS, zetas=GRID_ZETAS) -> tuple[float, tuple[float, ...]]:
    """Pick (leaking rate, scaling) minimizing one-step validation MSE.

    The validation block is the last tenth of the usable rows; a single
    sampled reservoir is reused across the grid since the matrices do not
    depend on either hyperparameter. A scalar scaling is shared by all layers.
    """
    latents = np.asarray(latents, dtype=np.float64)
    seed = config.seed if seed is None else seed
    res = sample_reservoir(config, config.lags * latents.shape[1], seed)
    inputs, targets = build_lagged(latents, config.lags)
    n_rows = inputs.shape[0]
    n_val = max(1, round(0.1 * n_rows))
    fit_lo = config.washout
    fit_hi = n_rows - n_val
    if fit_hi <= fit_lo:
        raise ConfigurationError("not enough rows for washout plus a validation block")
    best = (np.inf, None, None)
    for alpha in alphas:
        for z in zetas:
            res.alpha = float(alpha)
            res.zeta = (float(z),) * config.depth
            for i in range(config.depth - 1):
                res.eofs[i] = None
            states = update_states(res, inputs, fit_reductions=True)
            _fit_k_stats(res, states)
            feats = _features(res, states)
            try:
                b = fit_readout(feats[fit_lo:fit_hi], targets[fit_lo:fit_hi], config.ridge)
            except NumericError:
                continue
            pred = feats[fit_hi:] @ b
            mse = float(np.mean((targets[fit_hi:] - pred) ** 2))
            if mse < best[0]:
                best = (mse, float(alpha), (float(z),) * config.depth)
    if best[1] is None:
        raise NumericError("grid search failed for every hyperparameter pair")
    return best[1], best[2]


def forecast_iterative(reservoir: Reservoir, history: np.ndarray, horizon: int,
                       noise_rng: np.random.Generator | None = None) -> np.ndarray:
    """Roll the fitted reservoir forward, feeding each forecast back as input.

    With a noise generator, each step also draws the readout equation's
    residual term (per-coordinate fitted scale), so repeated calls sample
    latent forecast paths instead of the deterministic rollout.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if reservoir.readout is None:
        raise ConfigurationError("reservoir has no fitted readout")
    history = np.asarray(history, dtype=np.float64)
    cfg = reservoir.config
    if history.shape[0] < cfg.lags + cfg.washout:
        raise ConfigurationError("history shorter than lags + washout")
    inputs, _ = build_lagged(history, cfg.lags)
    states = update_states(reservoir, inputs)
    h = [seq[-1] for seq in states]
    lag_buf = [history[-1 - j] for j in range(cfg.lags)]  # most recent first
    preds = np.empty((horizon, history.shape[1]))
    for s in range(horizon):
        z = np.concatenate(lag_buf)
        h = _step_states(reservoir, h, z)
        y = _features_single(reservoir, h) @ reservoir.readout
        if noise_rng is not None:
            y = y + reservoir.resid_sd * noise_rng.standard_normal(y.shape)
        preds[s] = y
        lag_buf = [y] + lag_buf[: cfg.lags - 1]
    return preds


def member_seeds(base_seed: int, count: int) -> list[int]:
    """Deterministic per-member seeds; a prefix of a longer list is stable."""
    return [int(s) for s in np.random.SeedSequence(base_seed).generate_state(count, np.uint64)]


@dataclass
class ESNEnsemble:
    """Independently sampled reservoirs sharing one hyperparameter configuration."""

    config: ESNConfig
    alpha: float
    zeta: tuple[float, ...]
    members: list[Reservoir]
    seeds: list[int]

    def extend(self, latents: np.ndarray, count: int) -> None:
        if count <= len(self.members):
            return
        seeds = member_seeds(self.config.seed, count)
        for s in seeds[len(self.members) :]:
            self.members.append(fit_reservoir(self.config, latents, s, self.alpha, self.zeta))
        self.seeds = seeds


def fit_ensemble(config: ESNConfig, latents: np.ndarray,
                 n_members: int | None = None) -> ESNEnsemble:
    """Grid-search shared hyperparameters, then fit n_members seeded reservoirs."""
    n_members = config.ensemble_size if n_members is None else n_members
    latents = np.asarray(latents, dtype=np.float64)
    alpha, zeta = config.leaking_rate, config.zeta_list()
    if alpha is None or zeta is None:
        alpha, zeta = grid_search_hyperparams(config, latents)
    seeds = member_seeds(config.seed, n_members)
    members = [fit_reservoir(config, latents, s, alpha, zeta) for s in seeds]
    return ESNEnsemble(config, float(alpha), tuple(zeta), members, seeds)


def ensemble_forecast(config: ESNConfig, history: np.ndarray, horizon: int,
                      n_members: int, seed: int | None = None,
                      process_noise: bool = False) -> list[np.ndarray]:
    """Fit n_members seeded reservoirs on the history and forecast each one.

    Members are fitted and discarded one at a time (only their paths are
    kept), in seed order; a failed member aborts with its index. With
    process_noise, each path draws its member's fitted residual term at
    every step (seeded per member, so runs are reproducible).
    """
    if n_members < 1:
        raise ConfigurationError("n_members must be >= 1")
    history = np.asarray(history, dtype=np.float64)
    base_seed = config.seed if seed is None else seed
    alpha, zeta = config.leaking_rate, config.zeta_list()
    if alpha is None or zeta is None:
        alpha, zeta = grid_search_hyperparams(config, history, base_seed)
    paths = []
    for i, s in enumerate(member_seeds(base_seed, n_members)):
        try:
            member = fit_reservoir(config, history, s, alpha, zeta)
            rng = np.random.default_rng(np.random.SeedSequence([s, 1])) if process_noise else None
            paths.append(forecast_iterative(member, history, horizon, noise_rng=rng))
        except Exception as exc:
            raise RuntimeError(f"ensemble member {i} failed: {exc}") from exc
    return paths
