"""Command-line entry points: simulate-burgers, train, forecast, power."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import EvalReport, coverage, grand_mean_coverage, mse_map, persistence_forecast
from .burgers import BurgersConfig, simulate
from .cae import CAEConfig
from .errors import ConfigurationError, InputError
from .esn import ESNConfig
from .grid import minmax_stats, normalize
from .gsf import read_gsf, write_gsf
from .pipeline import ForecastModel, ensemble_mean, forecast, interval, train_model
from .windpower import PowerCurve, power_map, shipped_curve

PRESETS = {
    "burgers": {
        "train_frames": 80, "cae_filters": "16,32,64", "cae_epochs": 500, "batch": 2,
        "esn_nh": 64, "esn_depth": 1, "horizon": 21, "keep_prob": 0.21,
    },
    "wrf": {
        "train_frames": 217, "cae_filters": "32,64,128", "cae_epochs": 1000, "batch": 10,
        "esn_nh": 128, "esn_depth": 1, "horizon": 24, "keep_prob": 0.3,
    },
}


def _apply_preset(args, keys):
    if getattr(args, "preset", None):
        preset = PRESETS[args.preset]
        for key in keys:
            if key in preset and getattr(args, key, None) is None:
                setattr(args, key, preset[key])


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        print(f"error: file not found: {p}", file=sys.stderr)
        raise SystemExit(2)
    return p


def cmd_simulate_burgers(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = BurgersConfig(viscosity=args.nu, grid=args.grid, n_steps=args.steps)
    for i in range(args.seeds):
        seed = args.base_seed + i
        series = simulate(config, seed)
        path = out_dir / f"burgers_{seed:03d}.gsf"
        write_gsf(path, series)
        print(f"wrote {path} ({series.shape[0]}x{series.shape[1]}x{series.shape[2]}x{series.shape[3]})")
    return 0


def cmd_train(args) -> int:
    _apply_preset(args, ("train_frames", "cae_filters", "cae_epochs", "batch",
                         "esn_nh", "esn_depth", "keep_prob"))
    if args.keep_prob is None:
        args.keep_prob = 1.0
    for key in ("train_frames", "cae_filters", "cae_epochs", "batch", "esn_nh", "esn_depth"):
        if getattr(args, key) is None:
            print(f"error: --{key.replace('_', '-')} is required (or use --preset)", file=sys.stderr)
            return 2
    data = read_gsf(_require_file(args.data))
    if args.train_frames >= data.n_steps:
        print(f"error: --train-frames {args.train_frames} must be below T={data.n_steps}",
              file=sys.stderr)
        return 2
    train = data.window(0, args.train_frames)
    stats = minmax_stats(train)
    train_norm = normalize(train, stats)
    filters = tuple(int(v) for v in args.cae_filters.split(","))
    cae_config = CAEConfig(
        input_shape=data.shape[1:],
        encoder_filters=filters,
        epochs=args.cae_epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        final_activation=args.final_activation,
        keep_prob=args.keep_prob,
        seed=args.seed,
    )
    esn_config = ESNConfig(
        n_reservoir=args.esn_nh,
        depth=args.esn_depth,
        n_reduced=min(args.esn_nh, args.esn_nreduced),
        lags=args.q,
        ensemble_size=args.ensemble,
        ridge=args.ridge,
        seed=args.seed,
    )
    try:
        model = train_model(train_norm, cae_config, esn_config)
    except Exception as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return 1
    model.save(args.out_model)
    losses = model.cae.loss_history
    print(f"trained on {args.train_frames} frames; final epoch loss {losses[-1]:.6g}")
    print(f"reservoirs: {len(model.ensemble.members)} members, "
          f"alpha={model.ensemble.alpha}, zeta={model.ensemble.zeta[0]}")
    print(f"wrote {args.out_model}")
    return 0


def cmd_forecast(args) -> int:
    model = ForecastModel.load(_require_file(args.model))
    data = read_gsf(_require_file(args.data))
    if data.shape[1:] != tuple(model.cae.config.input_shape):
        print("error: data dims do not match the model", file=sys.stderr)
        return 2
    horizon = args.horizon
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        ens = forecast(model, horizon, n_temporal=args.n_temporal, n_spatial=args.n_spatial,
                       keep_prob=args.keep_prob, seed=args.seed)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    mean = ensemble_mean(ens)
    write_gsf(out_dir / "mean.gsf", mean)
    levels = [int(v) for v in args.levels.split(",")] if args.levels else []
    bands = {}
    for level in levels:
        lo, hi = interval(ens, level / 100.0)
        write_gsf(out_dir / f"band_{level}_lower.gsf", lo)
        write_gsf(out_dir / f"band_{level}_upper.gsf", hi)
        bands[level] = (lo, hi)
    if args.write_members:
        for i, member in enumerate(ens.members):
            write_gsf(out_dir / f"member_{i:03d}.gsf", member)
    t_train = model.t_train
    if data.n_steps >= t_train + horizon:
        truth = data.window(t_train, t_train + horizon)
        report = EvalReport(meta={"horizon": horizon, "seed": args.seed,
                                  "n_temporal": args.n_temporal, "n_spatial": args.n_spatial})
        report.add_mse("forecast_mean", mse_map(truth, mean))
        persist = persistence_forecast(data.window(0, t_train), horizon)
        report.add_mse("persistence", mse_map(truth, persist))
        for level, (lo, hi) in bands.items():
            report.add_coverage("marginal", level, coverage(lo, hi, truth))
            report.add_coverage("grand_mean", level, grand_mean_coverage(lo, hi, truth))
        report.save_csv(out_dir / "report.csv")
        print(report.format_table())
    print(f"wrote forecasts to {out_dir}")
    return 0


def cmd_power(args) -> int:
    data = read_gsf(_require_file(args.data))
    if args.curve:
        curve = PowerCurve.from_csv(_require_file(args.curve), hub_height=args.hub_height)
    else:
        curve = shipped_curve()
        curve.hub_height = args.hub_height
    try:
        series, mean, std = power_map(data, curve, source_height=args.source_height,
                                      kappa=args.kappa)
    except (InputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_gsf(args.out, series)
    print(f"domain mean power: {mean:.4f} kW (std {std:.4f} kW)")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridcast",
                                     description="Spatio-temporal field forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate-burgers", help="generate periodic 2D Burgers datasets")
    sim.add_argument("--nu", type=float, default=0.005)
    sim.add_argument("--grid", type=int, default=64)
    sim.add_argument("--steps", type=int, default=101)
    sim.add_argument("--seeds", type=int, default=10, help="number of datasets")
    sim.add_argument("--base-seed", type=int, default=0)
    sim.add_argument("--out-dir", required=True)
    sim.set_defaults(func=cmd_simulate_burgers)

    train = sub.add_parser("train", help="fit the two-stage model on a GSF file")
    train.add_argument("--data", required=True)
    train.add_argument("--preset", choices=sorted(PRESETS))
    train.add_argument("--train-frames", type=int, dest="train_frames")
    train.add_argument("--cae-filters", dest="cae_filters")
    train.add_argument("--cae-epochs", type=int, dest="cae_epochs")
    train.add_argument("--batch", type=int)
    train.add_argument("--lr", type=float, default=1e-3)
    train.add_argument("--keep-prob", type=float, default=None, dest="keep_prob",
                       help="dropout keep probability stored with the model")
    train.add_argument("--final-activation", default="sigmoid",
                       choices=["sigmoid", "identity", "tanh", "softmax_channels"])
    train.add_argument("--esn-nh", type=int, dest="esn_nh")
    train.add_argument("--esn-depth", type=int, dest="esn_depth")
    train.add_argument("--esn-nreduced", type=int, default=32)
    train.add_argument("--q", type=int, default=1)
    train.add_argument("--ridge", type=float, default=1e-2)
    train.add_argument("--ensemble", type=int, default=10)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out-model", required=True)
    train.set_defaults(func=cmd_train)

    fc = sub.add_parser("forecast", help="roll a trained model forward and write bands")
    fc.add_argument("--model", required=True)
    fc.add_argument("--data", required=True)
    fc.add_argument("--horizon", type=int, required=True)
    fc.add_argument("--n-temporal", type=int, default=1, dest="n_temporal")
    fc.add_argument("--n-spatial", type=int, default=1, dest="n_spatial")
    fc.add_argument("--keep-prob", type=float, default=None, dest="keep_prob")
    fc.add_argument("--levels", default="95,90,80")
    fc.add_argument("--write-members", action="store_true")
    fc.add_argument("--seed", type=int, default=0)
    fc.add_argument("--out-dir", required=True)
    fc.set_defaults(func=cmd_forecast)

    pw = sub.add_parser("power", help="convert wind-speed forecasts to turbine power")
    pw.add_argument("--data", required=True)
    pw.add_argument("--curve", help="power curve CSV (default: bundled N100-2500)")
    pw.add_argument("--hub-height", type=float, default=80.0, dest="hub_height")
    pw.add_argument("--source-height", type=float, default=10.0, dest="source_height")
    pw.add_argument("--kappa", type=float, default=1.0 / 7.0)
    pw.add_argument("--out", required=True)
    pw.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (InputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
