"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.  Every
command is deterministic given (config, seed); the only wall-clock output is
the per-epoch `seconds` field of training histories.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (SYNTH_COMPONENTS, SYNTH_LENGTH, SYNTH_NOISE_STD, Config,
                     ConfigError, load_config)
from .data import chronological_split, load_csv, make_windows, synth_sines, window_batches
from .diagnostics import (alignment_to_json, cone_report_to_json,
                          dump_embeddings, evr_report_to_json,
                          intrinsic_dimension, trace_report)
from .grad import Param
from .model import ComponentSetting, Forecaster, ModelConfig, init_model
from .rng import Rng
from .theory import (ModalitySpec, closed_form_cosine, concentration_curve,
                     monte_carlo_cosine)
from .train import evaluate, standardize_splits, train
from .weights import read_tsupw1, write_tsupw1

DATA_STREAM = 0xDA7A
MODEL_STREAM = 0x0DE1
CONCENTRATION_M = [64, 256, 1024, 4096]
COSINE_SLACK = 0.02
POOL_WINDOWS = 256
TRACE_WINDOWS = 16

_ARM = {
    "PF": ComponentSetting("pretrained", "frozen"),
    "PT": ComponentSetting("pretrained", "trainable"),
    "RF": ComponentSetting("random", "frozen"),
    "RT": ComponentSetting("random", "trainable"),
}


def _load_tables(config: Config):
    window = config.window_spec()
    if config["data.synthetic"]:
        table = synth_sines(Rng(config["seed"], stream=DATA_STREAM),
                            length=SYNTH_LENGTH, channels=config["data.channels"],
                            components=SYNTH_COMPONENTS, noise_std=SYNTH_NOISE_STD)
    else:
        table = load_csv(config["data.path"])
    splits = chronological_split(table, window=window)
    return standardize_splits(*splits), window


def _build_params(config: Config, mcfg: ModelConfig | None = None):
    mcfg = mcfg or config.model_config()
    weight_file = read_tsupw1(config["model.weights"]) if config["model.weights"] else None
    params = init_model(mcfg, Rng(config["seed"], stream=MODEL_STREAM), weight_file)
    return mcfg, params


def _pool_inputs(table, window, limit: int) -> np.ndarray:
    windows = make_windows(table, window)[:limit]
    return np.stack([w.input for w in windows])


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_theorem1(args) -> int:
    if args.trials < 100:
        print("error: --trials must be >= 100", file=sys.stderr)
        return 2
    if args.sigma_ts < 0 or args.sigma_l < 0:
        print("error: sigma must be nonnegative", file=sys.stderr)
        return 2
    d = max(args.m, args.n)
    mu = np.zeros(d)
    mu[0] = 1.0
    ts = ModalitySpec(mu=mu, sigma=args.sigma_ts, manifold_dim=args.m)
    lang = ModalitySpec(mu=mu.copy(), sigma=args.sigma_l, manifold_dim=args.n)
    closed = closed_form_cosine(ts, lang)
    estimate = monte_carlo_cosine(ts, lang, args.trials, Rng(args.seed))

    # canonical 1/sqrt(m) curve: zero mean on the noise support, unit noise,
    # so the noise energy dominates and the asymptotic slope is visible
    conc_trials = max(1000, min(args.trials, 20000))
    template_mu = np.zeros(CONCENTRATION_M[-1] + 1)
    template_mu[-1] = 1.0
    template = ModalitySpec(mu=template_mu, sigma=1.0,
                            manifold_dim=CONCENTRATION_M[0])
    curve = concentration_curve(template, CONCENTRATION_M, conc_trials,
                                Rng(args.seed, stream=1))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "closed_form": closed,
        "mc_mean": estimate.mean,
        "mc_stderr": estimate.stderr,
        "slope": None if np.isnan(curve.slope) else curve.slope,
    }
    (out / "theorem1.json").write_text(json.dumps(summary, indent=2) + "\n")
    rows = ["m,mean,std,rel_fluct"]
    rows += [f"{p.m},{_fmt(p.mean)},{_fmt(p.std)},{_fmt(p.rel_fluct)}"
             for p in curve.points]
    (out / "concentration.csv").write_text("\n".join(rows) + "\n")

    gap = abs(estimate.mean - closed)
    tol = 3.0 * estimate.stderr + COSINE_SLACK
    print(f"theorem1: closed={closed:.6f} mc={estimate.mean:.6f} "
          f"gap={gap:.6f} tol={tol:.6f} slope={curve.slope:.3f}")
    return 0 if gap <= tol else 1


def cmd_pca_probe(args) -> int:
    config = load_config(args.config)
    (train_t, val_t, test_t), window = _load_tables(config)
    split = {"train": train_t, "val": val_t, "test": test_t}[args.split]
    mcfg, params = _build_params(config)
    model = Forecaster(mcfg, params)
    if args.stage == "language":
        tokens = model.tokens_at_stage(np.empty((0, 0)), "language")
    else:
        tokens = model.tokens_at_stage(_pool_inputs(split, window, POOL_WINDOWS),
                                       args.stage)
    report = intrinsic_dimension(tokens, threshold=args.threshold)
    Path(args.out).write_text(evr_report_to_json(report) + "\n")
    print(f"pca-probe: stage={args.stage} tokens={tokens.shape[0]} "
          f"intrinsic_dim={report.intrinsic_dim} @ evr>={args.threshold}")
    return 0


def cmd_diagnose(args) -> int:
    config = load_config(args.config)
    (_, _, test_t), window = _load_tables(config)
    mcfg, params = _build_params(config)
    model = Forecaster(mcfg, params)
    X = _pool_inputs(test_t, window, TRACE_WINDOWS)
    # prototype rows are only a meaningful language sample once trained
    # (i.e. when weights were loaded); fresh models use raw vocab rows
    source = "prototypes" if (mcfg.enhancer and config["model.weights"]) else "vocab"
    language = model.language_reference(source=source)
    trace = model.paired_trace(X, language)
    cone, alignment = trace_report(trace)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cone_report.json").write_text(cone_report_to_json(cone) + "\n")
    (out / "alignment.json").write_text(alignment_to_json(alignment) + "\n")
    dump_embeddings(trace, out / "embeddings.csv")
    final = alignment[-1]
    print(f"diagnose: layers={len(trace) - 1} final centroid_cos="
          f"{final.centroid_cosine:.4f} collapse_ratio={final.collapse_ratio:.4f}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    (train_t, val_t, test_t), window = _load_tables(config)
    mcfg, params = _build_params(config)
    best, history = train(params, (train_t, val_t), mcfg, window,
                          config.train_config())
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"epoch": e.epoch, "train_mse": e.train_mse,
                         "val_mse": e.val_mse, "val_mae": e.val_mae,
                         "seconds": e.seconds}) for e in history.epochs]
    (out / "history.jsonl").write_text("\n".join(lines) + "\n")
    write_tsupw1(out / "model.tsupw", {n: p.value for n, p in best.items()})
    test_mse, test_mae = evaluate(best, test_t, mcfg, window)
    print(f"train: best_epoch={history.best_epoch} "
          f"val_mse={history.epochs[history.best_epoch].val_mse:.6f} "
          f"test_mse={test_mse:.6f} test_mae={test_mae:.6f}")
    return 0


def cmd_forecast(args) -> int:
    config = load_config(args.config)
    (_, _, test_t), window = _load_tables(config)
    mcfg = config.model_config()
    windows = make_windows(test_t, window)
    if args.baseline is None and not args.weights:
        print("error: forecast needs --weights unless --baseline is given",
              file=sys.stderr)
        return 2
    if args.baseline == "persistence":
        rows = ["window,channel,step,yhat,y"]
        for i, w in enumerate(windows):
            last = w.input[-1] * w.revin.std + w.revin.mean
            for h, y in enumerate(w.target):
                rows.append(f"{i},{w.channel},{h},{_fmt(last)},{_fmt(y)}")
    else:
        tensors = read_tsupw1(args.weights)
        params = _params_from_tensors(mcfg, tensors)
        model = Forecaster(mcfg, params)
        rows = ["window,channel,step,yhat,y"]
        i = 0
        for X, Y, means, stds in window_batches(windows, 256):
            yhat, _ = model.forward(X, train=False, keep_caches=False)
            pred = yhat * stds[:, None] + means[:, None]
            for b in range(X.shape[0]):
                for h in range(Y.shape[1]):
                    rows.append(f"{i},{windows[i].channel},{h},"
                                f"{_fmt(pred[b, h])},{_fmt(Y[b, h])}")
                i += 1
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"forecast: wrote {len(rows) - 1} rows for {len(windows)} windows")
    return 0


def _params_from_tensors(mcfg: ModelConfig, tensors: dict[str, np.ndarray]) -> dict[str, Param]:
    from .model import _tensor_shapes
    params = {}
    for name, shape in _tensor_shapes(mcfg).items():
        if name not in tensors:
            raise KeyError(f"weight file missing tensor {name!r}")
        value = tensors[name]
        if value.shape != shape:
            raise ValueError(f"tensor {name!r}: shape {value.shape} != expected {shape}")
        params[name] = Param(name=name, value=value)
    return params


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    (train_t, val_t, _), window = _load_tables(config)
    have_weights = bool(config["model.weights"])
    base = config.model_config()
    tcfg = config.train_config()
    rows = ["ln,mha,status,val_mse,val_mae,frozen_ok"]
    ran = skipped = 0
    for ln_arm in ("PF", "PT", "RF", "RT"):
        for mha_arm in ("PF", "PT", "RF", "RT"):
            needs_weights = "P" in (ln_arm[0], mha_arm[0])
            if needs_weights and not have_weights:
                print(f"ablate: skipping LN-{ln_arm}/MHA-{mha_arm} (no weight file)")
                rows.append(f"{ln_arm},{mha_arm},skipped,,,")
                skipped += 1
                continue
            components = dict(base.components)
            components["ln"] = _ARM[ln_arm]
            components["mha"] = _ARM[mha_arm]
            mcfg = replace(base, components=components)
            _, params = _build_params(config, mcfg)
            frozen_before = {n: p.value.tobytes() for n, p in params.items()
                             if not p.trainable}
            _, _ = train(params, (train_t, val_t), mcfg, window, tcfg)
            frozen_ok = all(params[n].value.tobytes() == blob
                            for n, blob in frozen_before.items())
            val_mse, val_mae = evaluate(params, val_t, mcfg, window)
            rows.append(f"{ln_arm},{mha_arm},run,{_fmt(val_mse)},{_fmt(val_mae)},"
                        f"{str(frozen_ok).lower()}")
            ran += 1
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"ablate: {ran} cells run, {skipped} skipped")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timesup")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theorem1", help="verify the expected-cosine closed form")
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--sigma-ts", type=float, default=0.1)
    p.add_argument("--sigma-l", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=2021)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_theorem1)

    p = sub.add_parser("pca-probe", help="intrinsic dimension of pooled tokens")
    p.add_argument("--config", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.add_argument("--stage", choices=("raw", "fused", "language"), default="raw")
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca_probe)

    p = sub.add_parser("diagnose", help="per-layer cone/alignment reports + dump")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("train", help="train and save history + best weights")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="emit predictions CSV on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", choices=("persistence",))
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("ablate", help="run the LN x MHA init/freeze grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
