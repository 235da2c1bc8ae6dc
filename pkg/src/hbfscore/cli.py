"""Command-line entry point: ``hbfscore <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import plotting
from .baselines import BaselineKind, run_baseline
from .channel import CsiDataset, ErrorLevel, load_dataset, make_dataset, perturb_csi, save_dataset
from .config import ConfigError, RunConfig
from .dsn import DenoiseNet, DsnConfig, denoise, train_dsn
from .hmgat import HMGAT, HmgatConfig, solver_from_model, train_hmgat
from .metrics import component_js, evaluate_sum_rates, ks_statistic, nre_per_sample
from .ncsn import NcsnConfig, NcsnModel, generate, train_ncsn
from .numerics import NonFiniteError, load_module, save_module
from .training import DivergenceError

log = logging.getLogger("hbfscore")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGENCE = 0, 1, 2, 3, 4

COMMANDS = ("gen-data", "train-hmgat", "train-ncsn", "sample-csi", "train-dsn", "denoise", "baseline", "eval",
            "augment")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers ---------------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(cfg: RunConfig, out: Path) -> None:
    cfg.save(out / "config.json")


def _load_data(path, cfg: RunConfig) -> CsiDataset:
    if path is None:
        raise ConfigError("this command needs --data")
    if not Path(path).exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return load_dataset(path, cfg.system)


def _write_model(out: Path, stem: str, model: torch.nn.Module, arch: dict) -> None:
    save_module(out / f"{stem}.bswt", model)
    (out / f"{stem}.json").write_text(json.dumps(arch, indent=2, sort_keys=True) + "\n")


def _read_arch(path: Path) -> dict:
    meta = path.with_suffix(".json")
    if not path.exists() or not meta.exists():
        raise FileNotFoundError(f"missing checkpoint {path} (or its {meta.name})")
    return json.loads(meta.read_text())


def _load_hmgat(path) -> HMGAT:
    path = Path(path)
    arch = _read_arch(path)
    return load_module(path, HMGAT(arch["n_t"], HmgatConfig(**arch["config"]))).eval()


def _load_ncsn(path) -> NcsnModel:
    path = Path(path)
    arch = _read_arch(path)
    return load_module(path, NcsnModel(arch["n_t"], arch["levels"], NcsnConfig(**arch["config"]))).eval()


def _load_dsn(path) -> DenoiseNet:
    path = Path(path)
    arch = _read_arch(path)
    return load_module(path, DenoiseNet(arch["n_t"], DsnConfig(**arch["config"]))).eval()


def _split(ds: CsiDataset, name: str) -> np.ndarray:
    return ds.samples if name == "all" else getattr(ds, name)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- commands ---------------------------------------------------------------------------


def cmd_gen_data(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    ds = make_dataset(cfg.system, cfg.count, cfg.seed)
    save_dataset(out / "dataset.csid", ds)
    _snapshot(cfg, out)
    log.info("wrote %d samples to %s", len(ds), out / "dataset.csid")


def cmd_train_hmgat(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    ds = _load_data(args.data, cfg)
    hcfg = replace(cfg.hmgat, dropout=cfg.train.dropout)
    result = train_hmgat(ds, hcfg, cfg.train)
    _write_model(out, "hmgat", result.model, {"n_t": cfg.system.N_T, "config": hcfg.to_dict()})
    result.write_trace(out / "trace.csv")
    if result.trace:
        plotting.plot_trace(result.trace, out / "trace.png", "validation sum rate")
    _snapshot(cfg, out)


def cmd_train_ncsn(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    ds = _load_data(args.data, cfg)
    schedule = cfg.schedule.build()
    result = train_ncsn(ds, schedule, cfg.ncsn, cfg.train)
    _write_model(out, "ncsn", result.model, {"n_t": cfg.system.N_T, "levels": schedule.L,
                                             "config": cfg.ncsn.to_dict()})
    result.write_trace(out / "trace.csv")
    if result.trace:
        plotting.plot_trace(result.trace, out / "trace.png", "validation loss")
    _snapshot(cfg, out)


def cmd_sample_csi(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    model = _load_ncsn(args.model)
    schedule = cfg.schedule.build()
    if schedule.L != model.levels:
        raise ConfigError(f"schedule has {schedule.L} levels but the model was trained with {model.levels}")
    gen = torch.Generator().manual_seed(cfg.seed)
    samples = generate(model, schedule, cfg.count, cfg.system.K, gen)
    save_dataset(out / "generated.csid", CsiDataset(cfg.system, samples))
    if args.reference:
        ref = _load_data(args.reference, cfg)
        scores = component_js(samples, ref.train)
        _write_rows(out / "js.csv", ["component", "js_bits"], sorted(scores.items()))
        if len(samples):
            plotting.plot_components(samples, ref.train, out / "components.png")
    _snapshot(cfg, out)


def cmd_train_dsn(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    ds = _load_data(args.data, cfg)
    result = train_dsn(ds, cfg.error_levels_db, cfg.dsn, cfg.dsn_lambda, cfg.train)
    _write_model(out, "dsn", result.model, {"n_t": cfg.system.N_T, "config": cfg.dsn.to_dict()})
    result.write_trace(out / "trace.csv")
    if result.trace:
        plotting.plot_trace(result.trace, out / "trace.png", "validation loss")
    _snapshot(cfg, out)


def cmd_denoise(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    if args.error_db is None:
        raise ConfigError("denoise needs --error-db")
    model = _load_dsn(args.model)
    H_tilde = _load_data(args.data, cfg).samples
    level = ErrorLevel.from_db(args.error_db)
    save_dataset(out / "denoised.csid", CsiDataset(cfg.system, denoise(model, H_tilde, level.delta2_E)))
    _snapshot(cfg, out)


def cmd_baseline(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    H = _split(_load_data(args.data, cfg), args.split)
    rng = np.random.default_rng(cfg.seed)
    mean, rates = evaluate_sum_rates(H, lambda h: run_baseline(args.kind, h, cfg.system, rng), cfg.system.sigma2)
    _write_rows(out / f"{args.kind}_rates.csv", ["index", "sum_rate"], [(i, repr(r)) for i, r in enumerate(rates)])
    _snapshot(cfg, out)
    log.info("%s mean sum rate %.4f over %d samples", args.kind, mean, len(rates))


def cmd_eval(args, cfg: RunConfig) -> None:
    out = _out_dir(args)
    ds = _load_data(args.data, cfg)
    H_true = _split(ds, args.split)
    digest = cfg.digest()
    rows: list[tuple] = []
    H_input = H_true
    if args.error_db is not None:
        level = ErrorLevel.from_db(args.error_db)
        H_input = perturb_csi(H_true, level, np.random.default_rng(cfg.seed))
        rows.append(("nre_input", float(nre_per_sample(H_true, H_input).mean())))
        if args.dsn:
            H_input = denoise(_load_dsn(args.dsn), H_input, level.delta2_E)
            rows.append(("nre_denoised", float(nre_per_sample(H_true, H_input).mean())))

    if args.solver == "hmgat":
        if not args.model:
            raise ConfigError("--solver hmgat needs --model")
        solver = solver_from_model(_load_hmgat(args.model), cfg.system)
    else:
        rng = np.random.default_rng(cfg.seed)
        solver = lambda h: run_baseline(args.solver, h, cfg.system, rng)  # noqa: E731
    mean, rates = evaluate_sum_rates(H_true, solver, cfg.system.sigma2, H_input)
    rows.append(("mean_sum_rate", mean))

    if args.generated:
        gen = _load_data(args.generated, cfg).samples
        for comp, v in sorted(component_js(gen, ds.train).items()):
            rows.append((f"js_{comp}", v))
        _, ref_rates = evaluate_sum_rates(ds.train, lambda h: run_baseline("pzf", h, cfg.system), cfg.system.sigma2)
        _, gen_rates = evaluate_sum_rates(gen, lambda h: run_baseline("pzf", h, cfg.system), cfg.system.sigma2)
        rows.append(("ks_pzf_sum_rate", ks_statistic(ref_rates, gen_rates)))
        plotting.plot_components(gen, ds.train, out / "components.png")

    _write_rows(out / "metrics.csv", ["metric", "value", "split", "config_hash"],
                [(m, repr(float(v)), args.split, digest) for m, v in rows])
    (out / "metrics.json").write_text(json.dumps(
        [{"metric": m, "value": float(v), "split": args.split, "config_hash": digest} for m, v in rows],
        indent=2) + "\n")
    _write_rows(out / "per_sample.csv", ["index", "sum_rate"], [(i, repr(r)) for i, r in enumerate(rates)])
    plotting.plot_rate_cdf({args.solver: rates}, out / "rate_cdf.png")
    _snapshot(cfg, out)


def cmd_augment(args, cfg: RunConfig) -> None:
    """Insert generated samples into the training split; validation and test stay untouched."""
    out = _out_dir(args)
    ds = _load_data(args.data, cfg)
    if args.generated:
        gen = _load_data(args.generated, cfg).samples
    else:
        gen = np.empty((0, cfg.system.N_T, cfg.system.K), dtype=np.complex128)
    if args.count is not None:
        gen = gen[:args.count]
    train, val, test = ds.split
    samples = np.concatenate([ds.train, gen, ds.val, ds.test])
    n_train = len(train) + len(gen)
    split = (range(0, n_train), range(n_train, n_train + len(val)), range(n_train + len(val), len(samples)))
    save_dataset(out / "dataset.csid", CsiDataset(cfg.system, samples, split))
    _snapshot(cfg, out)
    log.info("training split %d -> %d samples", len(train), n_train)


HANDLERS = {
    "gen-data": cmd_gen_data, "train-hmgat": cmd_train_hmgat, "train-ncsn": cmd_train_ncsn,
    "sample-csi": cmd_sample_csi, "train-dsn": cmd_train_dsn, "denoise": cmd_denoise,
    "baseline": cmd_baseline, "eval": cmd_eval, "augment": cmd_augment,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hbfscore", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run config; defaults are used for missing keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="run")
    p.add_argument("--data", help="input CSID dataset")
    p.add_argument("--model", help="model checkpoint (.bswt)")
    p.add_argument("--dsn", help="denoiser checkpoint for eval")
    p.add_argument("--generated", help="generated CSID dataset")
    p.add_argument("--reference", help="reference dataset for sample-csi statistics")
    p.add_argument("--count", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--error-db", type=float)
    p.add_argument("--kind", default="pzf", choices=[k.value for k in BaselineKind])
    p.add_argument("--solver", default="pzf", choices=["pzf", "equal_power_random", "hmgat"])
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    # schedule overrides for sample-csi / train-ncsn
    p.add_argument("--delta2-max", type=float)
    p.add_argument("--delta2-min", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--steps", type=int, help="Langevin iterations per level")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if args.count is not None and args.command in ("gen-data", "sample-csi"):
        cfg = replace(cfg, count=args.count)
    sched = {k: v for k, v in (("delta2_max", args.delta2_max), ("delta2_min", args.delta2_min),
                               ("levels", args.levels), ("epsilon", args.epsilon), ("T", args.steps))
             if v is not None}
    if sched:
        cfg = replace(cfg, schedule=replace(cfg.schedule, **sched))
    try:
        cfg.schedule.build()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.command == "gen-data" and cfg.count < 10:
        raise ConfigError("gen-data needs --count >= 10 for an 8:1:1 split")
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"hbfscore: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"hbfscore: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NonFiniteError) as exc:
        print(f"hbfscore: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError, ValueError) as exc:
        print(f"hbfscore: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
