"""Command line: ``python -m eafsched <verb> [--config FILE] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench
from .baselines import run_fixed
from .milp.model import build_window
from .milp.mps import export_mps
from .plant import load_plant, validate_plant
from .prices import save_price_csv, synth_prices
from .qlearning import QTable, RLConfig, evaluate, td_shrink_ratio, train, write_td_csv
from .rolling import run_rolling


def _config(args) -> bench.ExperimentConfig:
    over = {"seed": args.seed, "out": args.out}
    if getattr(args, "plant", None):
        over["plant"] = args.plant
    cfg = bench.load_config(args.config, **over)
    if getattr(args, "days", None):
        cfg.prices.synthetic_days = args.days
        cfg.prices.validate()
    rl = asdict(cfg.rl)
    if getattr(args, "kappa", None) is not None:
        rl["kappa"] = args.kappa
    if getattr(args, "episodes", None) is not None:
        rl["episodes"] = args.episodes
    cfg.rl = RLConfig(**rl)
    return cfg


def _print_rows(rows):
    if not rows:
        return
    keys = list(rows[0])
    print(",".join(keys))
    for r in rows:
        print(",".join("" if r[k] is None else f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys))


def cmd_validate(args) -> int:
    path = Path(args.config) if args.config else None
    if path is not None and path.suffix.lower() == ".json":
        cfg = _config(args)
        plant = cfg.load_plant()
        print(f"experiment config ok: plant={cfg.plant}")
    elif path is not None:
        plant = load_plant(path)
    else:
        plant = bench.ExperimentConfig(plant=args.plant or "homogeneous").load_plant()
    problems = validate_plant(plant)
    for v in problems:
        print(f"{v.code}: {v.message}")
    if not problems:
        print(f"plant ok: {plant.n_units} units, P_max={plant.power_cap}")
    return 1 if problems else 0


def cmd_synth(args) -> int:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    dap, rtp = synth_prices(args.seed or 0, args.days or 60)
    save_price_csv(dap, out / "dap.csv")
    save_price_csv(rtp, out / "rtp.csv")
    print(f"wrote {len(dap)} steps to {out / 'dap.csv'} and {out / 'rtp.csv'}")
    return 0


def _single(args, name: str, make_log) -> int:
    cfg = _config(args)
    plant = cfg.load_plant()
    data = bench.load_data(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lg = make_log(cfg, plant, data, out)
    lg.to_csv(out / f"dispatch_{name}.csv")
    lg.write_summary(out / f"summary_{name}.json")
    print(json.dumps(lg.summary(), indent=2, sort_keys=True))
    return 0


def cmd_baseline(args) -> int:
    return _single(args, "baseline", lambda cfg, plant, data, out: run_fixed(plant, data.rtp_test, cfg.baseline_spec(plant)))


def cmd_train(args) -> int:
    cfg = _config(args)
    plant = cfg.load_plant()
    data = bench.load_data(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    res = train(plant, data.dap_train, RLConfig(**{**asdict(cfg.rl), "seed": cfg.seed}))
    res.table.save(out / "qtable.csv")
    if len(res.td) >= 9:
        write_td_csv(res.td, out / "td_trace.csv")
        print(f"TD rolling-median ratio (last 10% / first 5%): {td_shrink_ratio(res.td):.4f}")
    print(f"wrote {out / 'qtable.csv'} ({int((res.table.visits > 0).sum())} visited entries)")
    return 0


def cmd_eval(args) -> int:
    qpath = Path(args.qtable) if args.qtable else Path(args.out or "out") / "qtable.csv"
    table = QTable.load(qpath)
    return _single(args, "qlearning", lambda cfg, plant, data, out: evaluate(table, data.dap_test, data.rtp_test, plant).log)


def cmd_milp(args) -> int:
    return _single(args, "milp", lambda cfg, plant, data, out: run_rolling(plant, data.rtp_test, cfg.rolling))


def cmd_compare(args) -> int:
    cfg = _config(args)
    rep = bench.run_hetero(cfg) if args.hetero else bench.run_compare(cfg)
    _print_rows(rep.table)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    kappas = [float(k) for k in args.kappas.split(",")]
    _print_rows(bench.run_kappa_sweep(cfg, kappas))
    return 0


def cmd_mps(args) -> int:
    cfg = _config(args)
    plant = cfg.load_plant()
    data = bench.load_data(cfg)
    H = args.horizon or cfg.rolling.horizon
    lam = data.rtp_test.values[args.start:args.start + H]
    model = build_window(plant, lam, None, len(lam), cfg.rolling.options)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = export_mps(model, out / "window.mps")
    print(f"wrote {path}: {model.n_vars} columns, {model.n_rows} rows")
    return 0


VERBS = {
    "validate": (cmd_validate, "check a plant file or experiment config"),
    "synth-prices": (cmd_synth, "write a synthetic DAP/RTP pair"),
    "simulate-baseline": (cmd_baseline, "fixed-cycle baseline on the test split"),
    "train-ql": (cmd_train, "train the Q-learning dispatcher on the train split"),
    "eval-ql": (cmd_eval, "evaluate a saved Q-table on the test split"),
    "run-milp": (cmd_milp, "rolling-horizon MILP on the test split"),
    "compare": (cmd_compare, "baseline, Q-learning and MILP side by side"),
    "sweep-kappa": (cmd_sweep, "Q-learning profit for several startup smoothing values"),
    "export-mps": (cmd_mps, "write one window model in MPS format"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eafsched", description="Furnace dispatch under electricity prices.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, (fn, help_) in VERBS.items():
        s = sub.add_parser(verb, help=help_)
        s.add_argument("--config", help="experiment config (JSON) or, for validate, a plant file")
        s.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
        s.add_argument("--out", default=None, help="output directory (default ./out)")
        s.add_argument("--plant", help="homogeneous, heterogeneous or a plant file")
        s.add_argument("--days", type=int, help="length of the synthetic series in days")
        s.add_argument("-v", "--verbose", action="store_true")
        if verb in ("train-ql", "eval-ql", "compare", "sweep-kappa"):
            s.add_argument("--kappa", type=float, help="startup smoothing κ")
            s.add_argument("--episodes", type=int, help="training episodes")
        if verb == "eval-ql":
            s.add_argument("--qtable", help="Q-table file (default OUT/qtable.csv)")
        if verb == "compare":
            s.add_argument("--hetero", action="store_true", help="use the heterogeneous three-unit plant")
        if verb == "sweep-kappa":
            s.add_argument("--kappas", default="11,12,13,14,15,16,17,18,19,20")
        if verb == "export-mps":
            s.add_argument("--horizon", type=int, help="window length (default from config)")
            s.add_argument("--start", type=int, default=0, help="first test step of the window")
        s.set_defaults(fn=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (bench.ConfigError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
