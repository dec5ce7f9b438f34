"""Command-line entry point: ``cmim {train,eval,toy2d,sensitivity,verify}``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import svg
from .checkpoint import load_checkpoint
from .config import RunConfig
from .data import make_toy2d, resolve_dataset
from .errors import ConfigError, ContractError, DataError, DivergenceError, UnsupportedOperation
from .evaluation import fill_zscores_and_ranks, write_report_csv, write_slopes_csv
from .experiments import GridSpec, eval_rows, mean_accuracy, mean_final_recon, mean_z, run_grid, run_name, slope_stats
from .presets import get_preset
from .toy2d import DEFAULT_STEPS, run_toy, write_trajectory
from .train import train
from .verify import format_report, run_verification

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_VERIFY = 5

log = logging.getLogger("cmim")


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(t) for t in text.split(",") if t.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def _base_config(args) -> RunConfig:
    preset = get_preset(args.preset)
    cfg = RunConfig.from_file(args.config) if args.config else preset.run_config()
    kw = {"preset": preset.name}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.out is not None:
        kw["out_dir"] = args.out
    return cfg.replace(**kw)


def _header(args, title: str) -> str:
    return f"# {title}\n" + get_preset(args.preset).header()


def cmd_train(args) -> int:
    cfg = _base_config(args)
    for key in ("variant", "dataset", "batch_size", "total_steps"):
        val = getattr(args, key, None)
        if val is not None:
            cfg = cfg.replace(**{key: val})
    ds = resolve_dataset(cfg.dataset, cfg.manifest)
    out = Path(cfg.out_dir)
    res = train(cfg, ds, out)
    print(_header(args, "train"))
    print(f"best step {res.best_step}  val loss {res.best_val:.6f}  final val loss {res.final_val:.6f}")
    print(res.best_path)
    return EXIT_OK


def _mean_sd_by(rows, key):
    groups: dict = {}
    for r in rows:
        groups.setdefault(key(r), []).append(r.z)
    labels = sorted(groups)
    return labels, [float(np.mean(groups[k])) for k in labels], [float(np.std(groups[k])) for k in labels]


def write_eval_outputs(out: Path, rows, header: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(out / "eval_report.csv", rows)
    for kind in sorted({r.embedding_kind for r in rows}):
        sub = [r for r in rows if r.embedding_kind == kind]
        labels, means, sds = _mean_sd_by(sub, lambda r: f"{r.variant} b{r.batch_size}")
        (out / f"zscores_{kind}.svg").write_text(
            svg.bar_chart(labels, means, sds, title=f"mean z-score ({kind})", ylabel="z", header=header.splitlines()[1])
        )


def cmd_eval(args) -> int:
    if not args.checkpoints:
        raise ConfigError("eval needs at least one checkpoint path")
    manifest = RunConfig.from_file(args.config).manifest if args.config else ""
    rows = []
    cache = {}
    for path in args.checkpoints:
        model, meta = load_checkpoint(path)
        names = args.datasets or (meta.get("dataset", ""),)
        for name in names:
            if name not in cache:
                cache[name] = resolve_dataset(name, manifest)
            ds = cache[name]
            if ds.input_dim != model.input_dim:
                raise DataError(f"{path}: model input {model.input_dim} does not match {name} ({ds.input_dim})")
            b = int(meta.get("batch_size", 0))
            seed = int(meta.get("seed", 0)) if args.seed is None else args.seed
            rows += eval_rows(run_name(model.variant, b, int(meta.get("seed", 0))), model, b, ds, seed)
    fill_zscores_and_ranks(rows)
    out = Path(args.out or "runs/eval")
    header = _header(args, "eval")
    write_eval_outputs(out, rows, header)
    print(header)
    print(out / "eval_report.csv")
    return EXIT_OK


def cmd_toy2d(args) -> int:
    seeds = args.seeds if args.seeds else ((args.seed,) if args.seed is not None else (0,))
    out = Path(args.out or "runs/toy2d")
    header = _header(args, "toy2d")
    print(header)
    for seed in seeds:
        traj = run_toy(make_toy2d(seed), steps=args.steps, lr=args.lr)
        write_trajectory(out / f"seed{seed}", traj, header=f"toy2d seed {seed}, lr {args.lr}")
        f = traj.final
        print(f"seed {seed}: final step {f.step}  R={f.resultant:.4f}  radius cv={f.radius_cv:.4f}")
    return EXIT_OK


def table_one(stats: dict) -> str:
    lines = [f"{'model':<10} {'mean slope':>12} {'t':>9} {'p-value':>10} {'n':>4}"]
    for model, st in stats.items():
        lines.append(f"{model:<10} {st.mean:>12.5f} {st.t:>9.3f} {st.p:>10.4g} {st.n:>4d}")
    return "\n".join(lines)


def downstream_table(rows, summaries) -> str:
    """Mean z, probe accuracy per embedding kind and final val recon NLL per variant."""
    lines = [f"{'model':<10} {'mean z':>9} {'acc mean':>9} {'acc info':>9} {'val recon':>10}"]
    for v in sorted({r.variant for r in rows}):
        info = [r for r in rows if r.variant == v and r.embedding_kind == "informative"]
        acc_info = f"{mean_accuracy(rows, v, 'informative'):>9.4f}" if info else f"{'-':>9}"
        recon = mean_final_recon(summaries, v)
        lines.append(
            f"{v:<10} {mean_z(rows, v):>9.4f} {mean_accuracy(rows, v, 'mean_encoding'):>9.4f} {acc_info} {recon:>10.4f}"
        )
    return "\n".join(lines)


RUN_COLUMNS = ("dataset", "variant", "batch_size", "seed", "best_step", "best_val", "final_val", "final_val_recon")


def write_runs_csv(path: Path, summaries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for s in summaries:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(s, c) for c in RUN_COLUMNS)])


def cmd_sensitivity(args) -> int:
    preset = get_preset(args.preset)
    base = _base_config(args)
    variants = args.variants or preset.sensitivity_variants
    batch_sizes = args.batch_sizes or preset.batch_sizes
    if len(set(batch_sizes)) < 2:
        raise ConfigError("sensitivity needs at least two distinct batch sizes")
    seeds = args.seeds or ((args.seed,) if args.seed is not None else preset.seeds)
    datasets = tuple(resolve_dataset(d, base.manifest) for d in (args.datasets or preset.datasets))
    out = Path(args.out or base.out_dir)
    spec = GridSpec(tuple(variants), datasets, tuple(batch_sizes), tuple(seeds), base)
    summaries: list = []
    rows = run_grid(spec, out_dir=out / "runs", progress=lambda m: log.info(m), summaries=summaries)
    stats = slope_stats(rows)
    header = _header(args, "sensitivity")
    write_eval_outputs(out, rows, header)
    write_runs_csv(out / "runs.csv", summaries)
    write_slopes_csv(out / "slopes.csv", stats)
    (out / "slopes.svg").write_text(
        svg.strip_plot({m: st.slopes for m, st in stats.items()}, title="z-score vs batch size slopes",
                       header=header.splitlines()[1])
    )
    summary = f"{header}\n{table_one(stats)}\n\n{downstream_table(rows, summaries)}\n"
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    offset_fn = (lambda b: math.log(b)) if args.mutate_offset else None
    results = run_verification(offset_fn=offset_fn, quick=args.quick)
    report = format_report(results, header=_header(args, "verify"))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verification_report.txt").write_text(report)
    print(report, end="")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (INI, section [run])")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--preset", choices=("desk", "paper-shape"), default="desk")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cmim", description="contrastive MIM desk laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train one model")
    t.add_argument("--variant")
    t.add_argument("--dataset")
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--steps", type=int, dest="total_steps")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="probe checkpoints")
    e.add_argument("checkpoints", nargs="*")
    e.add_argument("--datasets", type=_csv_list(str), default=None)
    e.set_defaults(func=cmd_eval)

    y = sub.add_parser("toy2d", parents=[common], help="2D angular-spreading experiment")
    y.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    y.add_argument("--lr", type=float, default=0.05)
    y.add_argument("--seeds", type=_csv_list(int), default=None)
    y.set_defaults(func=cmd_toy2d)

    s = sub.add_parser("sensitivity", parents=[common], help="batch-size slope study")
    s.add_argument("--variants", type=_csv_list(str), default=None)
    s.add_argument("--datasets", type=_csv_list(str), default=None)
    s.add_argument("--batch-sizes", type=_csv_list(int), default=None, dest="batch_sizes")
    s.add_argument("--seeds", type=_csv_list(int), default=None)
    s.set_defaults(func=cmd_sensitivity)

    v = sub.add_parser("verify", parents=[common], help="mathematical self-checks")
    v.add_argument("--quick", action="store_true", help="smaller samples, same tolerances")
    v.add_argument("--mutate-offset", action="store_true", help="use log(B) as the offset; the suite must fail")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError, UnsupportedOperation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
