"""Command line entry point: ``hmmwave <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from ..kernel import parse_kernel, verify_kernel
from . import config as cfgmod
from . import experiments as ex
from .output import ResultWriter

DEFAULT_KERNELS = ["poly(1,1)", "poly(1,9)", "poly(5,6)", "poly(9,9)", "exp"]


def _common(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--emit-plot-data", action="store_true", help="also write fig_<name>.csv plot data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmmwave", description="HMM solver for multiscale wave equations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("experiment", choices=sorted(cfgmod.PROFILES))
    _common(run)

    k = sub.add_parser("kernels", help="kernel moment table or convergence study")
    k.add_argument("--verify", action="store_true", help="print the moment table and check the conditions")
    k.add_argument("--study", choices=["fast", "slow"], help="run the eta/eps flux-error study")
    _common(k)

    fl = sub.add_parser("flux", help="upscaled flux F~(x, p) from one micro problem")
    fl.add_argument("--point", required=True, help="macro point, comma separated")
    fl.add_argument("--p", required=True, help="macro gradient, comma separated")
    fl.add_argument("--experiment", default="example1", choices=sorted(cfgmod.PROFILES))
    _common(fl)

    cv = sub.add_parser("convergence", help="H-refinement study against the exact homogenized solution")
    _common(cv)

    lt = sub.add_parser("longtime", help="long-time dispersion experiment")
    _common(lt)
    return parser


def _vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _values(args):
    file_values = cfgmod.load_config(args.config) if args.config else {}
    overrides = cfgmod.parse_overrides(args.set)
    if args.out:
        overrides["output.dir"] = args.out
    return file_values, overrides


def _cmd_run(args) -> int:
    file_values, overrides = _values(args)
    records, summary = ex.run_example(args.experiment, overrides, file_values)
    cfg = cfgmod.resolve(args.experiment, file_values, overrides)
    if args.emit_plot_data:
        _plot_data(args.experiment, records, summary, cfg)
    print(json.dumps(summary["metrics"] if "metrics" in summary else summary.get("slopes"), indent=2, sort_keys=True, default=float))
    return 0


def _plot_data(experiment, records, summary, cfg):
    writer = ResultWriter(cfg["output.dir"])
    if experiment == "kernel_study":
        rows = [(r.params["kernel"], r.params["eta_over_eps"], r.metrics["flux_error"]) for r in records]
        writer.table("fig_kernel_study.csv", ["kernel", "eta_over_eps", "error"], rows)
        return
    import csv
    from pathlib import Path

    # assemble x vs u from the written final snapshots of 1D runs
    cols = {}
    for path in summary.get("files", []):
        name = Path(path).name.split("_")[1]
        with open(path) as fh:
            rd = csv.DictReader(fh)
            rows = list(rd)
        if "i1" in rows[0]:
            return
        cols[name] = [float(r["u"]) for r in rows]
    if cols:
        n = len(next(iter(cols.values())))
        x = [i / n for i in range(n)]
        names = sorted(cols)
        writer.table(f"fig_{experiment}.csv", ["x"] + names, ([x[i]] + [cols[c][i] for c in names] for i in range(n)))


def _cmd_kernels(args) -> int:
    file_values, overrides = _values(args)
    names = overrides.get("kernels") or file_values.get("kernels") or DEFAULT_KERNELS
    names = [names] if isinstance(names, str) else names
    status = 0
    if args.verify or not args.study:
        print(f"{'kernel':<12} {'m0-1':>10} " + " ".join(f"{'m' + str(r):>10}" for r in range(1, 11)) + "  ok")
        for name in names:
            rep = verify_kernel(parse_kernel(name))
            m = rep["moments"]
            cells = [f"{m[0] - 1:10.2e}"] + [f"{v:10.2e}" if r < len(m) else f"{'':>10}" for r, v in
                                               ((r, m[r] if r < len(m) else 0.0) for r in range(1, 11))]
            print(f"{rep['kernel']:<12} " + " ".join(cells) + ("  yes" if rep["ok"] else "  NO"))
            status |= 0 if rep["ok"] else 1
    if args.study:
        overrides.setdefault("study.variant", args.study)
        overrides["kernels"] = names if (overrides.get("kernels") or file_values.get("kernels")) else ["poly(1,1)", "poly(1,9)", "exp"]
        records, summary = ex.run_example("kernel_study", overrides, file_values)
        if args.emit_plot_data:
            _plot_data("kernel_study", records, summary, cfgmod.resolve("kernel_study", file_values, overrides))
        for r in records:
            print(f"{r.params['kernel']:<12} eta/eps={r.params['eta_over_eps']:<4} error={r.metrics['flux_error']:.3e}")
        for name, s in summary["slopes"].items():
            print(f"slope {name}: {s:.2f}")
    return status


def _cmd_flux(args) -> int:
    file_values, overrides = _values(args)
    cfg = cfgmod.resolve(args.experiment, file_values, overrides)
    F = ex.flux_at(cfg, _vector(args.point), _vector(args.p))
    print(" ".join(f"{v:.15g}" for v in F))
    return 0


def _cmd_convergence(args) -> int:
    file_values, overrides = _values(args)
    values = {**file_values, **overrides}
    Hs = values.get("study.H") or [1 / 50, 1 / 100, 1 / 200]
    records = ex.h_convergence(Hs, eps=float(values.get("field.eps", 0.005)), kernel=values.get("kernel.space", "exp"))
    writer = ResultWriter(values.get("output.dir", "results"))
    writer.records(records)
    errs = [r.metrics["linf"] for r in records]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    if args.emit_plot_data:
        writer.table("fig_convergence.csv", ["H", "linf", "l2"], ((r.params["H"], r.metrics["linf"], r.metrics["l2"]) for r in records))
    writer.summary({"experiment": "convergence", "errors": errs, "ratios": ratios})
    for r in records:
        print(f"H={r.params['H']:.5f} linf={r.metrics['linf']:.4e}")
    print("ratios", " ".join(f"{q:.3f}" for q in ratios))
    return 0


def _cmd_longtime(args) -> int:
    file_values, overrides = _values(args)
    records, summary = ex.run_example("longtime", overrides, file_values)
    print(json.dumps(summary["metrics"], indent=2, sort_keys=True))
    return 0


COMMANDS = {"run": _cmd_run, "kernels": _cmd_kernels, "flux": _cmd_flux, "convergence": _cmd_convergence,
            "longtime": _cmd_longtime}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"hmmwave: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and fail
        print(f"hmmwave: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
