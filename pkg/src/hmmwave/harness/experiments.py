"""Experiment runners behind the CLI and the acceptance suite."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import coefficient as coef
from .. import fd_core, flux_cache, macro, micro
from .. import reference as ref
from ..kernel import parse_kernel
from . import config as cfgmod
from .metrics import grid_error, loglog_slope, relative_l2
from .output import ResultWriter

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    pass


@dataclass
class ResultRecord:
    experiment: str
    params: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    micro_solves: int = 0
    wall_time: float = 0.0
    files: list = field(default_factory=list)

    def __post_init__(self):
        for k, v in self.metrics.items():
            if not (np.isfinite(v) and v >= 0):
                raise ExperimentError(f"metric {k} = {v} is not a finite non-negative number")

    def flat(self) -> dict:
        row = {"experiment": self.experiment}
        row.update({f"param.{k}": v for k, v in self.params.items()})
        row.update(self.metrics)
        row["micro_solves"] = self.micro_solves
        # wall time stays out of the CSV so identical configs give identical files
        return row


# ---------------------------------------------------------------------------
# flux queries and the kernel study


def flux_at(cfg: cfgmod.ExperimentConfig, point, p) -> np.ndarray:
    field_ = cfgmod.build_field(cfg)
    return micro.upscaled_flux(np.atleast_1d(point), np.atleast_1d(p), cfgmod.micro_params(cfg, field_), field_)


def study_field(variant: str, eps: float) -> tuple[coef.CoefficientField, float]:
    """The two kernel-study media and their effective coefficient at x = 0."""
    if variant == "fast":
        a = coef.Periodic1D(epsilon=eps)
        return a, a.harmonic_mean()
    if variant == "slow":
        a = coef.LocallyPeriodic1D(epsilon=eps, alpha0=1.1, slow_amp=0.5, beta=0.5, slow_kind="sin")
        return a, float(a.harmonic_scalar(0.0))
    raise ExperimentError(f"unknown kernel-study variant {variant!r}")


def kernel_convergence_study(variant: str = "fast", kernels=("poly(1,1)", "poly(1,9)", "exp"), ratios=range(2, 11),
                             eps: float = 0.01, cells_per_eps: int = 64) -> list[ResultRecord]:
    """|F~(0, 1) - abar(0)| for each kernel and eta/eps (tau = eta)."""
    field_, target = study_field(variant, eps)
    records = []
    for name in kernels:
        kern = parse_kernel(name)
        for r in ratios:
            t0 = time.perf_counter()
            params = micro.MicroParams.from_ratios(eps, r, cells_per_eps=cells_per_eps, space_kernel=kern)
            F = micro.upscaled_flux([0.0], [1.0], params, field_)[0]
            records.append(
                ResultRecord(
                    "kernel_study",
                    {"variant": variant, "kernel": kern.name, "eta_over_eps": r, "eps": eps},
                    {"flux_error": abs(F - target)},
                    micro_solves=1,
                    wall_time=time.perf_counter() - t0,
                )
            )
    return records


def study_slopes(records: list[ResultRecord]) -> dict[str, float]:
    out = {}
    for name in dict.fromkeys(r.params["kernel"] for r in records):
        rs = [r for r in records if r.params["kernel"] == name]
        out[name] = loglog_slope([r.params["eta_over_eps"] for r in rs], [r.metrics["flux_error"] for r in rs])
    return out


# ---------------------------------------------------------------------------
# macro experiments


def nested_fine_grid(coarse: fd_core.PeriodicGrid, h_max: float) -> fd_core.PeriodicGrid:
    """Finest-needed grid whose node set contains the coarse nodes."""
    n = coarse.shape[0]
    r = max(1, math.ceil(coarse.h / h_max - 1e-9))
    return fd_core.PeriodicGrid((n * r,) * coarse.dim, coarse.h / r)


def make_provider(cfg: cfgmod.ExperimentConfig, field_) -> macro.CachedProvider:
    dedup = cfg.get("cache.dedup", "auto")
    dedup = None if dedup in (None, "auto") else bool(dedup)
    return macro.CachedProvider(cfgmod.micro_params(cfg, field_), field_, dedup=dedup)


def run_example(experiment: str, overrides: dict | None = None, file_values: dict | None = None,
                out_dir=None, write: bool = True) -> tuple[list[ResultRecord], dict]:
    """Run one configured experiment and compare its solvers pairwise at the final time.

    HMM is compared with HOM whenever a homogenized coefficient is known and
    with DNS when requested.  The macro step is ``macro.dt_ratio * H``; the
    default ratio 0.5 replaces a step of 2H for the locally periodic case,
    where leapfrog would be unstable.
    """
    cfg = cfgmod.resolve(experiment, file_values, overrides)
    if experiment == "kernel_study":
        return _kernel_study_experiment(cfg, out_dir, write)
    if experiment == "longtime":
        return run_longtime(cfg, out_dir, write)
    field_ = cfgmod.build_field(cfg)
    dim = field_.dimension
    solvers = cfg.solvers()
    if "dns" in solvers and dim == 3:
        raise ExperimentError("DNS in three dimensions is refused: the resolved grid is far beyond desk cost")
    grid = macro.macro_grid(float(cfg["macro.H"]), dim)
    f = cfgmod.initial_data(cfg)
    T = float(cfg["macro.T"])
    dt = float(cfg["macro.dt_ratio"]) * grid.h
    stride = int(cfg.get("macro.stride") or 0)
    homog = field_.homogenized()
    results: dict[str, np.ndarray] = {}
    timings: dict[str, float] = {}
    solves = 0
    extra: dict = {}

    t0 = time.perf_counter()
    provider = make_provider(cfg, field_)
    traj = None
    if "hmm" in solvers:
        traj = macro.run(macro.MacroConfig(grid, dt, T, provider, f=f, stride=stride))
        results["hmm"] = traj[-1][1]
        solves = provider.micro_solves
        timings["hmm"] = time.perf_counter() - t0
        if experiment in ("example1", "example4"):
            mats = provider.effective_matrices()
            target = homog.matrix(np.zeros(dim))
            # only the diagonal is compared; off-axis components are unused by the scheme
            extra["flux_table_error"] = float(np.max(np.abs(np.diagonal(mats, axis1=-2, axis2=-1) - np.diag(target))))
    hom_traj = None
    if "hom" in solvers and homog.available:
        t0 = time.perf_counter()
        hom_traj = ref.run_homogenized(homog, f, None, grid, T, dt=dt, stride=stride)
        results["hom"] = hom_traj[-1][1]
        timings["hom"] = time.perf_counter() - t0
    dns_traj = None
    if "dns" in solvers:
        t0 = time.perf_counter()
        fine = nested_fine_grid(grid, field_.epsilon / float(cfg["dns.cells_per_eps"]))
        dns_traj = ref.run_dns(field_, f, None, fine, T)
        results["dns"] = ref.restrict(dns_traj[-1][1], fine, grid)
        timings["dns"] = time.perf_counter() - t0

    metrics = dict(extra)
    names = list(results)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            metrics[f"linf_{a}_{b}"] = grid_error(results[a], results[b], "linf", grid)
            metrics[f"l2_{a}_{b}"] = grid_error(results[a], results[b], "l2", grid)
            metrics[f"rel_l2_{a}_{b}"] = relative_l2(results[a], results[b], grid)
    params = {"profile": cfg.profile, "eps": field_.epsilon, "H": grid.h, "dt": dt, "T": T, "dim": dim}
    record = ResultRecord(experiment, params, metrics, solves, sum(timings.values()))
    summary = {
        "experiment": experiment,
        "profile": cfg.profile,
        "config_hash": cfg.digest(),
        "config": cfg.values,
        "metrics": metrics,
        "micro_solves": solves,
        "timings": timings,
    }
    if write:
        writer = ResultWriter(out_dir or cfg["output.dir"])
        for name, tr in (("hmm", traj), ("hom", hom_traj)):
            for t, u in tr or ():
                if stride or t == tr[-1][0]:
                    record.files.append(str(writer.snapshot(f"{experiment}_{name}", t, u)))
        if dns_traj is not None:
            record.files.append(str(writer.snapshot(f"{experiment}_dns", T, results["dns"])))
        writer.records([record])
        summary["files"] = record.files
        writer.summary(summary)
    return [record], summary


def _kernel_study_experiment(cfg, out_dir, write):
    ratios = cfg.get("study.ratios") or list(range(2, 11))
    kernels = cfg.get("kernels") or ["poly(1,1)", "poly(1,9)", "exp"]
    kernels = [kernels] if isinstance(kernels, str) else kernels
    records = kernel_convergence_study(cfg.get("study.variant", "fast"), kernels, ratios, cfg.eps)
    slopes = study_slopes(records)
    summary = {"experiment": "kernel_study", "config_hash": cfg.digest(), "config": cfg.values, "slopes": slopes,
               "micro_solves": len(records)}
    if write:
        writer = ResultWriter(out_dir or cfg["output.dir"])
        writer.records(records)
        writer.summary(summary)
    return records, summary


def h_convergence(Hs=(1 / 50, 1 / 100, 1 / 200), eps: float = 0.005, kernel: str = "exp", eta_over_eps: float = 10.0,
                  T: float = 1.0, dt_ratio: float = 0.5, sigma: float = 0.1) -> list[ResultRecord]:
    """HMM error against the exact homogenized solution at T for a sequence of H."""
    field_ = coef.Periodic1D(epsilon=eps)
    abar = field_.harmonic_mean()
    f = ref.periodic_gaussian(0.5, sigma)
    params = micro.MicroParams.from_ratios(eps, eta_over_eps, space_kernel=kernel)
    table = None
    records = []
    for H in Hs:
        t0 = time.perf_counter()
        grid = macro.macro_grid(H)
        provider = macro.CachedProvider(params, field_, table=table)
        u = macro.run(macro.MacroConfig(grid, dt_ratio * H, T, provider, f=f))[-1][1]
        if flux_cache.should_dedup(field_, H):
            table = provider.table  # one shared entry serves every H that is a multiple of eps
        exact = ref.dalembert(f, math.sqrt(abar), grid.axes()[0], T)
        records.append(
            ResultRecord("convergence", {"H": H, "eps": eps, "kernel": kernel},
                         {"linf": grid_error(u, exact, "linf"), "l2": grid_error(u, exact, "l2")},
                         provider.micro_solves, time.perf_counter() - t0)
        )
    return records


# ---------------------------------------------------------------------------
# long time


def run_longtime(cfg: cfgmod.ExperimentConfig, out_dir=None, write: bool = True) -> tuple[list[ResultRecord], dict]:
    """HMM with cubic micro data against DNS, the non-dispersive HOM and the fitted dispersive equation."""
    eps = cfg.eps
    if int(cfg["field.dim"]) != 1:
        raise ExperimentError("the long-time experiment is one-dimensional")
    field_ = coef.Periodic1D(epsilon=eps)
    abar = field_.harmonic_mean()
    params = cfgmod.micro_params(cfg, field_)
    kern = params.space_kernel
    if kern.q is not None and (eps / params.eta) ** kern.q >= eps**2:
        raise ExperimentError(f"(eps/eta)^q = {(eps / params.eta) ** kern.q:.3g} is not below eps^2")
    if kern.p < 3:
        raise ExperimentError("long-time averaging needs a kernel with at least three vanishing moments")
    H = float(cfg["macro.H"])
    if params.eta >= H / 2:
        warnings.warn(
            f"micro box half-width eta={params.eta:.3g} exceeds half a macro cell ({H / 2:.3g}); "
            "kept, since the flux only depends on the local medium",
            stacklevel=2,
        )
    grid = macro.macro_grid(H)
    T = float(cfg["macro.T"])
    f = ref.periodic_gaussian(float(cfg["init.center"]), float(cfg["init.sigma"]))
    timings = {}

    t0 = time.perf_counter()
    provider = macro.LongTimeProvider(params, field_)
    provider.prepare(grid)
    coeffs = provider.coefficients()
    a_eff = float(np.mean(coeffs[:, 0]))
    dt = float(cfg.get("macro.cfl", 0.9)) * H / math.sqrt(a_eff)
    hmm = macro.run(macro.MacroConfig(grid, dt, T, provider, f=f))[-1][1]
    timings["hmm"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    hom = ref.run_dispersive(ref.DispersiveConfig(abar, 0.0, eps, grid, dt, T), f)[-1][1]
    timings["hom"] = time.perf_counter() - t0

    dns = {}
    for cells in cfg.get("longtime.dns_cells") or [48, 96]:
        t0 = time.perf_counter()
        fine = nested_fine_grid(grid, eps / int(cells))
        dns[int(cells)] = ref.restrict(ref.run_dns(field_, f, None, fine, T)[-1][1], fine, grid)
        timings[f"dns{cells}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    beta_max = float(cfg.get("longtime.beta_max", 0.05))
    fits = {c: ref.fit_beta(u, f, abar, eps, grid, T, beta_max=beta_max, dt=dt) for c, u in dns.items()}
    timings["fit"] = time.perf_counter() - t0
    primary = min(dns)
    beta = fits[primary].beta
    disp = ref.run_dispersive(ref.DispersiveConfig(abar, beta, eps, grid, dt, T), f)[-1][1]
    truth = dns[primary]

    metrics = {
        "l2_hmm_dns": grid_error(hmm, truth, "l2", grid),
        "l2_hom_dns": grid_error(hom, truth, "l2", grid),
        "l2_disp_dns": grid_error(disp, truth, "l2", grid),
        "linf_hmm_dns": grid_error(hmm, truth, "linf", grid),
        "linf_hom_dns": grid_error(hom, truth, "linf", grid),
        "hmm_dispersion": float(np.mean(coeffs[:, 2])) / eps**2,
        "hmm_abar": a_eff,
    }
    for c, fit in fits.items():
        metrics[f"beta_dns{c}"] = fit.beta
    record = ResultRecord(
        "longtime",
        {"eps": eps, "H": H, "T": T, "sigma": float(cfg["init.sigma"]), "kernel": kern.name,
         "eta_over_eps": params.eta / eps, "profile": "scaled substitute"},
        metrics,
        provider.micro_solves,
        sum(timings.values()),
    )
    summary = {"experiment": "longtime", "config_hash": cfg.digest(), "config": cfg.values, "metrics": metrics,
               "micro_solves": provider.micro_solves, "timings": timings,
               "note": "scaled substitute: eps and T chosen for desk runtime"}
    if write:
        writer = ResultWriter(out_dir or cfg["output.dir"])
        x = grid.axes()[0]
        rows = zip(x, truth, hmm, hom, disp)
        record.files.append(str(writer.table("fig_longtime.csv", ["x", "dns", "hmm", "hom", "dispersive"], rows)))
        writer.records([record])
        summary["files"] = record.files
        writer.summary(summary)
    return [record], summary
