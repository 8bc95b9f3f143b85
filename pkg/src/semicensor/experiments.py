"""Experiment runners behind the command-line interface.

Every runner takes a validated config, writes CSV/JSON outputs (and PNG
figures unless disabled) into ``out_dir`` together with ``manifest.json``,
and returns an in-memory summary.  Randomness comes only from
``numpy.random.SeedSequence(cfg["seed"])``, split into one child stream per
independent task, so results do not depend on ``threads``.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .censoring import CensoringModel
from .config import build_ground, build_kernel, build_renewal, build_spec, read_interval_csv
from .inference import (
    CensoringParams,
    IntervalSet,
    conditional_density_1d,
    fit_homogeneous,
    fit_mle,
    log_likelihood,
    sample_conditional,
)

__all__ = [
    "run_misspec",
    "run_renewal_panels",
    "run_peak_conditional",
    "run_simulate",
    "run_fit",
    "run_condition",
    "run_generic",
    "RUNNERS",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _streams(cfg, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(cfg["seed"]).spawn(n)]


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _write_rows(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*(np.asarray(c).tolist() for c in columns)):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(cfg, out_dir, outputs):
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {"config": cfg, "version": __version__, "seed": cfg["seed"], "outputs": sorted(outputs)},
    )


def _bin_average(fn, edges):
    """Average of ``fn`` over each bin by 8-point Gauss-Legendre."""
    mid = (edges[:-1] + edges[1:]) / 2
    half = np.diff(edges) / 2
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return (fn(nodes) @ _GL_WEIGHTS) / 2


def sample_ground(ground, rng, chain=None):
    """Occurrence times: exact for Poisson models, Metropolis-Hastings otherwise."""
    if ground.log_gamma == 0.0 or ground.r == 0.0:
        return ground.sample_poisson(rng)
    chain = chain or {}
    res = ground.sample_mh(chain.get("n_steps", 200000), chain.get("burn_in", 50000), rng)
    return np.sort(res.points)


# misspecification ----------------------------------------------------------


def run_misspec(cfg, out_dir, threads=1, figures=True):
    """Simulate one marked dataset from the true model and fit a homogeneous family to it."""
    os.makedirs(out_dir, exist_ok=True)
    rng_ground, rng_marks = _streams(cfg, 2)
    kernel = build_kernel(cfg["kernel"])
    renewal = build_renewal(cfg["renewal"])
    t0 = float(cfg["t0"])
    xs = sample_ground(build_ground(cfg["ground"]), rng_ground, cfg.get("chain"))
    marks = CensoringModel(kernel, renewal, t0).sample_marks(xs, rng_marks)
    data = IntervalSet.from_marks(marks.a, marks.l)

    fcfg = cfg["fit"]
    fit = fit_mle(data, build_spec(fcfg), t0, start=fcfg.get("start"), max_iter=fcfg.get("max_iter", 10**4))
    t = float(cfg["eval_time"])
    lo, hi, n = cfg["length_grid"]
    grid = np.linspace(lo, hi, int(n))
    true_density = kernel.density(t, grid)
    fitted_density = fit.params.kernel.density(t, grid)

    outputs = ["marks.csv", "misspec_density.csv", "fit_report.json"]
    marks.to_csv(os.path.join(out_dir, "marks.csv"))
    _write_rows(
        os.path.join(out_dir, "misspec_density.csv"),
        ["l", "true_density", "fitted_density"],
        [grid, true_density, fitted_density],
    )
    true_params = CensoringParams(kernel, renewal)
    report = {
        **fit.report(),
        "true_params": true_params.to_dict(),
        "true_loglik": log_likelihood(true_params, data, t0),
        "t0": t0,
        "n_points": int(data.n),
        "n_atoms": int(data.m),
        "eval_time": t,
    }
    _write_json(os.path.join(out_dir, "fit_report.json"), report)
    if figures:
        from .plotting import plot_curves

        plot_curves(
            os.path.join(out_dir, "misspec_density.png"),
            grid,
            {"true model": true_density, "fitted homogeneous": fitted_density},
            "interval length l",
            f"density of l at t = {t:g}",
        )
        outputs.append("misspec_density.png")
    _manifest(cfg, out_dir, outputs)
    return {"fit": fit, "data": data, "grid": grid, "true_density": true_density, "fitted_density": fitted_density}


# start-time histograms -------------------------------------------------------


def _panel_job(job):
    panel, x, t0, n_samples, bins, rng = job
    model = CensoringModel(build_kernel(panel["kernel"]), build_renewal(panel["renewal"]), t0)
    a, _ = model.sample_interval(x, n_samples, rng)
    edges = np.linspace(t0, x, bins + 1)
    counts, _ = np.histogram(a, bins=edges)
    expected = _bin_average(lambda s: model.marginal_start_density(x, s), edges)
    return {"label": panel.get("label", ""), "edges": edges, "counts": counts, "expected": expected, "samples": a}


def run_renewal_panels(cfg, out_dir, threads=1, figures=True):
    """Histograms of the interval start for an occurrence at ``x``, one per panel config."""
    os.makedirs(out_dir, exist_ok=True)
    panels = cfg["panels"]
    rngs = _streams(cfg, len(panels))
    t0, x = float(cfg["t0"]), float(cfg["x"])
    jobs = [(p, x, t0, int(cfg["n_samples"]), int(cfg["bins"]), r) for p, r in zip(panels, rngs)]
    results = _map(_panel_job, jobs, threads)
    outputs = []
    for i, res in enumerate(results):
        label = res["label"] or str(i + 1)
        res["label"] = label
        edges, counts = res["edges"], res["counts"]
        res["density"] = counts / (counts.sum() * np.diff(edges))
        name = f"panel_{label}.csv"
        _write_rows(
            os.path.join(out_dir, name),
            ["bin_left", "bin_right", "count", "density", "expected_density"],
            [edges[:-1], edges[1:], counts, res["density"], res["expected"]],
        )
        outputs.append(name)
    if figures:
        from .plotting import plot_histogram_panels

        plot_histogram_panels(
            os.path.join(out_dir, "renewal_panels.png"),
            [(f"({r['label']})", r["edges"], r["density"], r["expected"]) for r in results],
            f"interval start a (x = {x:g})",
        )
        outputs.append("renewal_panels.png")
    _manifest(cfg, out_dir, outputs)
    return {r["label"]: r for r in results}


# conditional occurrence times -------------------------------------------------


def _chain_job(job):
    ground, data, n_steps, burn_in, rng = job
    return sample_conditional(ground, data, n_steps, burn_in, rng)


def _data_from_cfg(cfg):
    pairs = np.asarray(cfg["data"], dtype=float)
    return IntervalSet.from_marks(pairs[:, 0], pairs[:, 1])


def run_peak_conditional(cfg, out_dir, threads=1, figures=True):
    """Conditional law of the censored occurrence time under each interaction strength."""
    os.makedirs(out_dir, exist_ok=True)
    data = _data_from_cfg(cfg)
    names = list(cfg["log_gammas"])
    rngs = _streams(cfg, len(names))
    gcfg = cfg["ground"]
    grounds = [build_ground({**gcfg, "log_gamma": cfg["log_gammas"][n]}) for n in names]
    chain = cfg["chain"]
    jobs = [(g, data, int(chain["n_steps"]), int(chain["burn_in"]), r) for g, r in zip(grounds, rngs)]
    chains = _map(_chain_job, jobs, threads)

    lo, hi = cfg["histogram_range"]
    edges = np.linspace(lo, hi, int(cfg["bins"]) + 1)
    outputs, summary, panels = [], {}, []
    for name, ground, ch in zip(names, grounds, chains):
        x = ch.states[:, 0]
        counts, _ = np.histogram(x, bins=edges)
        density = counts / (x.size * np.diff(edges))
        if data.starts.size == 1:
            exact = _bin_average(lambda s, g=ground: conditional_density_1d(g, data, s), edges)
        else:
            exact = np.full(edges.size - 1, np.nan)
        fname = f"conditional_{name}.csv"
        _write_rows(
            os.path.join(out_dir, fname),
            ["bin_left", "bin_right", "count", "density", "exact_density"],
            [edges[:-1], edges[1:], counts, density, exact],
        )
        outputs.append(fname)
        summary[name] = {"samples": x, "edges": edges, "density": density, "exact": exact,
                         "acceptance_rate": ch.acceptance_rate}
        panels.append((f"{name} (log gamma = {ground.log_gamma:g})", edges, density, exact))
    if figures:
        from .plotting import plot_histogram_panels

        plot_histogram_panels(os.path.join(out_dir, "peak_conditional.png"), panels, "occurrence time")
        outputs.append("peak_conditional.png")
    _manifest(cfg, out_dir, outputs)
    return summary


# generic sub-commands ---------------------------------------------------------


def run_simulate(cfg, out_dir, threads=1, figures=True):
    """Sample occurrence times from the ground model and mark them."""
    os.makedirs(out_dir, exist_ok=True)
    rng_ground, rng_marks = _streams(cfg, 2)
    xs = sample_ground(build_ground(cfg["ground"]), rng_ground, cfg.get("chain"))
    model = CensoringModel(build_kernel(cfg["kernel"]), build_renewal(cfg["renewal"]), float(cfg["t0"]))
    marks = model.sample_marks(xs, rng_marks)
    marks.to_csv(os.path.join(out_dir, "marks.csv"))
    _manifest(cfg, out_dir, ["marks.csv"])
    return {"marks": marks}


def run_fit(cfg, out_dir, data_path, threads=1, figures=True):
    """Fit censoring parameters to the marks in ``data_path``."""
    os.makedirs(out_dir, exist_ok=True)
    data = read_interval_csv(data_path)
    t0 = float(cfg["t0"])
    fcfg = cfg["fit"]
    if fcfg.get("family", "homogeneous") == "homogeneous":
        params = fit_homogeneous(data)
        active = ["delta_1 <= bound"] if data.m == 0 else []
        report = {"params": params.to_dict(), "loglik": log_likelihood(params, data, t0),
                  "iters": 0, "active_constraints": active}
    else:
        fit = fit_mle(data, build_spec(fcfg), t0, start=fcfg.get("start"), max_iter=fcfg.get("max_iter", 10**4))
        report = fit.report()
    report["t0"] = t0
    _write_json(os.path.join(out_dir, "fit_report.json"), report)
    _manifest(cfg, out_dir, ["fit_report.json"])
    return report


def run_condition(cfg, out_dir, data_path, threads=1, figures=True):
    """Sample the censored occurrence times given the marks in ``data_path``."""
    os.makedirs(out_dir, exist_ok=True)
    data = read_interval_csv(data_path)
    ground = build_ground(cfg["ground"])
    (rng,) = _streams(cfg, 1)
    n_steps, burn_in = int(cfg["chain"]["n_steps"]), int(cfg["chain"]["burn_in"])
    chain = sample_conditional(ground, data, n_steps, burn_in, rng)
    chain.to_csv(os.path.join(out_dir, "chain.csv"), first_step=burn_in, first_index=data.m + 1)
    outputs = ["chain.csv"]
    if figures and n_steps:
        from .plotting import plot_histogram_panels

        panels = []
        for i in range(data.starts.size):
            a, l = data.starts[i], data.lengths[i]
            edges = np.linspace(a, a + l, 51)
            counts, _ = np.histogram(chain.states[:, i], bins=edges)
            panels.append((f"x_{data.m + i + 1}", edges, counts / (counts.sum() * np.diff(edges)), None))
        plot_histogram_panels(os.path.join(out_dir, "chain_marginals.png"), panels, "occurrence time")
        outputs.append("chain_marginals.png")
    _manifest(cfg, out_dir, outputs)
    return {"chain": chain, "data": data}


def run_generic(cfg, out_dir, data_path=None, threads=1, figures=True):
    """Dispatch ``simulate`` / ``fit`` / ``condition`` configs."""
    kind = cfg["experiment"]
    if kind == "simulate":
        return run_simulate(cfg, out_dir, threads, figures)
    if data_path is None:
        raise ValueError(f"{kind} needs a data file")
    if kind == "fit":
        return run_fit(cfg, out_dir, data_path, threads, figures)
    if kind == "condition":
        return run_condition(cfg, out_dir, data_path, threads, figures)
    raise ValueError(f"not a generic sub-command: {kind!r}")


RUNNERS = {
    "misspec": run_misspec,
    "renewal-panels": run_renewal_panels,
    "peak-conditional": run_peak_conditional,
}
