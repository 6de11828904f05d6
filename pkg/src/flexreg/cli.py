"""Command-line entry point: ``flexreg {nu-grid, simulate, fit, predict, compare}``.

Every command validates its arguments before doing any work, writes its
resolved configuration next to its outputs and exits nonzero on failure.
The default output directory comes from ``$FLEXREG_OUTPUT_DIR`` (falling back
to ``./flexreg-out``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import datagen
from .chainio import read_chain, write_chain
from .diagnostics import GridSpec, density_distance, fit_report, posterior_error_density
from .gibbs import SamplerConfig, Variant, run_chain
from .mixmodel import Dataset, ModelSpec, ParamState, PriorSpec, error_logpdf, error_variance
from .nuplan import (
    REFERENCE_GRIDS,
    Direction,
    NuGridRequest,
    NumericalError,
    Scaling,
    build_nu_grid,
    kld_normal_t,
    pc_distance,
    round_grid,
)
from .predict import posterior_predictive, prediction_metrics

log = logging.getLogger("flexreg")

OUTPUT_ENV = "FLEXREG_OUTPUT_DIR"
BUILTIN_DATA = {"galaxies": ("velocity", datagen.load_galaxies)}


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved parameters of one invocation, written as ``config.json``."""

    command: str
    out_dir: str
    params: dict = field(default_factory=dict)

    def write(self) -> Path:
        path = Path(self.out_dir) / "config.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default))
        return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "flexreg-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _name_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------------------
# nu-grid


def cmd_nu_grid(args) -> int:
    req = NuGridRequest(args.min, args.max, args.k, args.decimals)
    direction, scaling = Direction(args.direction), Scaling(args.scaling)
    out = _out_dir(args)
    RunConfig("nu-grid", str(out), {**asdict(req), "direction": direction.value, "scaling": scaling.value,
                                     "metric": args.metric}).write()
    grid = build_nu_grid(req, direction, scaling, on_distance=args.metric == "distance")
    rounded = round_grid(grid, req.rounding)
    rows = [
        {
            "j": j + 1,
            "nu": float(nu),
            "nu_rounded": float(r),
            "kld": kld_normal_t(float(nu), direction, scaling),
            "distance": pc_distance(float(nu), direction, scaling),
        }
        for j, (nu, r) in enumerate(zip(grid, rounded))
    ]
    ref = REFERENCE_GRIDS.get(req.K)
    comparison = None
    if ref is not None and ref[0] == req.nu_min and ref[-1] == req.nu_max:
        comparison = {
            "reference": list(ref),
            "abs_deviation": [abs(float(a) - b) for a, b in zip(grid, ref)],
            "rounded_match": [bool(np.isclose(a, b)) for a, b in zip(rounded, ref)],
        }
    print(f"nu grid ({direction.value}, {scaling.value}, equal {args.metric} spacing)")
    print(f"{'j':>3} {'nu':>12} {'rounded':>8} {'kld':>12} {'distance':>10}")
    for r in rows:
        print(f"{r['j']:>3} {r['nu']:>12.6f} {r['nu_rounded']:>8.{req.rounding}f} {r['kld']:>12.6g} {r['distance']:>10.6g}")
    if comparison:
        print("reference grid: " + ", ".join(f"{v:g}" for v in comparison["reference"]))
        print("abs deviation:  " + ", ".join(f"{v:.3f}" for v in comparison["abs_deviation"]))
    _dump(out / "nu_grid.json", {"request": asdict(req), "direction": direction.value, "scaling": scaling.value,
                                 "metric": args.metric, "grid": rows, "comparison": comparison})
    return 0


# ---------------------------------------------------------------------------
# simulate


def _truth_record(study: str, truth) -> dict:
    if study == "study2":
        rec = truth.to_dict()
    else:
        nu = [float(v) for v in truth.nu]
        spec = ModelSpec.with_defaults(truth.J, nu, p=len(truth.beta))
        rec = {
            "params": {
                "mu_star": truth.mu_star.tolist(),
                "sigma2": truth.sigma2.tolist(),
                "w": truth.w.tolist(),
                "wdot": truth.wdot.tolist(),
                "beta": truth.beta.tolist(),
                "nu": nu,
            },
            "beta0": float(truth.w @ truth.mu_star),
            "beta": truth.beta.tolist(),
            "error_mean": 0.0,
            "error_variance": error_variance(truth, spec),
        }
    rec["study"] = study
    return rec


SIMULATORS = {
    "study1": datagen.simulate_study1,
    "study2": datagen.simulate_study2,
    "nhanes-like": datagen.simulate_nhanes_like,
}
REFERENCE_VARIANCE = {"study1": 3.975, "study2": 4.964}


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise CliError("--n must be positive")
    out = _out_dir(args)
    RunConfig("simulate", str(out), {"study": args.study, "n": args.n, "seed": args.seed}).write()
    data, truth = SIMULATORS[args.study](args.n, args.seed)
    rec = _truth_record(args.study, truth)
    e = data.y - rec["beta0"] - data.X @ np.asarray(rec["beta"])
    se_var = float(np.sqrt(np.var((e - e.mean()) ** 2) / data.n))
    rec["self_check"] = {
        "closed_form_variance": rec["error_variance"],
        "reference_variance": REFERENCE_VARIANCE.get(args.study),
        "empirical_mean": float(e.mean()),
        "empirical_variance": float(e.var()),
        "empirical_variance_se": se_var,
    }
    datagen.write_dataset_csv(data, out / "data.csv")
    _dump(out / "truth.json", rec)
    chk = rec["self_check"]
    print(f"wrote {data.n} rows to {out / 'data.csv'}")
    target = f" (reference {chk['reference_variance']})" if chk["reference_variance"] is not None else ""
    print(f"error variance: closed form {chk['closed_form_variance']:.5f}{target}, "
          f"empirical {chk['empirical_variance']:.5f} +- {chk['empirical_variance_se']:.5f}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _data_columns(path: Path) -> list:
    with path.open(newline="") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def load_data(source: str, response: Optional[str], covariates: Optional[list]):
    """Return ``(Dataset, description)`` for a CSV path or a builtin dataset name."""
    if source in BUILTIN_DATA:
        col, loader = BUILTIN_DATA[source]
        if covariates:
            raise CliError(f"builtin dataset {source!r} has no covariates")
        return loader(), {"source": source, "response": col, "covariates": []}
    path = Path(source)
    if not path.exists():
        raise CliError(f"data file not found: {path}")
    response = response or "y"
    if covariates is None:
        covariates = [c for c in _data_columns(path) if c not in ("id", response)]
    data = datagen.load_csv(path, response, covariates)
    return data, {"source": str(path.resolve()), "response": response, "covariates": list(covariates)}


def _resolve_nu(args) -> list:
    if args.nu:
        return list(args.nu)
    K = args.K
    if K is None:
        K = args.J if args.variant == Variant.ORDINARY_T.value else 4
    if K == 1:
        return [args.nu_min]
    req = NuGridRequest(args.nu_min, args.nu_max, K, args.nu_decimals)
    return [float(v) for v in round_grid(build_nu_grid(req), req.rounding)]


def _build_spec(args, data: Dataset, nu: list) -> ModelSpec:
    J, K = args.J, len(nu)
    overrides = {}
    for name in ("tau", "alpha_dot", "beta_dot", "upsilon2"):
        val = getattr(args, name)
        if val is not None:
            overrides[name] = val
    if args.alpha_w is not None:
        overrides["alpha_w"] = np.full(J, args.alpha_w)
    if args.alpha_wdot is not None:
        overrides["alpha_wdot"] = np.full((J, K), args.alpha_wdot)
    mu0 = float(np.mean(data.y)) if args.mu0 is None else args.mu0
    priors = PriorSpec.default(J, K, data.p, mu0=mu0, **overrides)
    return ModelSpec(J, K, data.p, tuple(nu), priors)


def _truth_density(truth: dict):
    """Centred true error density from a ``truth.json`` record, or ``None``."""
    if truth.get("study") == "study2":
        t = datagen.Study2Truth()
        return lambda x: t.error_pdf(x, centred=True)
    params = truth.get("params")
    if not params:
        return None
    theta = ParamState(
        mu_star=np.array(params["mu_star"]),
        sigma2=np.array(params["sigma2"]),
        w=np.array(params["w"]),
        wdot=np.array(params["wdot"]),
        beta=np.array(params["beta"]),
    )
    spec = ModelSpec.with_defaults(len(params["w"]), params["nu"], p=len(params["beta"]))
    return lambda x: np.exp(error_logpdf(x, theta, spec))


def _chain_job(job):
    data, spec, cfg = job
    return run_chain(data, spec, cfg)


def _chain_seeds(seed: int, n: int) -> list:
    if n == 1:
        return [seed]
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def cmd_fit(args) -> int:
    if args.chains < 1:
        raise CliError("--chains must be at least 1")
    data, data_desc = load_data(args.data, args.response, args.covariates)
    nu = _resolve_nu(args)
    spec = _build_spec(args, data, nu)
    base_cfg = SamplerConfig(
        iterations=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=args.seed,
        variant=Variant(args.variant),
        nu_sampling=args.sample_nu,
        relabel=args.relabel,
        nu_step=args.nu_step,
        pc_lambda=args.pc_lambda,
    )
    if base_cfg.variant is Variant.ORDINARY_T and spec.K != spec.J:
        raise CliError(f"the ordinary-t variant needs {spec.J} degrees of freedom, got {spec.K}")
    truth = json.loads(Path(args.truth_json).read_text()) if args.truth_json else None
    out = _out_dir(args)
    data_desc["sha256"] = datagen.dataset_digest(data)
    data_desc["n"], data_desc["n_dropped"] = data.n, data.n_dropped
    seeds = _chain_seeds(args.seed, args.chains)
    RunConfig("fit", str(out), {"spec": spec.to_dict(), "sampler": base_cfg.to_dict(), "data": data_desc,
                                "chain_seeds": seeds, "truth_json": args.truth_json}).write()

    cfgs = [SamplerConfig(**{**base_cfg.to_dict(), "seed": s}) for s in seeds]
    jobs = [(data, spec, c) for c in cfgs]
    if len(jobs) == 1:
        chains = [_chain_job(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
            chains = list(pool.map(_chain_job, jobs))

    f_true = _truth_density(truth) if truth else None
    v_truth = truth.get("error_variance") if truth else None
    reports = []
    for i, (chain, cfg) in enumerate(zip(chains, cfgs), start=1):
        write_chain(chain, out / f"chain_{i}.csv", spec, cfg, {"data": data_desc, "chain_index": i})
        rep = asdict(fit_report(chain, data, spec, v_truth))
        if f_true is not None:
            dd = density_distance(f_true, chain, spec)
            rep["dbar_global"], rep["dbar_tail"] = dd["dbar_global"], dd["dbar_tail"]
        rep.update({"chain": i, "seed": cfg.seed, "draws": len(chain), "wall_time": chain.wall_time,
                    "nu_accept_rate": chain.nu_accept_rate,
                    "beta0_mean": float(np.mean((chain.mu_star * chain.w).sum(axis=1))),
                    "beta_mean": chain.beta.mean(axis=0).tolist()})
        reports.append(rep)
        print(f"chain {i}: DIC {rep['dic']:.3f}  Dbar {rep['dbar']:.3f}  draws {len(chain)}  "
              f"{chain.wall_time:.1f}s")
    _dump(out / "report.json", {"chains": reports})
    _write_density(out / "density.csv", chains[0], spec, data)
    return 0


def _write_density(path: Path, chain, spec: ModelSpec, data: Dataset, points: int = 400) -> None:
    resid = data.y - (data.X @ chain.beta.mean(axis=0) if spec.p else 0.0)
    resid = resid - np.mean(resid)
    span = np.ptp(resid) if data.n > 1 else 1.0
    x = np.linspace(resid.min() - 0.25 * span, resid.max() + 0.25 * span, points)
    fx = posterior_error_density(chain, spec, x)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["x", "density"])
        for a, b in zip(x, fx):
            wr.writerow([repr(float(a)), repr(float(b))])


# ---------------------------------------------------------------------------
# predict


def _chain_data(side: dict, override: Optional[str]):
    desc = side.get("data", {})
    source = override or desc.get("source")
    if source is None:
        raise CliError("no data given and the chain sidecar does not name its data")
    return load_data(source, desc.get("response"), desc.get("covariates"))


def _prediction_inputs(side: dict, override: Optional[str]):
    """``(ids, X, y or None, description)``; new data may omit the response column."""
    desc = side.get("data", {})
    source = override or desc.get("source")
    if source is None:
        raise CliError("no data given and the chain sidecar does not name its data")
    response, covariates = desc.get("response"), desc.get("covariates") or []
    if source not in BUILTIN_DATA:
        path = Path(source)
        if not path.exists():
            raise CliError(f"data file not found: {path}")
        if response not in _data_columns(path):
            ids, X, _ = datagen.load_design(path, covariates)
            return ids, X, None, {"source": str(path.resolve()), "response": None, "covariates": covariates}
    data, d = load_data(source, response, covariates)
    ids = data.ids if data.ids is not None else list(range(1, data.n + 1))
    return ids, data.X, data.y, d


def cmd_predict(args) -> int:
    if not 0 < args.level < 1:
        raise CliError("--level must lie in (0, 1)")
    chain_path = Path(args.chain)
    if not chain_path.exists():
        raise CliError(f"chain file not found: {chain_path}")
    chain, spec, cfg, side = read_chain(chain_path)
    ids, X, y, desc = _prediction_inputs(side, args.data)
    if X.shape[1] != spec.p:
        raise CliError(f"data has {X.shape[1]} covariates, chain expects {spec.p}")
    out = _out_dir(args)
    RunConfig("predict", str(out), {"chain": str(chain_path.resolve()), "data": desc, "seed": args.seed,
                                    "level": args.level}).write()
    draws = posterior_predictive(X, chain, spec, np.random.default_rng(args.seed))
    yhat = draws.mean()
    iv = draws.hpd(args.level)
    tag = f"hpd{round(100 * args.level):d}"
    with (out / "predictions.csv").open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["id", "y_true", "y_hat", f"{tag}_lo", f"{tag}_hi"])
        for i in range(X.shape[0]):
            y_true = "" if y is None else repr(float(y[i]))
            wr.writerow([ids[i], y_true, repr(float(yhat[i])), repr(float(iv[i, 0])), repr(float(iv[i, 1]))])
    if y is None:
        print(f"predicted {X.shape[0]} rows (no response column, metrics skipped)")
        return 0
    metrics = prediction_metrics(y, draws, args.level)
    _dump(out / "metrics.json", metrics.to_dict())
    print(f"predicted {X.shape[0]} rows: RMSE {metrics.rmse:.4f}  MAE {metrics.mae:.4f}  "
          f"{tag} coverage {metrics.coverage:.3f}")
    return 0


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    loaded = []
    for p in args.chains:
        p = Path(p)
        if not p.exists():
            raise CliError(f"chain file not found: {p}")
        loaded.append((p, *read_chain(p)))
    digests = {side.get("data", {}).get("sha256") for *_, side in loaded}
    if len(digests) != 1 or None in digests:
        raise CliError("chains were fitted to different (or unrecorded) datasets")
    data, desc = _chain_data(loaded[0][4], args.data)
    if datagen.dataset_digest(data) != digests.pop():
        raise CliError("data digest does not match the one recorded with the chains")
    out = _out_dir(args)
    RunConfig("compare", str(out), {"chains": [str(p) for p, *_ in loaded], "data": desc}).write()
    rows = []
    for p, chain, spec, cfg, side in loaded:
        rep = fit_report(chain, data, spec)
        rows.append({"chain": str(p), "J": spec.J, "K": spec.K, "variant": cfg.variant.value,
                     "dic": rep.dic, "dbar": rep.dbar, "d_theta_tilde": rep.d_theta_tilde,
                     "dic_var": rep.dic_var})
    rows.sort(key=lambda r: r["dic"])
    print(f"{'J':>3} {'K':>3} {'DIC':>12} {'Dbar':>12} {'D(theta~)':>12} {'DIC_var':>12}  chain")
    for r in rows:
        print(f"{r['J']:>3} {r['K']:>3} {r['dic']:>12.3f} {r['dbar']:>12.3f} {r['d_theta_tilde']:>12.3f} "
              f"{r['dic_var']:>12.3f}  {r['chain']}")
    _dump(out / "compare.json", {"rows": rows})
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexreg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_out(p):
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./flexreg-out)")
        return p

    g = with_out(sub.add_parser("nu-grid", help="degrees-of-freedom grid equally spaced in KLD"))
    g.add_argument("--min", type=float, required=True)
    g.add_argument("--max", type=float, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--decimals", type=int, default=1)
    g.add_argument("--direction", choices=[d.value for d in Direction], default=Direction.FLEXIBLE_VS_BASE.value)
    g.add_argument("--scaling", choices=[s.value for s in Scaling], default=Scaling.UNIT_VARIANCE.value)
    g.add_argument("--metric", choices=["kld", "distance"], default="kld")
    g.set_defaults(func=cmd_nu_grid)

    s = with_out(sub.add_parser("simulate", help="simulate a study dataset"))
    s.add_argument("study", choices=sorted(SIMULATORS))
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    f = with_out(sub.add_parser("fit", help="run the Gibbs sampler"))
    f.add_argument("--data", required=True, help="CSV path or builtin name: " + ", ".join(BUILTIN_DATA))
    f.add_argument("--response")
    f.add_argument("--covariates", type=_name_list, help="comma-separated; default all but id and response")
    f.add_argument("--J", type=int, required=True)
    f.add_argument("--nu", type=_float_list, help="comma-separated degrees of freedom")
    f.add_argument("--nu-min", type=float, default=2.8)
    f.add_argument("--nu-max", type=float, default=14.4)
    f.add_argument("--K", type=int)
    f.add_argument("--nu-decimals", type=int, default=1)
    f.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.TWO_LEVEL.value)
    f.add_argument("--sample-nu", action="store_true")
    f.add_argument("--nu-step", type=float, default=0.25)
    f.add_argument("--pc-lambda", type=float)
    f.add_argument("--iterations", type=int, default=50000)
    f.add_argument("--burn-in", type=int, default=10000)
    f.add_argument("--thin", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--chains", type=int, default=1)
    f.add_argument("--relabel", action="store_true")
    f.add_argument("--mu0", type=float, help="default: sample mean of the response")
    f.add_argument("--tau", type=float)
    f.add_argument("--alpha-dot", type=float)
    f.add_argument("--beta-dot", type=float)
    f.add_argument("--alpha-w", type=float)
    f.add_argument("--alpha-wdot", type=float)
    f.add_argument("--upsilon2", type=float)
    f.add_argument("--truth-json", help="truth.json from `simulate`, for bias and density metrics")
    f.set_defaults(func=cmd_fit)

    p = with_out(sub.add_parser("predict", help="posterior predictive means and HPD intervals"))
    p.add_argument("--chain", required=True)
    p.add_argument("--data", help="default: the data recorded with the chain")
    p.add_argument("--level", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    c = with_out(sub.add_parser("compare", help="DIC table across fitted chains"))
    c.add_argument("--chains", nargs="+", required=True)
    c.add_argument("--data", help="default: the data recorded with the chains")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, NumericalError, FileNotFoundError, KeyError) as exc:
        print(f"flexreg {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
