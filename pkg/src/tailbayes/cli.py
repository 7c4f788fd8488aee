"""Command-line front end.

Subcommands: fit, predict, evaluate, simulate, reproduce, ess-grid.
Every run that produces outputs also writes a manifest capturing the
full configuration and all seeds, so outputs are reproducible from the
manifest alone.  Exit codes: 0 success, 2 usage or configuration
error, 3 data error, 4 sampler failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dataio
from .errors import ConfigError, DataError, SamplerError, TailbayesError
from .evaluation import net_benefit, paired_delta
from .model_core import (
    DistanceFunction,
    Dataset,
    GaussianPrior,
    TargetThreshold,
    UtilitySpec,
    make_log_posterior,
    target_threshold,
)
from .predict import positive_mask, predictive_mean_sd
from .reproduce import FIGURES, reproduce_figure
from .sampler import PosteriorSamples, SamplerConfig, gelman_rubin, run_mh
from .simulation import (
    Sim1Config,
    Sim2Config,
    Sim3Config,
    generate_sim1,
    generate_sim2,
    generate_sim3,
)
from .tuning import DEFAULT_LAMBDA_GRID, ess_grid, fit_pipeline

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SAMPLER = 4


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _thresholds(text: str) -> tuple[float, ...]:
    """Parse '0.1,0.2,...' or 'lo:hi:step' (inclusive endpoints)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("range form is lo:hi:step")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise argparse.ArgumentTypeError("need lo <= hi and step > 0")
        return tuple(np.round(np.arange(lo, hi + step / 2, step), 12))
    return _csv_floats(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailbayes",
        description=(
            "Bayesian logistic regression tailored to a decision threshold, "
            "with Net Benefit based tuning and evaluation"
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a tailored model and write the artifact")
    fit.add_argument("data", help="training data CSV (header row required)")
    fit.add_argument("--config", help="key=value file supplying flag defaults")
    fit.add_argument("--out", required=True, help="output directory for the model artifact")
    fit.add_argument("--outcome-col", default="y")
    group = fit.add_mutually_exclusive_group()
    group.add_argument("--t", type=float, help="target threshold in (0, 1)")
    group.add_argument(
        "--utilities",
        type=_csv_floats,
        metavar="UTP,UFP,UFN,UTN",
        help="four classification utilities from which the threshold is derived",
    )
    fit.add_argument("--lambda-grid", type=_csv_floats, default=DEFAULT_LAMBDA_GRID)
    fit.add_argument("--k-folds", type=int, default=5)
    fit.add_argument("--design-fraction", type=float, default=0.20)
    fit.add_argument("--distance", choices=["squared", "epsilon-insensitive"], default="squared")
    fit.add_argument("--epsilon", type=float, default=0.0)
    fit.add_argument("--iterations", type=int, default=20_000)
    fit.add_argument("--burn-in", type=int, default=5_000)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--initial-sd", type=float, default=0.1)
    fit.add_argument("--cv-iterations", type=int, help="chain length for CV cells (default: same)")
    fit.add_argument("--cv-burn-in", type=int)
    fit.add_argument("--prior-sd", type=float, default=100.0)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    fit.add_argument("--standardize", action="store_true", help="z-score covariates (recorded in the artifact)")
    fit.add_argument("--pi-u-file", help="external first-stage probabilities (skips the design split)")
    fit.add_argument("--rhat-chains", type=int, default=0, help="extra chains for an R-hat diagnostic")

    pred = sub.add_parser("predict", help="score new rows with a fitted artifact")
    pred.add_argument("--model", required=True, help="artifact directory written by fit")
    pred.add_argument("--data", required=True, help="CSV with the fitted covariate schema")
    pred.add_argument("--out", required=True, help="output predictions CSV")

    ev = sub.add_parser(
        "evaluate", help="Net Benefit tables from scored files or model artifacts"
    )
    ev.add_argument("--scored-a", action="append", metavar="CSV",
                    help="scored file for model A (repeat per split)")
    ev.add_argument("--scored-b", action="append", default=None, metavar="CSV",
                    help="scored file for model B (repeat per split)")
    ev.add_argument("--model-a", metavar="DIR", help="artifact directory for model A")
    ev.add_argument("--model-b", metavar="DIR", help="artifact directory for model B")
    ev.add_argument("--data", action="append", metavar="CSV",
                    help="labelled data scored by --model-a/--model-b (repeat per split)")
    ev.add_argument("--label-a", default="model_a")
    ev.add_argument("--label-b", default="model_b")
    ev.add_argument("--prob-col", default="prob")
    ev.add_argument("--outcome-col", default="y")
    ev.add_argument("--thresholds", type=_thresholds, required=True)
    ev.add_argument("--out", required=True, help="output directory")

    sim = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    sim.add_argument("--study", choices=["sim1", "sim2", "sim3"], required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--q", type=float, default=1.0, help="sim1 class-balance scalar")
    sim.add_argument("--prevalence", type=float, default=0.5, help="sim2 class prior")
    sim.add_argument("--psi", type=float, default=0.0, help="sim3 contamination fraction")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--with-oracle", action="store_true", help="include the true probability column")
    sim.add_argument("--out", required=True, help="output CSV path")

    rep = sub.add_parser("reproduce", help="rerun a benchmark figure grid at desk scale")
    rep.add_argument("--figure", choices=list(FIGURES), required=True)
    rep.add_argument("--scale", type=float, default=1.0,
                     help="fraction of the full 20 repetitions per cell")
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    rep.add_argument("--lambda-grid", type=_csv_floats, default=DEFAULT_LAMBDA_GRID)
    rep.add_argument("--n-list", type=_csv_floats)
    rep.add_argument("--q-list", type=_csv_floats)
    rep.add_argument("--prevalence-list", type=_csv_floats)
    rep.add_argument("--psi-list", type=_csv_floats)
    rep.add_argument("--t-list", type=_csv_floats)
    rep.add_argument("--out", required=True, help="output directory")

    essp = sub.add_parser("ess-grid", help="effective sample size per lambda, before any fit")
    essp.add_argument("--pi-u-file", required=True)
    essp.add_argument("--t", type=float, required=True)
    essp.add_argument("--lambda-grid", type=_csv_floats, default=DEFAULT_LAMBDA_GRID)
    essp.add_argument("--distance", choices=["squared", "epsilon-insensitive"], default="squared")
    essp.add_argument("--epsilon", type=float, default=0.0)
    essp.add_argument("--out", required=True, help="output CSV path")

    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Inject key=value config entries as flags ahead of the user's flags."""
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            return argv
        path = argv[idx + 1]
    else:
        prefixed = [a for a in argv if a.startswith("--config=")]
        if not prefixed:
            return argv
        path = prefixed[0].split("=", 1)[1]
    flags: list[str] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                flags.append(flag)
        else:
            flags.extend([flag, value])
    # config values go first so explicit flags win
    return argv[:1] + flags + argv[1:]


def _distance_from_args(args) -> DistanceFunction:
    if args.distance == "squared":
        return DistanceFunction.squared()
    return DistanceFunction.epsilon_insensitive(args.epsilon)


def _resolve_threshold(args) -> tuple[TargetThreshold, dict | None]:
    if (args.t is None) == (args.utilities is None):
        raise ConfigError("exactly one of --t and --utilities must be given")
    if args.t is not None:
        return TargetThreshold(args.t), None
    if len(args.utilities) != 4:
        raise ConfigError("--utilities needs exactly four values: UTP,UFP,UFN,UTN")
    u_tp, u_fp, u_fn, u_tn = args.utilities
    spec = UtilitySpec(u_tp=u_tp, u_fp=u_fp, u_fn=u_fn, u_tn=u_tn)
    return target_threshold(spec), {"u_tp": u_tp, "u_fp": u_fp, "u_fn": u_fn, "u_tn": u_tn}


def cmd_fit(args) -> int:
    threshold, utilities = _resolve_threshold(args)
    raw_x, y, names, _ = dataio.read_dataset_csv(args.data, args.outcome_col)

    standardizer = None
    if args.standardize:
        standardizer = dataio.Standardizer.fit(raw_x)
        raw_x = standardizer.transform(raw_x)
    train = Dataset.from_raw(raw_x, y)

    external_pi_u = None
    if args.pi_u_file:
        external_pi_u = dataio.read_pi_u_csv(args.pi_u_file, expected_rows=train.n)

    sampler_config = SamplerConfig(
        n_iterations=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        initial_sd=args.initial_sd,
        rng_seed=args.seed,
    )
    cv_config = sampler_config
    if args.cv_iterations is not None or args.cv_burn_in is not None:
        cv_config = replace(
            sampler_config,
            n_iterations=args.cv_iterations or args.iterations,
            burn_in=args.cv_burn_in if args.cv_burn_in is not None else args.burn_in,
        )
    prior = GaussianPrior.vague(train.n_coefficients, sd=args.prior_sd)

    model = fit_pipeline(
        train,
        threshold,
        lambda_grid=args.lambda_grid,
        k_folds=args.k_folds,
        design_fraction=args.design_fraction,
        distance=_distance_from_args(args),
        sampler_config=sampler_config,
        cv_sampler_config=cv_config,
        prior=prior,
        external_pi_u=external_pi_u,
        jobs=args.jobs,
    )

    rhat = None
    extra_seeds = []
    if args.rhat_chains > 1:
        dev = train.subset(model.split.development_idx)
        logpost = make_log_posterior(dev, model.weights, prior)
        chains = [model.samples.draws]
        for i in range(1, args.rhat_chains):
            chain_seed = args.seed + 90_000 + i
            extra_seeds.append(chain_seed)
            extra = run_mh(logpost, dev.n_coefficients, replace(sampler_config, rng_seed=chain_seed))
            chains.append(extra.draws)
        rhat = gelman_rubin(chains).tolist()

    coefficient_names = ["intercept"] + names
    grid_rows = ess_grid(model.pi_u_development, threshold, args.lambda_grid, model.distance)
    manifest = {
        "tool": "tailbayes",
        "version": __version__,
        "command": "fit",
        "data": {
            "path": str(args.data),
            "n": train.n,
            "outcome_col": args.outcome_col,
            "covariates": names,
        },
        "threshold": threshold.t,
        "utilities": utilities,
        "lambda_grid": list(args.lambda_grid),
        "lambda_star": model.lambda_star,
        "k_folds": args.k_folds,
        "design_fraction": args.design_fraction,
        "distance": {"kind": model.distance.kind, "epsilon": model.distance.epsilon},
        "standardize": standardizer.to_dict() if standardizer else None,
        "external_pi_u": str(args.pi_u_file) if args.pi_u_file else None,
        "sampler": {
            "n_iterations": sampler_config.n_iterations,
            "burn_in": sampler_config.burn_in,
            "thin": sampler_config.thin,
            "initial_sd": sampler_config.initial_sd,
            "target_acceptance": sampler_config.target_acceptance,
        },
        "cv_sampler": {
            "n_iterations": cv_config.n_iterations,
            "burn_in": cv_config.burn_in,
            "thin": cv_config.thin,
            "initial_sd": cv_config.initial_sd,
        },
        "seeds": {
            "base": args.seed,
            "split": model.split.seed,
            "stage1": args.seed,
            "cv_folds": [args.seed + k + 1 for k in range(args.k_folds)],
            "final_fit": args.seed,
            "rhat_chains": extra_seeds,
        },
        "split": {
            "design_rows": int(model.split.design_idx.shape[0]),
            "development_rows": int(model.split.development_idx.shape[0]),
            "indices_sha256": model.split.digest(),
        },
        "cv_table": model.cv_table,
        "ess_t": model.ess_t,
        "ess_fraction": model.ess_fraction,
        "ess_grid": grid_rows,
        "chain": {
            "acceptance_rate": model.samples.acceptance_rate,
            "final_proposal_sd": model.samples.final_proposal_sd,
            "retained_draws": model.samples.n_draws,
            "nonfinite_proposals": model.samples.n_nonfinite_proposals,
        },
        "rhat": rhat,
    }

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_manifest(out / "manifest.json", manifest)
    dataio.write_draws_csv(out / "draws.csv", coefficient_names, model.samples.draws)
    dataio.write_weights_csv(
        out / "weights.csv",
        model.split.development_idx,
        model.pi_u_development,
        model.weights,
    )
    dataio.write_ess_table(out / "ess_table.csv", grid_rows)
    print(f"fitted lambda*={model.lambda_star} ess={model.ess_t:.1f} -> {out}")
    return EXIT_OK


def _load_artifact(model_dir) -> tuple[dict, PosteriorSamples, list[str]]:
    model_dir = Path(model_dir)
    manifest = dataio.read_manifest(model_dir / "manifest.json")
    header, draws = dataio.read_draws_csv(model_dir / "draws.csv")
    expected = ["intercept"] + manifest["data"]["covariates"]
    if header != expected:
        raise DataError(f"draws.csv columns {header} do not match the manifest {expected}")
    samples = PosteriorSamples(
        draws=draws,
        acceptance_rate=manifest["chain"]["acceptance_rate"],
        final_proposal_sd=manifest["chain"]["final_proposal_sd"],
        rng_seed=manifest["seeds"]["final_fit"],
        log_posterior_trace=np.full(draws.shape[0], np.nan),
    )
    return manifest, samples, manifest["data"]["covariates"]


def cmd_predict(args) -> int:
    manifest, samples, covariate_names = _load_artifact(args.model)
    raw_x, ids = dataio.read_covariates_csv(
        args.data, covariate_names, manifest["data"]["outcome_col"]
    )
    if manifest["standardize"]:
        raw_x = dataio.Standardizer.from_dict(manifest["standardize"]).transform(raw_x)
    x = np.hstack([np.ones((raw_x.shape[0], 1)), raw_x])
    means, sds = predictive_mean_sd(x, samples)
    labels = np.where(positive_mask(means, manifest["threshold"]), "positive", "negative")
    dataio.write_predictions_csv(args.out, ids, means, sds, labels)
    print(f"wrote {len(ids)} predictions -> {args.out}")
    return EXIT_OK


def _score_artifact(model_dir, data_path) -> tuple[np.ndarray, np.ndarray]:
    """Score one labelled CSV with a fitted artifact (schema enforced)."""
    manifest, samples, covariate_names = _load_artifact(model_dir)
    raw_x, y, names, _ = dataio.read_dataset_csv(data_path, manifest["data"]["outcome_col"])
    if names != covariate_names:
        raise DataError(
            f"{data_path}: covariate columns {names} do not match the model schema "
            f"{covariate_names}"
        )
    if manifest["standardize"]:
        raw_x = dataio.Standardizer.from_dict(manifest["standardize"]).transform(raw_x)
    x = np.hstack([np.ones((raw_x.shape[0], 1)), raw_x])
    return predictive_mean_sd(x, samples)[0], y


def cmd_evaluate(args) -> int:
    scored_mode = args.scored_a is not None
    model_mode = args.model_a is not None
    if scored_mode == model_mode:
        raise ConfigError("supply either --scored-a files or --model-a with --data")
    if model_mode:
        if not args.data:
            raise ConfigError("--model-a needs at least one --data file")
        scored_a = [_score_artifact(args.model_a, p) for p in args.data]
        scored_b = (
            [_score_artifact(args.model_b, p) for p in args.data] if args.model_b else None
        )
    else:
        scored_a = [
            dataio.read_scored_csv(p, args.prob_col, args.outcome_col) for p in args.scored_a
        ]
        scored_b = (
            [dataio.read_scored_csv(p, args.prob_col, args.outcome_col) for p in args.scored_b]
            if args.scored_b
            else None
        )
    if scored_b is not None and len(scored_b) != len(scored_a):
        raise DataError("paired evaluation needs the same number of splits for both models")

    nb_rows = []
    nb_values: dict[str, dict[float, list[float]]] = {}
    for label, scored in ((args.label_a, scored_a), (args.label_b, scored_b or [])):
        nb_values[label] = {}
        for split, (probs, outcomes) in enumerate(scored, start=1):
            for t in args.thresholds:
                report = net_benefit(probs, outcomes, t)
                nb_rows.append(
                    {
                        "threshold": t,
                        "model": label,
                        "split": split,
                        "tp": report.tp_count,
                        "fp": report.fp_count,
                        "n": report.n,
                        "nb": report.net_benefit,
                    }
                )
                nb_values[label].setdefault(t, []).append(report.net_benefit)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_nb_table(out / "nb.csv", nb_rows)
    written = [out / "nb.csv"]
    if scored_b is not None:
        if len(scored_a) < 2:
            raise DataError("paired delta needs at least two splits per model")
        delta_rows = []
        for t in args.thresholds:
            delta = paired_delta(nb_values[args.label_a][t], nb_values[args.label_b][t])
            delta_rows.append(
                {"threshold": t, "mean_delta": delta.mean_delta, "se_delta": delta.se_delta}
            )
        dataio.write_delta_table(out / "delta_nb.csv", delta_rows)
        written.append(out / "delta_nb.csv")
    print("wrote " + ", ".join(str(p) for p in written))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.study == "sim1":
        config = Sim1Config(n=args.n, q=args.q, seed=args.seed)
        data, oracle = generate_sim1(config)
        mask = None
        meta = {"study": "sim1", "n": args.n, "q": args.q, "seed": args.seed}
    elif args.study == "sim2":
        config = Sim2Config(n=args.n, seed=args.seed, prevalence=args.prevalence)
        data, oracle = generate_sim2(config)
        mask = None
        meta = {"study": "sim2", "n": args.n, "prevalence": args.prevalence, "seed": args.seed}
    else:
        config = Sim3Config(n=args.n, contamination=args.psi, seed=args.seed)
        data, oracle, mask = generate_sim3(config)
        meta = {"study": "sim3", "n": args.n, "psi": args.psi, "seed": args.seed}
    meta["oracle_included"] = bool(args.with_oracle)
    meta["rows_written"] = data.n

    dataio.write_simulated_csv(
        args.out,
        data,
        oracle=oracle if args.with_oracle else None,
        mask=mask if (args.with_oracle and mask is not None) else None,
    )
    dataio.write_manifest(str(args.out) + ".meta.json", meta)
    print(f"wrote {data.n} rows -> {args.out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    overrides = {
        "n": tuple(int(v) for v in args.n_list) if args.n_list else None,
        "q": args.q_list,
        "prevalence": args.prevalence_list,
        "psi": args.psi_list,
        "t": args.t_list,
    }
    result = reproduce_figure(
        args.figure,
        scale=args.scale,
        seed=args.seed,
        jobs=args.jobs,
        lambda_grid=args.lambda_grid,
        overrides={k: v for k, v in overrides.items() if v},
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    raw = result["raw"]
    cell_keys = [k for k in raw[0] if k not in ("figure", "rep", "lambda_star", "nb_tb", "nb_sb", "delta", "nb_optimal")]
    raw_header = cell_keys + ["rep", "lambda_star", "nb_tb", "nb_sb", "delta"]
    if args.figure == "sim3-fig6":
        raw_header.append("nb_optimal")
    dataio.write_rows(out / "nb_raw.csv", raw_header, [[row[k] for k in raw_header] for row in raw])

    agg_rows = []
    for agg in result["aggregated"]:
        r = {k: agg[k] for k in cell_keys if k in agg}
        r.update(
            threshold=agg["t"],
            mean_delta=agg["mean_delta"],
            se_delta=agg["se_delta"],
        )
        r.pop("t", None)
        agg_rows.append(r)
    dataio.write_delta_table(out / "delta_nb.csv", agg_rows)

    if args.figure == "sim3-fig6":
        summary_rows = [
            {
                "threshold": agg["t"],
                "psi": agg["psi"],
                "mean_nb_tb": agg["mean_nb_tb"],
                "mean_nb_sb": agg["mean_nb_sb"],
                "mean_nb_optimal": agg["mean_nb_optimal"],
                "mean_delta": agg["mean_delta"],
                "se_delta": agg["se_delta"],
            }
            for agg in result["aggregated"]
        ]
        header = list(summary_rows[0])
        dataio.write_rows(
            out / "nb_summary.csv", header, [[row[k] for k in header] for row in summary_rows]
        )

    manifest = {
        "tool": "tailbayes",
        "version": __version__,
        "command": "reproduce",
        "figure": args.figure,
        "scale": args.scale,
        "repetitions": result["repetitions"],
        "seed": args.seed,
        "lambda_grid": list(args.lambda_grid),
        "overrides": {k: list(v) for k, v in overrides.items() if v},
    }
    dataio.write_manifest(out / "manifest.json", manifest)
    print(f"wrote {len(raw)} repetition rows -> {out}")
    return EXIT_OK


def cmd_ess_grid(args) -> int:
    pi_u = dataio.read_pi_u_csv(args.pi_u_file)
    rows = ess_grid(pi_u, TargetThreshold(args.t), args.lambda_grid, _distance_from_args(args))
    dataio.write_ess_table(args.out, rows)
    print(f"wrote {len(rows)} rows -> {args.out}")
    return EXIT_OK


_HANDLERS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
    "ess-grid": cmd_ess_grid,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(argv)
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerError as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except TailbayesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
