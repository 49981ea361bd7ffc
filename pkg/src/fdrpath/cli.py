"""Command-line surface: estimate, cv, bootstrap-se, simulate, calibrate.

All outputs are plain CSV/JSON for downstream plotting.  Every file
carries the master seed and a hash of the resolved configuration, and
repeated runs with the same seed are byte-identical for any worker
count.  CSV files start with one ``#``-prefixed provenance line.

Exit codes: 0 success, 1 invalid configuration, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import replace

import click
import numpy as np

from .bootstrap import bootstrap_se_modelx, bootstrap_se_parametric
from .crossval import cv_curve
from .data import GAUSSIAN_GRAPHICAL, GAUSSIAN_LINEAR, MODEL_X, Dataset, load_csv
from .estimator import FdrConfig, estimate_curve
from .exceptions import CalibrationError, DataError, FdrPathError
from .laws import BernoulliCovariateLaw, GaussianCovariateLaw, ar1_covariance
from .scenarios import (
    FAMILIES,
    calibrate_signal,
    default_selector,
    desk_spec,
    estimate_batch,
)
from .selectors import SELECTOR_KINDS, Selector

EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_SETTINGS = (GAUSSIAN_LINEAR, MODEL_X, GAUSSIAN_GRAPHICAL)


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map package exceptions onto the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except (OSError, DataError) as exc:
            _fail(EXIT_DATA, str(exc))
        except FdrPathError as exc:
            _fail(EXIT_NUMERIC, f"{type(exc).__name__}: {exc}")

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ----------------------------------------------------------- config plumbing
def _merge_config(ctx: click.Context, config_path: str | None) -> dict:
    """Resolved parameters: flag > config file > declared default."""
    params = dict(ctx.params)
    params.pop("config", None)
    if not config_path:
        return params
    try:
        with open(config_path) as fh:
            fromfile = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    if not isinstance(fromfile, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(fromfile) - set(params)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, value in fromfile.items():
        src = ctx.get_parameter_source(key)
        if src is not click.core.ParameterSource.COMMANDLINE:
            params[key] = value
    return params


# Execution details that must not affect outputs: excluded from the config
# hash and the run.json echo so results are byte-identical across worker
# counts and output locations.
_EXECUTION_KEYS = ("workers", "out", "config")


def _statistical_config(resolved: dict) -> dict:
    return {k: v for k, v in resolved.items() if k not in _EXECUTION_KEYS}


def _config_hash(resolved: dict) -> str:
    canon = json.dumps(
        _statistical_config(resolved), sort_keys=True, separators=(",", ":"), default=str
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _write_csv(path, columns, rows, seed, cfg_hash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# fdrpath seed={seed} config_hash={cfg_hash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_run_json(out_dir, command, resolved, seed, cfg_hash):
    cfg = _statistical_config(resolved)
    payload = {
        "command": command,
        "config": {k: (v if _jsonable(v) else str(v)) for k, v in sorted(cfg.items())},
        "seed": seed,
        "config_hash": cfg_hash,
    }
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def _parse_grid(text: str | None):
    if not text:
        return None
    try:
        return np.array([float(tok) for tok in text.split(",") if tok.strip()])
    except ValueError as exc:
        raise ConfigError(f"bad --grid value: {exc}") from None


def build_covariate_law(decl, d: int | None = None):
    """Covariate-law declaration -> law object.

    Accepts a dict (or JSON string) like ``{"kind": "ar1", "rho": 0.5}``,
    ``{"kind": "gaussian", "mean": [...], "cov": [[...]]}`` or
    ``{"kind": "bernoulli", "pi": 0.05}``.
    """
    if decl is None:
        return None
    if isinstance(decl, str):
        try:
            decl = json.loads(decl)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad covariate-law JSON: {exc}") from None
    if not isinstance(decl, dict) or "kind" not in decl:
        raise ConfigError("covariate law must be an object with a 'kind' field")
    kind = decl["kind"]
    if kind == "gaussian":
        if "mean" in decl and "cov" in decl:
            return GaussianCovariateLaw(decl["mean"], decl["cov"])
        if d is None:
            raise ConfigError("gaussian law without mean/cov needs the dimension")
        return GaussianCovariateLaw(np.zeros(d), np.eye(d))
    if kind == "ar1":
        dim = decl.get("d", d)
        if dim is None:
            raise ConfigError("ar1 law needs the dimension")
        return GaussianCovariateLaw(
            np.zeros(int(dim)), ar1_covariance(int(dim), float(decl["rho"]))
        )
    if kind == "bernoulli":
        dim = decl.get("d", d)
        pi = decl.get("pi")
        if pi is None:
            raise ConfigError("bernoulli law needs 'pi'")
        return BernoulliCovariateLaw(pi, d=None if np.ndim(pi) else int(dim))
    raise ConfigError(f"unknown covariate-law kind {kind!r}")


def _load_dataset(resolved) -> Dataset:
    path = resolved.get("data")
    if not path:
        raise ConfigError("--data is required")
    setting = resolved["setting"]
    law = build_covariate_law(resolved.get("covariate_law"))
    if setting != GAUSSIAN_GRAPHICAL and not resolved.get("response"):
        raise ConfigError(f"--response is required for setting {setting}")
    data = load_csv(
        path,
        response=None if setting == GAUSSIAN_GRAPHICAL else resolved["response"],
        setting=setting,
        standardize=resolved.get("standardize"),
        covariate_law=None,
    )
    if setting == MODEL_X:
        if law is None:
            raise ConfigError("model_x runs need --covariate-law")
        if isinstance(law, GaussianCovariateLaw) and law.d != data.d:
            raise ConfigError(f"covariate law dimension {law.d} != data dimension {data.d}")
        data = Dataset(
            x=data.x, y=data.y, setting=MODEL_X,
            column_names=data.column_names, covariate_law=law,
        )
    return data


def _build_selector(resolved, setting) -> Selector:
    kind = resolved["selector"]
    if kind not in SELECTOR_KINDS or kind == "custom":
        raise ConfigError(f"unknown selector {kind!r}")
    compatible = {
        GAUSSIAN_LINEAR: ("lasso", "forward_stepwise", "p_threshold"),
        MODEL_X: ("lasso", "forward_stepwise", "logistic_l1"),
        GAUSSIAN_GRAPHICAL: ("graphical_lasso",),
    }
    if kind not in compatible[setting]:
        raise ConfigError(f"selector {kind!r} does not apply to setting {setting!r}")
    return Selector(
        kind=kind,
        grid=_parse_grid(resolved.get("grid")),
        n_grid=int(resolved["n_lambda"]),
    )


def _fdr_config(resolved) -> FdrConfig:
    try:
        return FdrConfig(
            zeta=float(resolved["zeta"]),
            mc_samples=int(resolved["mc"]),
            mode=resolved["mode"],
            seed=int(resolved["seed"]),
            crt_draws=int(resolved.get("crt_draws", 199)),
            workers=int(resolved["workers"]),
        )
    except DataError as exc:
        raise ConfigError(str(exc)) from None


def _curve_rows(curve, se=None, cv=None):
    rows = []
    for ti, t in enumerate(curve.grid):
        row = [t, curve.fdr_hat[ti]]
        if se is not None:
            row.append(se[ti])
        if cv is not None:
            row.extend([cv.mean_error[ti], cv.se_error[ti]])
        row.append(int(curve.n_selected[ti]))
        rows.append(row)
    return rows


def _contribution_rows(curve):
    rows = []
    for ti, t in enumerate(curve.grid):
        for h, label in enumerate(curve.labels):
            rows.append(
                [t, label, curve.fdr_star[ti, h], curve.phi[ti, h], curve.pvalues[h]]
            )
    return rows


# ------------------------------------------------------------------ commands
@click.group()
def main():
    """Conservative FDR estimation for variable selection along tuning paths."""


def _common_options(fn):
    for opt in reversed(
        [
            click.option("--config", type=click.Path(), default=None, help="JSON config file; flags override it."),
            click.option("--seed", type=int, default=0, show_default=True),
            click.option("--out", type=click.Path(), default=None, help="Output directory."),
            click.option("--workers", type=int, default=os.cpu_count() or 1, show_default="cores"),
        ]
    ):
        fn = opt(fn)
    return fn


def _data_options(fn):
    for opt in reversed(
        [
            click.option("--data", type=click.Path(), default=None, help="Input CSV."),
            click.option("--response", default=None, help="Response column name."),
            click.option("--setting", type=click.Choice(_SETTINGS), default=GAUSSIAN_LINEAR, show_default=True),
            click.option("--selector", type=click.Choice([k for k in SELECTOR_KINDS if k != "custom"]), default="lasso", show_default=True),
            click.option("--grid", default=None, help="Comma-separated tuning values."),
            click.option("--n-lambda", "n_lambda", type=int, default=10, show_default=True),
            click.option("--zeta", type=float, default=0.1, show_default=True),
            click.option("--mc", type=int, default=20, show_default=True),
            click.option("--mode", type=click.Choice(["auto", "mc", "exact"]), default="auto", show_default=True),
            click.option("--crt-draws", "crt_draws", type=int, default=199, show_default=True),
            click.option("--covariate-law", "covariate_law", default=None, help="JSON declaration for model_x."),
            click.option("--standardize/--no-standardize", "standardize", default=None),
        ]
    ):
        fn = opt(fn)
    return fn


def _prepare(ctx, resolved, command):
    out = resolved.get("out")
    if not out:
        raise ConfigError("--out is required")
    os.makedirs(out, exist_ok=True)
    seed = int(resolved["seed"])
    cfg_hash = _config_hash(resolved)
    _write_run_json(out, command, resolved, seed, cfg_hash)
    return out, seed, cfg_hash


@main.command()
@_data_options
@_common_options
@click.pass_context
@_guarded
def estimate(ctx, **_kwargs):
    """Estimate the FDR curve for a dataset and write curves/contributions."""
    resolved = _merge_config(ctx, ctx.params.get("config"))
    out, seed, cfg_hash = _prepare(ctx, resolved, "estimate")
    data = _load_dataset(resolved)
    selector = _build_selector(resolved, data.setting)
    cfg = _fdr_config(resolved)
    click.echo(f"estimating over {selector.n_grid if selector.grid is None else selector.grid.size} tuning values", err=True)
    curve = estimate_curve(data, selector, cfg)
    _write_csv(os.path.join(out, "curves.csv"), ["tuning", "hfdr", "r"], _curve_rows(curve), seed, cfg_hash)
    _write_csv(
        os.path.join(out, "contributions.csv"),
        ["tuning", "hypothesis", "hfdr_star", "phi", "p_value"],
        _contribution_rows(curve),
        seed,
        cfg_hash,
    )
    click.echo(f"wrote {out}/curves.csv, contributions.csv, run.json", err=True)


@main.command()
@_data_options
@click.option("--folds", type=int, default=10, show_default=True)
@click.option("--metric", type=click.Choice(["mse", "neg_loglik"]), default=None)
@_common_options
@click.pass_context
@_guarded
def cv(ctx, **_kwargs):
    """Cross-validation error curve over the tuning grid."""
    resolved = _merge_config(ctx, ctx.params.get("config"))
    out, seed, cfg_hash = _prepare(ctx, resolved, "cv")
    data = _load_dataset(resolved)
    selector = _build_selector(resolved, data.setting)
    curve = cv_curve(data, selector, folds=int(resolved["folds"]), metric=resolved.get("metric"), seed=seed)
    rows = []
    for ti, t in enumerate(curve.grid):
        rows.append([t, curve.mean_error[ti], curve.se_error[ti]])
    _write_csv(os.path.join(out, "cv.csv"), ["tuning", "cv_error", "cv_se"], rows, seed, cfg_hash)
    summary = {
        "lambda_min": curve.lambda_min,
        "lambda_1se": curve.lambda_1se,
        "metric": curve.metric,
        "fold_ids": curve.fold_ids.tolist(),
        "seed": seed,
        "config_hash": cfg_hash,
    }
    with open(os.path.join(out, "cv.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {out}/cv.csv, cv.json", err=True)


@main.command("bootstrap-se")
@_data_options
@click.option("--boot-m", "boot_m", type=int, default=10, show_default=True)
@click.option("--folds", type=int, default=10, show_default=True)
@_common_options
@click.pass_context
@_guarded
def bootstrap_se(ctx, **_kwargs):
    """FDR curve plus bootstrap standard errors."""
    resolved = _merge_config(ctx, ctx.params.get("config"))
    out, seed, cfg_hash = _prepare(ctx, resolved, "bootstrap-se")
    data = _load_dataset(resolved)
    selector = _build_selector(resolved, data.setting)
    cfg = _fdr_config(resolved)
    curve = estimate_curve(data, selector, cfg)
    sel_fixed = replace(selector, grid=curve.grid)
    if data.setting == MODEL_X:
        boot = bootstrap_se_modelx(
            data, sel_fixed, cfg, M=int(resolved["boot_m"]), workers=cfg.workers
        )
    else:
        boot = bootstrap_se_parametric(
            data, sel_fixed, cfg, M=int(resolved["boot_m"]),
            folds=int(resolved["folds"]), workers=cfg.workers,
        )
    _write_csv(
        os.path.join(out, "curves.csv"),
        ["tuning", "hfdr", "hfdr_se", "r"],
        _curve_rows(curve, se=boot.se),
        seed,
        cfg_hash,
    )
    _write_csv(
        os.path.join(out, "contributions.csv"),
        ["tuning", "hypothesis", "hfdr_star", "phi", "p_value"],
        _contribution_rows(curve),
        seed,
        cfg_hash,
    )
    click.echo(f"wrote {out}/curves.csv (with hfdr_se), contributions.csv, run.json", err=True)


@main.command()
@click.option("--family", type=click.Choice(FAMILIES), required=True)
@click.option("--n", type=int, default=None)
@click.option("--d", type=int, default=None)
@click.option("--d1", type=int, default=None)
@click.option("--theta-star", "theta_star", type=float, default=None, help="Signal strength; default: desk-scale calibrated value.")
@click.option("--replicates", type=int, default=200, show_default=True)
@click.option("--selector", type=click.Choice([k for k in SELECTOR_KINDS if k != "custom"]), default=None)
@click.option("--n-lambda", "n_lambda", type=int, default=10, show_default=True)
@click.option("--zeta", type=float, default=0.1, show_default=True)
@click.option("--mc", type=int, default=20, show_default=True)
@click.option("--mode", type=click.Choice(["auto", "mc", "exact"]), default="auto", show_default=True)
@click.option("--crt-draws", "crt_draws", type=int, default=199, show_default=True)
@_common_options
@click.pass_context
@_guarded
def simulate(ctx, **_kwargs):
    """Run a simulation scenario and compare the estimate to oracle error rates."""
    resolved = _merge_config(ctx, ctx.params.get("config"))
    out, seed, cfg_hash = _prepare(ctx, resolved, "simulate")
    spec = desk_spec(resolved["family"])
    overrides = {
        k: resolved[k] for k in ("n", "d", "d1") if resolved.get(k) is not None
    }
    if resolved.get("theta_star") is not None:
        overrides["theta_star"] = float(resolved["theta_star"])
    spec = replace(spec, **overrides) if overrides else spec
    selector = (
        Selector(kind=resolved["selector"], n_grid=int(resolved["n_lambda"]))
        if resolved.get("selector")
        else default_selector(spec, n_grid=int(resolved["n_lambda"]))
    )
    cfg = _fdr_config(resolved)
    replicates = int(resolved["replicates"])
    click.echo(f"running {replicates} replicates of {spec.family}", err=True)
    batch = estimate_batch(
        spec, selector, cfg, replicates=replicates, workers=cfg.workers,
        progress=lambda done, total: click.echo(f"replicate {done}/{total}", err=True),
    )
    flat = [
        (
            rep,
            float(batch["tuning"][rep, ti]),
            float(batch["hfdr"][rep, ti]),
            float(batch["fdp"][rep, ti]),
            float(batch["fpr"][rep, ti]),
            int(batch["n_selected"][rep, ti]),
        )
        for rep in range(replicates)
        for ti in range(batch["tuning"].shape[1])
    ]
    _write_csv(
        os.path.join(out, "results.csv"),
        ["replicate", "tuning", "hfdr", "fdp", "fpr", "r"],
        flat,
        seed,
        cfg_hash,
    )
    hfdr_mat = batch["hfdr"]
    fdp_mat = batch["fdp"]
    tun_mat = batch["tuning"]
    se_h = hfdr_mat.std(axis=0, ddof=1) / np.sqrt(replicates)
    se_f = fdp_mat.std(axis=0, ddof=1) / np.sqrt(replicates)
    combined = np.sqrt(se_h**2 + se_f**2)
    conservative = hfdr_mat.mean(axis=0) >= fdp_mat.mean(axis=0) - 3 * combined
    summary = {
        "family": spec.family,
        "n": spec.n,
        "d": spec.d,
        "d1": spec.d1,
        "theta_star": spec.theta_star,
        "replicates": replicates,
        "tuning_median": np.median(tun_mat, axis=0).tolist(),
        "mean_hfdr": hfdr_mat.mean(axis=0).tolist(),
        "mean_fdp": fdp_mat.mean(axis=0).tolist(),
        "se_hfdr": se_h.tolist(),
        "se_fdp": se_f.tolist(),
        "conservative": [bool(b) for b in conservative],
        "all_conservative": bool(conservative.all()),
        "seed": seed,
        "config_hash": cfg_hash,
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {out}/results.csv, summary.json", err=True)


@main.command()
@click.option("--family", type=click.Choice(FAMILIES), required=True)
@click.option("--n", type=int, default=None)
@click.option("--d", type=int, default=None)
@click.option("--d1", type=int, default=None)
@click.option("--fdr-target", "fdr_target", type=float, default=0.2, show_default=True)
@click.option("--fpr-target", "fpr_target", type=float, default=0.2, show_default=True)
@click.option("--replicates", type=int, default=100, show_default=True)
@click.option("--tol", type=float, default=0.02, show_default=True)
@_common_options
@click.pass_context
@_guarded
def calibrate(ctx, **_kwargs):
    """Solve for the signal strength hitting the FPR target at the FDR target."""
    resolved = _merge_config(ctx, ctx.params.get("config"))
    spec = desk_spec(resolved["family"])
    overrides = {k: resolved[k] for k in ("n", "d", "d1") if resolved.get(k) is not None}
    spec = replace(spec, **(overrides | {"theta_star": "calibrate"}))
    try:
        theta_star = calibrate_signal(
            spec,
            fdr_target=float(resolved["fdr_target"]),
            fpr_target=float(resolved["fpr_target"]),
            tol=float(resolved["tol"]),
            replicates=int(resolved["replicates"]),
            seed=int(resolved["seed"]),
        )
    except CalibrationError as exc:
        _fail(EXIT_NUMERIC, str(exc))
        return
    payload = {
        "family": spec.family, "n": spec.n, "d": spec.d, "d1": spec.d1,
        "fdr_target": resolved["fdr_target"], "fpr_target": resolved["fpr_target"],
        "theta_star": theta_star, "seed": int(resolved["seed"]),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    click.echo(text)
    if resolved.get("out"):
        os.makedirs(resolved["out"], exist_ok=True)
        with open(os.path.join(resolved["out"], "calibration.json"), "w") as fh:
            fh.write(text + "\n")


if __name__ == "__main__":
    main()
