"""Command-line pipelines: estimate, forecast, backtest, simulate, montecarlo.

Conventions shared by all commands:

- panel CSV schema: header ``cycle,value``, one observation per row;
  rows are grouped by the cycle key in order of first appearance, or by
  date when every key parses as an ISO date
- config files are TOML or JSON (picked by extension); command-line
  flags override config values
- outputs are written atomically (temp file + rename) and contain no
  timestamps, so reruns on the same inputs are byte-identical; BLAS is
  pinned to one thread for the same reason
- exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import sim, spectral, tsmodel
from .ecdf import CenteredGram, CyclePanel, pairwise_raw_gram
from .exceptions import ConfigError, DataError, NegativeVarianceError, NumericalError
from .measure import Laplace, WeightMeasure, measure_from_dict, measure_to_dict
from .spectral import SpectralConfig, ThresholdDim, FixedDim, DimRule

__all__ = ["RunConfig", "main", "read_panel_csv", "assemble_backtest_report"]

_CONFIG_KEYS = {
    "measure", "p", "dim_rule", "demean_per_cycle", "quantiles",
    "candidate_orders", "n0", "n", "q", "alpha", "seed", "burn_in", "reps",
}


@dataclass(frozen=True)
class RunConfig:
    """Merged configuration for all commands; unused fields are ignored.

    `p` left unset resolves to 5 for estimation commands and to 1 for
    the montecarlo study (whose synthetic process has one lag).
    """

    measure: WeightMeasure = field(default_factory=Laplace)
    p: int | None = None
    dim_rule: DimRule = field(default_factory=ThresholdDim)
    demean_per_cycle: bool = True
    quantiles: tuple = (0.01, 0.05, 0.5, 0.95, 0.99)
    candidate_orders: tuple = tsmodel.DEFAULT_ORDERS
    n0: int | None = None
    # simulation / monte carlo settings
    n: int = 50
    q: int = 50
    alpha: float = 0.5
    seed: int = 0
    burn_in: int = 1000
    reps: int = 100

    @property
    def p_est(self) -> int:
        return 5 if self.p is None else self.p

    @property
    def spectral(self) -> SpectralConfig:
        return SpectralConfig(p=self.p_est, dim_rule=self.dim_rule)


def _dim_rule_from_dict(cfg) -> DimRule:
    if not isinstance(cfg, dict):
        raise ConfigError("dim_rule must be a table/dict")
    kind = cfg.get("type")
    if kind == "fixed":
        try:
            return FixedDim(int(cfg["d"]))
        except KeyError:
            raise ConfigError("fixed dim_rule needs 'd'") from None
    if kind == "threshold":
        return ThresholdDim(float(cfg.get("c", 1.0)), float(cfg.get("exponent", 0.4)))
    raise ConfigError(f"unknown dim_rule type {kind!r}")


def load_config_file(path: str) -> dict:
    """Parse a TOML or JSON config file into a dict."""
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            return tomllib.loads(text.decode("utf-8"))
        except Exception as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    if p.suffix == ".json":
        try:
            out = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        if not isinstance(out, dict):
            raise ConfigError(f"config root in {path} must be an object")
        return out
    raise ConfigError(f"config file must end in .toml or .json, got {path}")


def config_from_dict(raw: dict) -> RunConfig:
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    if "measure" in raw:
        kw["measure"] = measure_from_dict(raw["measure"])
    if "dim_rule" in raw:
        kw["dim_rule"] = _dim_rule_from_dict(raw["dim_rule"])
    if "quantiles" in raw:
        qs = tuple(float(v) for v in raw["quantiles"])
        if not qs or any(not 0 < v < 1 for v in qs):
            raise ConfigError("quantiles must lie strictly in (0, 1)")
        kw["quantiles"] = qs
    if "candidate_orders" in raw:
        orders = []
        for item in raw["candidate_orders"]:
            pair = tuple(int(v) for v in item)
            if len(pair) != 2 or min(pair) < 0:
                raise ConfigError(f"bad candidate order {item!r}")
            orders.append(pair)
        if not orders:
            raise ConfigError("candidate_orders must be nonempty")
        kw["candidate_orders"] = tuple(orders)
    for key, conv in (("p", int), ("demean_per_cycle", bool), ("n0", int),
                      ("n", int), ("q", int), ("alpha", float), ("seed", int),
                      ("burn_in", int), ("reps", int)):
        if key in raw and raw[key] is not None:
            kw[key] = conv(raw[key])
    return RunConfig(**kw)


def build_config(args) -> RunConfig:
    cfg = config_from_dict(load_config_file(args.config) if args.config else {})
    overrides = {}
    for key in ("p", "n0", "n", "q", "alpha", "seed", "reps"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "no_demean", False):
        overrides["demean_per_cycle"] = False
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


# --- panel ingestion --------------------------------------------------------

def _parse_date(key: str):
    try:
        return datetime.date.fromisoformat(key)
    except ValueError:
        return None


def read_panel_csv(path: str, demean_per_cycle: bool = True) -> CyclePanel:
    """Load a ``cycle,value`` CSV into a panel.

    Cycles keep their order of first appearance unless every cycle key
    parses as an ISO date, in which case they are sorted by date.
    Malformed rows fail with their 1-based line number.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    if [h.strip().lower() for h in header] != ["cycle", "value"]:
        raise DataError(f"{path} line 1: header must be 'cycle,value', got {header!r}")
    groups: dict = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"{path} line {lineno}: expected 2 fields, got {len(row)}")
        key = row[0].strip()
        if not key:
            raise DataError(f"{path} line {lineno}: empty cycle key")
        try:
            value = float(row[1])
        except ValueError:
            raise DataError(
                f"{path} line {lineno}: value {row[1]!r} is not a number"
            ) from None
        if not np.isfinite(value):
            raise DataError(f"{path} line {lineno}: value {row[1]!r} is not finite")
        groups.setdefault(key, []).append(value)
    if len(groups) < 2:
        raise DataError(f"{path}: need at least 2 cycles, got {len(groups)}")
    keys = list(groups)
    dates = [_parse_date(k) for k in keys]
    if all(d is not None for d in dates):
        keys = [k for _, k in sorted(zip(dates, keys))]
    cycles = []
    for key in keys:
        arr = np.sort(np.asarray(groups[key], dtype=float))
        if demean_per_cycle:
            arr = arr - arr.mean()
        cycles.append(arr)
    return CyclePanel(cycles, labels=keys)


# --- output helpers ---------------------------------------------------------

def _write_text(path: Path, text: str):
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _write_text(path, buf.getvalue())


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _jsonable(value):
    """NaN/inf are not valid JSON; report them as null."""
    if value is None or isinstance(value, str) or isinstance(value, bool):
        return value
    v = float(value)
    return v if np.isfinite(v) else None


# --- model artifacts --------------------------------------------------------

def _write_model_outputs(outdir: Path, panel: CyclePanel, model, cfg: RunConfig):
    meta = spectral.model_to_dict(model)
    meta["measure"] = measure_to_dict(cfg.measure)
    meta["demean_per_cycle"] = cfg.demean_per_cycle
    _write_json(outdir / "model.json", meta)

    _write_csv(outdir / "eigenvalues.csv", ["j", "theta"],
               [[j + 1, _fmt(float(v))] for j, v in enumerate(model.theta)])

    d = model.d_kept
    _write_csv(outdir / "scores.csv",
               ["t"] + [f"W_{j + 1}" for j in range(d)],
               [[t + 1] + [_fmt(float(model.scores[t, j])) for j in range(d)]
                for t in range(model.n)])

    grid = spectral.default_grid(panel)
    funcs = [spectral.eigenfunction_eval(model, panel, j, grid) for j in range(d)]
    _write_csv(outdir / "eigenfunctions.csv",
               ["x"] + [f"psi_{j + 1}" for j in range(d)],
               [[_fmt(float(x))] + [_fmt(float(f[i])) for f in funcs]
                for i, x in enumerate(grid)])


# --- strategy pieces --------------------------------------------------------

def _select_arma(series: np.ndarray, orders) -> tuple:
    """AIC-best ARMA fit over the candidate orders.

    Returns (fit or None, candidates table); candidates that cannot be
    fitted (short series, degenerate) are recorded with a null AIC.
    """
    table = []
    best = None
    for p_o, q_o in orders:
        try:
            fit = tsmodel.fit_arma(series, p_o, q_o)
        except (DataError, NumericalError) as exc:
            table.append({"order": [p_o, q_o], "aic": None, "skipped": str(exc)})
            continue
        table.append({"order": [p_o, q_o], "aic": _jsonable(fit.aic)})
        if best is None or fit.aic < best.aic:
            best = fit
    return best, table


def _forecast_scores(model, orders):
    """Forecast the next score for each selected component."""
    w_next = np.zeros(model.d_hat)
    details = []
    for j in range(model.d_hat):
        series = model.scores[:, j]
        best, table = _select_arma(series, orders)
        if best is None:
            raise DataError(
                f"component {j + 1}: no candidate ARMA order could be fitted"
            )
        w_next[j] = tsmodel.forecast_arma(best, series)
        entry = {
            "component": j + 1,
            "selected_order": list(best.order),
            "aic": _jsonable(best.aic),
            "intercept": _jsonable(best.intercept),
            "ar": [_jsonable(v) for v in best.ar],
            "ma": [_jsonable(v) for v in best.ma],
            "sigma2": _jsonable(best.sigma2),
            "ar_stationary": best.ar_stationary,
            "candidates": table,
            "w_forecast": _jsonable(w_next[j]),
        }
        lags = min(10, len(series) - 1)
        try:
            q_stat, p_val = tsmodel.ljung_box(best.residuals, lags)
            entry["residual_ljung_box"] = {
                "lags": lags, "q": _jsonable(q_stat), "p": _jsonable(p_val),
            }
        except (ConfigError, DataError) as exc:
            entry["residual_ljung_box"] = {"error": str(exc)}
        details.append(entry)
    return w_next, details


def _variance_strategy(model, panel, coeffs):
    """Moment variance with monotonized fallback; returns (value, source)."""
    try:
        return spectral.variance_from_cdf(coeffs, panel), "moments"
    except NegativeVarianceError:
        return spectral.variance_from_monotonized(coeffs, panel), "monotonized"


def _realized_variances(panel: CyclePanel, upto: int) -> np.ndarray:
    return np.array([float(np.var(panel.cycles[t])) for t in range(upto)])


# --- commands ---------------------------------------------------------------

def cmd_estimate(args) -> int:
    cfg = build_config(args)
    panel = read_panel_csv(args.input, cfg.demean_per_cycle)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = spectral.fit(panel, cfg.measure, cfg.spectral)
    _write_model_outputs(outdir, panel, model, cfg)
    print(f"estimated {model.d_kept} component(s) from {panel.n} cycles; "
          f"d_hat = {model.d_hat}")
    return 0


def cmd_forecast(args) -> int:
    cfg = build_config(args)
    panel = read_panel_csv(args.input, cfg.demean_per_cycle)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model = spectral.fit(panel, cfg.measure, cfg.spectral)
    _write_model_outputs(outdir, panel, model, cfg)

    w_next, arma_details = _forecast_scores(model, cfg.candidate_orders)
    coeffs = spectral.forecast_cdf(model, w_next)
    variance, source = _variance_strategy(model, panel, coeffs)
    grid = spectral.default_grid(panel)
    qs = spectral.quantile_from_cdf(coeffs, panel, cfg.quantiles, grid)

    report = {
        "n": model.n,
        "p": model.p,
        "d_hat": model.d_hat,
        "measure": measure_to_dict(cfg.measure),
        "demean_per_cycle": cfg.demean_per_cycle,
        "arma": arma_details,
        "w_forecast": [_jsonable(v) for v in w_next],
        "variance_spectral": _jsonable(variance),
        "variance_source": source,
        "quantiles": {_fmt(float(t)): _jsonable(x)
                      for t, x in zip(cfg.quantiles, qs)},
    }
    try:
        har = tsmodel.har_forecast(_realized_variances(panel, panel.n))
        report["variance_har"] = _jsonable(har.forecast)
        report["har_beta"] = [_jsonable(v) for v in har.beta]
    except (DataError, NumericalError) as exc:
        report["variance_har"] = None
        report["har_error"] = str(exc)

    cdf_vals = spectral.monotonize(spectral.combo_cdf_eval(panel, coeffs, grid))
    _write_csv(outdir / "cdf_forecast.csv", ["x", "F"],
               [[_fmt(float(x)), _fmt(float(v))] for x, v in zip(grid, cdf_vals)])
    _write_json(outdir / "forecast.json", report)
    print(f"one-step forecast written; variance ({source}) = {variance:.6g}")
    return 0


def assemble_backtest_report(steps: list, n0: int, cfg: RunConfig) -> dict:
    """Aggregate per-step records into the backtest report.

    `steps` rows hold err_spectral/err_har (NaN where a strategy
    failed); MSEs average the steps where both errors are defined, and
    the Diebold-Mariano comparison is reported as "not computable" when
    it cannot be run (identical losses, too few steps).
    """
    err_a = np.array([s["err_spectral"] for s in steps], dtype=float)
    err_b = np.array([s["err_har"] for s in steps], dtype=float)
    ok = np.isfinite(err_a) & np.isfinite(err_b)
    report = {
        "n0": n0,
        "steps_total": len(steps),
        "steps_compared": int(np.count_nonzero(ok)),
        "measure": measure_to_dict(cfg.measure),
        "demean_per_cycle": cfg.demean_per_cycle,
        "proxy": "next-cycle empirical variance",
    }
    if np.any(ok):
        mse_a = float(np.mean(err_a[ok] ** 2))
        mse_b = float(np.mean(err_b[ok] ** 2))
        report["mse_spectral"] = _jsonable(mse_a)
        report["mse_har"] = _jsonable(mse_b)
        report["relative_mse"] = _jsonable(mse_a / mse_b) if mse_b > 0 else None
        try:
            dm = tsmodel.diebold_mariano(err_a[ok], err_b[ok])
            report["dm"] = {
                "statistic": _jsonable(dm.statistic),
                "p_two_sided": _jsonable(dm.p_two_sided),
                "p_one_sided": _jsonable(dm.p_one_sided),
            }
        except (DataError, NumericalError) as exc:
            report["dm"] = {"error": f"not computable: {exc}"}
    else:
        report["mse_spectral"] = None
        report["mse_har"] = None
        report["relative_mse"] = None
        report["dm"] = {"error": "not computable: no comparable steps"}
    return report


def cmd_backtest(args) -> int:
    cfg = build_config(args)
    panel = read_panel_csv(args.input, cfg.demean_per_cycle)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    floor = max(30, cfg.p_est + 10)
    n0 = cfg.n0 if cfg.n0 is not None else floor
    if n0 < floor:
        raise ConfigError(f"n0 must be at least max(30, p + 10) = {floor}, got {n0}")
    if panel.n <= n0:
        raise DataError(f"panel has {panel.n} cycles; backtest needs more than n0 = {n0}")

    # raw Gram of the full panel, computed once per (t, s) pair; the
    # pairwise path keeps entry (t, s) a function of cycles t and s
    # alone, so training slices reuse it without even roundoff leakage
    # from later cycles
    raw_full = pairwise_raw_gram(panel, cfg.measure)
    realized = _realized_variances(panel, panel.n)

    steps = []
    for n in range(n0, panel.n):
        sub = panel.head(n)
        gram = CenteredGram.from_raw(raw_full[:n, :n])
        label = panel.labels[n] if panel.labels is not None else str(n + 1)
        step = {"train_n": n, "target": label,
                "proxy": float(realized[n]),
                "var_spectral": np.nan, "var_har": np.nan,
                "err_spectral": np.nan, "err_har": np.nan,
                "d_hat": -1, "variance_source": "", "flag": ""}
        flags = []
        try:
            model = spectral.fit(sub, cfg.measure, cfg.spectral, gram=gram)
            step["d_hat"] = model.d_hat
            w_next, _ = _forecast_scores(model, cfg.candidate_orders)
            coeffs = spectral.forecast_cdf(model, w_next)
            var_s, source = _variance_strategy(model, sub, coeffs)
            step["var_spectral"] = var_s
            step["err_spectral"] = var_s - realized[n]
            step["variance_source"] = source
        except (DataError, NumericalError) as exc:
            flags.append(f"spectral: {exc}")
        try:
            har = tsmodel.har_forecast(realized[:n])
            step["var_har"] = har.forecast
            step["err_har"] = har.forecast - realized[n]
        except (DataError, NumericalError) as exc:
            flags.append(f"har: {exc}")
        step["flag"] = "; ".join(flags)
        steps.append(step)

    report = assemble_backtest_report(steps, n0, cfg)
    _write_json(outdir / "backtest.json", report)
    cols = ["train_n", "target", "var_spectral", "var_har", "proxy",
            "err_spectral", "err_har", "d_hat", "variance_source", "flag"]
    _write_csv(outdir / "backtest_steps.csv", cols,
               [[_fmt(s[c]) if not isinstance(s[c], str) else s[c] for c in cols]
                for s in steps])
    rel = report.get("relative_mse")
    print(f"backtest over {len(steps)} step(s); relative MSE = "
          f"{rel if rel is not None else 'n/a'}")
    return 0


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sim_cfg = sim.SimConfig(n=cfg.n, q=cfg.q, alpha=cfg.alpha, seed=cfg.seed,
                            burn_in=cfg.burn_in)
    lat, cycles = sim.simulate_panel(sim_cfg)
    rows = [[t + 1, _fmt(float(v))] for t, cyc in enumerate(cycles) for v in cyc]
    _write_csv(outdir / "panel.csv", ["cycle", "value"], rows)
    _write_csv(outdir / "latent.csv", ["cycle", "w"],
               [[t + 1, _fmt(float(w))] for t, w in enumerate(lat.w)])
    print(f"simulated {cfg.n} cycle(s) x {cfg.q} draw(s), seed {cfg.seed}")
    return 0


def cmd_montecarlo(args) -> int:
    cfg = build_config(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mc_cfg = sim.MonteCarloConfig(reps=cfg.reps, n=cfg.n, q=cfg.q,
                                  alpha=cfg.alpha, seed=cfg.seed,
                                  p=1 if cfg.p is None else cfg.p,
                                  dim_rule=cfg.dim_rule, burn_in=cfg.burn_in)
    result = sim.run_monte_carlo(mc_cfg)
    fields = sim.MC_RECORD_FIELDS
    rows = []
    for r in range(cfg.reps):
        row = []
        for name in fields:
            v = result.records[name][r]
            if name in ("rep", "d_hat") and np.isfinite(v):
                row.append(str(int(v)))
            else:
                row.append(_fmt(float(v)))
        rows.append(row)
    _write_csv(outdir / "records.csv", list(fields), rows)
    _write_json(outdir / "summary.json",
                {k: _jsonable(v) if isinstance(v, float) else v
                 for k, v in result.summary.items()})
    print(f"{cfg.reps} replication(s) done; median theta1 = "
          f"{result.summary['median_theta1']:.6g}")
    return 0


# --- entry point ------------------------------------------------------------

def _add_common(parser, *, needs_input: bool):
    if needs_input:
        parser.add_argument("--input", required=True, help="panel CSV (cycle,value)")
    parser.add_argument("--outdir", required=True, help="output directory")
    parser.add_argument("--config", help="TOML or JSON config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdfdyn",
        description="Spectral estimation and forecasting of latent CDF dynamics "
                    "in cyclic panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="fit the spectral model to a panel")
    _add_common(est, needs_input=True)
    est.add_argument("--p", type=int, help="lag depth")
    est.add_argument("--no-demean", action="store_true",
                     help="ingest raw values (default demeans each cycle)")
    est.set_defaults(func=cmd_estimate)

    fc = sub.add_parser("forecast", help="one-step CDF/variance/quantile forecast")
    _add_common(fc, needs_input=True)
    fc.add_argument("--p", type=int, help="lag depth")
    fc.add_argument("--no-demean", action="store_true")
    fc.set_defaults(func=cmd_forecast)

    bt = sub.add_parser("backtest", help="rolling one-step variance backtest")
    _add_common(bt, needs_input=True)
    bt.add_argument("--p", type=int, help="lag depth")
    bt.add_argument("--n0", type=int, help="first training size")
    bt.add_argument("--no-demean", action="store_true")
    bt.set_defaults(func=cmd_backtest)

    si = sub.add_parser("simulate", help="write a synthetic panel CSV")
    _add_common(si, needs_input=False)
    si.add_argument("--n", type=int, help="number of cycles")
    si.add_argument("--q", type=int, help="observations per cycle")
    si.add_argument("--alpha", type=float, help="latent AR coefficient")
    si.add_argument("--seed", type=int)
    si.set_defaults(func=cmd_simulate)

    mc = sub.add_parser("montecarlo", help="replicated estimation study")
    _add_common(mc, needs_input=False)
    mc.add_argument("--reps", type=int)
    mc.add_argument("--n", type=int)
    mc.add_argument("--q", type=int)
    mc.add_argument("--alpha", type=float)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--p", type=int, help="lag depth")
    mc.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        # one BLAS thread so output bytes do not depend on the host's
        # thread configuration
        with threadpool_limits(limits=1):
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
