"""Command-line surface: validate, density, price, selfcheck.

Configs are JSON documents::

    {
      "model": "ou",                          # or "cir"
      "params": {"alpha": 1.0, "k": 0.5, "y0": 0.0,
                 "s0": 100.0, "r": 0.05, "mu": 0.05, "T": 1.0},
      "vol_family": {"name": "reference", "c": 0.1, "m": 0.1},   # OU only
      "grid": {"n_steps": 512, "pricing_n_steps": 256},          # optional
      "ensemble": {"n_paths": 50000, "seed": 1, "antithetic": false,
                   "winsorize": false, "winsorize_quantile": 1e-4},
      "contract": {"strike": 100.0},
      "density": {"x_grid": "auto"},          # or {"min":..,"max":..,"points":..}
      "output": {"directory": "out", "format": "csv"}            # csv | json
    }

CIR configs put {"b":..,"k":..,"z0":..} in params instead. ``density`` and
``price`` validate the full density hypotheses; ``validate`` honours an
optional top-level "density_mode": false for pricing-only CIR setups.

Exit codes: 0 success, 1 selfcheck failure, 2 validation failure,
3 unreadable or malformed config, 4 runtime guard budget exceeded.
Nothing is written unless validation passes, and outputs are byte-stable
across reruns and --threads values. All floats are serialized with 17
significant digits (exact float64 round-trip).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, pricing
from .density import (KDE_MIN_SAMPLES, auto_grid, kde_density,
                      malliavin_density, winsorize_weights)
from .ensemble import duality_statistic, run_ensemble
from .errors import FailureBudgetExceeded, ValidationError
from .models import (CIRParams, Contract, OUParams, reference_vol_family,
                     validate_cir, validate_contract, validate_ou)
from .paths import make_grid
from .rng import NAMESPACE_DENSITY, NAMESPACE_MIXING, NAMESPACE_PLAIN
from .selfcheck import format_table, run_battery

DEFAULT_DENSITY_STEPS = 512
DEFAULT_PRICING_STEPS = 256
LOW_SAMPLE_THRESHOLD = 1000

EXIT_OK = 0
EXIT_SELFCHECK = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_GUARD = 4


class ConfigError(Exception):
    """Structurally unusable config (missing keys, wrong types): exit 3."""


def _fmt(x):
    return format(float(x), ".17g")


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"missing '{key}' in {where}")
    return mapping[key]


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return raw


def build_model(raw, density_mode):
    """Construct and validate the model described by a config dict."""
    kind = _require(raw, "model", "config")
    params = _require(raw, "params", "config")
    try:
        if kind == "ou":
            fam = raw.get("vol_family", {"name": "reference", "c": 0.1, "m": 0.1})
            if fam.get("name", "reference") != "reference":
                raise ConfigError(f"unknown vol_family {fam.get('name')!r}")
            vol = reference_vol_family(float(fam["c"]), float(fam["m"]))
            p = OUParams(alpha=float(params["alpha"]), k=float(params["k"]),
                         y0=float(params["y0"]), s0=float(params["s0"]),
                         r=float(params["r"]), mu=float(params.get("mu", params["r"])),
                         T=float(params["T"]))
            return validate_ou(p, vol)
        if kind == "cir":
            p = CIRParams(b=float(params["b"]), k=float(params["k"]),
                          z0=float(params["z0"]), s0=float(params["s0"]),
                          r=float(params["r"]), mu=float(params.get("mu", params["r"])),
                          T=float(params["T"]))
            return validate_cir(p, density_mode=density_mode)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad params block: {exc!r}") from exc
    raise ConfigError(f"unknown model {kind!r} (expected 'ou' or 'cir')")


def _ensemble_opts(raw):
    ens = _require(raw, "ensemble", "config")
    try:
        return {
            "n_paths": int(ens["n_paths"]),
            "seed": int(ens.get("seed", 0)),
            "antithetic": bool(ens.get("antithetic", False)),
            "winsorize": bool(ens.get("winsorize", False)),
            "winsorize_quantile": float(ens.get("winsorize_quantile", 1e-4)),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad ensemble block: {exc!r}") from exc


def _write_rows(out_dir, name, fmt, header, rows):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.{fmt}")
    if fmt == "csv":
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v)
                                  for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        payload = [dict(zip(header, row)) for row in rows]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    return path


def _density_grid(raw, samples, lower_bound):
    spec = raw.get("density", {}).get("x_grid", "auto")
    if spec == "auto":
        return auto_grid(samples, points=41, lower_bound=lower_bound)
    try:
        return np.linspace(float(spec["min"]), float(spec["max"]), int(spec["points"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad density.x_grid block: {exc!r}") from exc


def _contract_from(raw):
    block = _require(raw, "contract", "config")
    try:
        return validate_contract(Contract(strike=float(block["strike"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad contract block: {exc!r}") from exc


def cmd_validate(args):
    raw = load_config(args.config)
    density_mode = bool(raw.get("density_mode", True))
    build_model(raw, density_mode)
    if "contract" in raw:
        _contract_from(raw)
    print("VALID")
    return EXIT_OK


def cmd_density(args):
    raw = load_config(args.config)
    model = build_model(raw, density_mode=True)
    opts = _ensemble_opts(raw)
    seed = args.seed if args.seed is not None else opts["seed"]
    steps = int(raw.get("grid", {}).get("n_steps", DEFAULT_DENSITY_STEPS))
    grid = make_grid(model.params.T, steps)
    out_dir = args.out or raw.get("output", {}).get("directory", ".")
    fmt = raw.get("output", {}).get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")

    print(f"[avgvar] simulating {opts['n_paths']} {model.params.__class__.__name__} "
          f"paths on n={steps} (seed {seed})")
    result = run_ensemble(model, grid, opts["n_paths"], seed,
                          namespace=NAMESPACE_DENSITY, threads=args.threads,
                          antithetic=opts["antithetic"])
    if opts["n_paths"] < LOW_SAMPLE_THRESHOLD:
        print(f"LOW_SAMPLE n_paths={opts['n_paths']} < {LOW_SAMPLE_THRESHOLD}; "
              "density standard errors will be large")

    f_samples, weights = result.valid_samples()
    if opts["winsorize"]:
        weights = winsorize_weights(weights, opts["winsorize_quantile"])
    lower = model.vol.lower_bound_c**2 if result.model_tag == "ou" else None
    x_grid = _density_grid(raw, f_samples, lower)

    print("[avgvar] estimating density on "
          f"[{x_grid[0]:.6g}, {x_grid[-1]:.6g}] with {x_grid.size} points")
    dens = malliavin_density(f_samples, weights, x_grid)
    if f_samples.size >= KDE_MIN_SAMPLES:
        kde = kde_density(f_samples, x_grid)
        kde_cols = (kde.p_hat, kde.se)
    else:
        kde_cols = (np.full(x_grid.size, np.nan), np.full(x_grid.size, np.nan))

    rows = [(float(x), float(p), float(s), float(pk), float(sk))
            for x, p, s, pk, sk in zip(x_grid, dens.p_hat, dens.se, *kde_cols)]
    path1 = _write_rows(out_dir, "density", fmt,
                        ["x", "p_malliavin", "se_malliavin", "p_kde", "se_kde"], rows)

    denom = result.denominator
    wrows = [(int(i), float(result.avg_variance[i]),
              float(result.weight[i]), float(denom[i]))
             for i in range(result.n_paths)]
    path2 = _write_rows(out_dir, "weights", fmt,
                        ["path_index", "avg_variance", "weight", "denominator"], wrows)

    print(f"[avgvar] wrote {path1} and {path2} "
          f"({result.n_failures} failed paths of {result.n_paths})")
    print(f"summary normalization={_fmt(dens.normalization)} "
          f"mean_weight={_fmt(np.mean(weights))} "
          f"duality={_fmt(duality_statistic(result))}")
    return EXIT_OK


def cmd_price(args):
    raw = load_config(args.config)
    model = build_model(raw, density_mode=True)
    contract = _contract_from(raw)
    opts = _ensemble_opts(raw)
    seed = args.seed if args.seed is not None else opts["seed"]
    grid_cfg = raw.get("grid", {})
    density_steps = int(grid_cfg.get("n_steps", DEFAULT_DENSITY_STEPS))
    pricing_steps = int(grid_cfg.get("pricing_n_steps", DEFAULT_PRICING_STEPS))
    out_dir = args.out or raw.get("output", {}).get("directory", ".")
    fmt = raw.get("output", {}).get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    p = model.params

    print(f"[avgvar] density ensemble: {opts['n_paths']} paths, n={density_steps}")
    dens_res = run_ensemble(model, make_grid(p.T, density_steps), opts["n_paths"],
                            seed, namespace=NAMESPACE_DENSITY, threads=args.threads,
                            antithetic=opts["antithetic"])
    f_samples, weights = dens_res.valid_samples()
    if opts["winsorize"]:
        weights = winsorize_weights(weights, opts["winsorize_quantile"])
    lower = model.vol.lower_bound_c**2 if dens_res.model_tag == "ou" else None
    dens = malliavin_density(f_samples, weights, _density_grid(raw, f_samples, lower))
    p_dens = pricing.price_from_density(dens, contract.strike, p.s0, p.r, p.T,
                                        samples=f_samples, weights=weights)

    print(f"[avgvar] mixing ensemble: {opts['n_paths']} paths, n={pricing_steps}")
    mix_res = run_ensemble(model, make_grid(p.T, pricing_steps), opts["n_paths"],
                           seed, namespace=NAMESPACE_MIXING, threads=args.threads,
                           antithetic=opts["antithetic"], compute_weights=False)
    p_mix = pricing.price_mixing(np.sqrt(mix_res.avg_variance), contract.strike,
                                 p.s0, p.r, p.T)

    print(f"[avgvar] plain MC ensemble: {opts['n_paths']} paths, n={pricing_steps}")
    plain_res = run_ensemble(model, make_grid(p.T, pricing_steps), opts["n_paths"],
                             seed, namespace=NAMESPACE_PLAIN, threads=args.threads,
                             antithetic=opts["antithetic"], compute_weights=False,
                             collect_asset=True)
    p_plain = pricing.price_plain_mc(plain_res.terminal_asset, contract.strike,
                                     p.r, p.T)
    p_mart = pricing.martingale_check(plain_res.terminal_asset, p.s0, p.r, p.T)

    rows = [(e.method, float(e.value), float(e.std_error),
             float(e.ci95[0]), float(e.ci95[1]))
            for e in (p_dens, p_mix, p_plain, p_mart)]
    path = _write_rows(out_dir, "prices", fmt,
                       ["method", "value", "se", "ci_lo", "ci_hi"], rows)
    print(f"[avgvar] wrote {path}")
    for e in (p_dens, p_mix, p_plain, p_mart):
        print(f"{e.method} value={_fmt(e.value)} se={_fmt(e.std_error)}")
    return EXIT_OK


def cmd_selfcheck(args):
    rows = run_battery(seed=args.seed if args.seed is not None else 20240601,
                       threads=args.threads)
    print(format_table(rows))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_SELFCHECK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="avgvar",
        description="Averaged-variance densities and option prices under "
                    "OU and CIR stochastic volatility")
    parser.add_argument("--version", action="version", version=f"avgvar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="path to JSON config")
            sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (never changes output bytes)")
        sp.add_argument("--seed", type=int, default=None, help="seed override")

    sp = sub.add_parser("validate", help="validate a config; exit 0 iff usable")
    sp.add_argument("--config", required=True)
    sp = sub.add_parser("density", help="estimate the averaged-variance density")
    common(sp)
    sp = sub.add_parser("price", help="price a European call three ways")
    common(sp)
    sp = sub.add_parser("selfcheck", help="run the reduced-size correctness battery")
    common(sp, needs_config=False)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"validate": cmd_validate, "density": cmd_density,
                "price": cmd_price, "selfcheck": cmd_selfcheck}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"E_CONFIG {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        for code, msg in exc.violations:
            print(f"{code} {msg}")
        return EXIT_VALIDATION
    except FailureBudgetExceeded as exc:
        print(f"E_FAILURE_BUDGET {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
