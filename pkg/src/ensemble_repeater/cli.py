"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 oracle/analytic mismatch in ``verify``.
"""

from __future__ import annotations

import argparse
import io
import itertools
import math
import sys

import numpy as np

from . import analytic, chain, fock
from .params import ParameterError, RepeaterParams

#: Config-file keys mapped to RepeaterParams fields.
PARAM_KEYS = {
    "alpha2": ("alpha2", float),
    "eta_m": ("eta_m", float),
    "eta_d": ("eta_d", float),
    "p": ("p", float),
    "r_hz": ("r", float),
    "L_km": ("L_total", float),
    "n": ("n", int),
    "L_att_km": ("L_att", float),
    "c_fiber_mps": ("c_fiber", float),
    "include_source_prep": ("include_source_prep", None),
}
RUN_KEYS = {"trials": int, "seed": int, "restart_policy": str, "max_links": int}

DEFAULT_GRID = {"alpha2": [0.1, 0.2, 0.5], "eta": [0.7, 0.9, 1.0]}
VERIFY_TOL = 1e-9
NA = "NA"


class UsageError(ValueError):
    pass


def _parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"include_source_prep: not a boolean: {text!r}")


def parse_kv_text(text, allowed=None):
    """Parse flat ``key = value`` lines with ``#`` comments into a dict of strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if allowed is not None and key not in allowed:
            raise UsageError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


class RunConfig:
    """Parameters from a config file merged with ``--set`` overrides."""

    def __init__(self, values=None):
        self.raw = dict(values or {})
        unknown = set(self.raw) - set(PARAM_KEYS) - set(RUN_KEYS)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")

    @classmethod
    def load(cls, path=None, overrides=()):
        values = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_kv_text(fh.read()))
        for item in overrides:
            if "=" not in item:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            values[key.strip()] = value.strip()
        return cls(values)

    def params(self, **changes) -> RepeaterParams:
        fields = {}
        for key, (name, conv) in PARAM_KEYS.items():
            if key not in self.raw:
                continue
            text = self.raw[key]
            try:
                fields[name] = _parse_bool(text) if conv is None else conv(text)
            except ValueError as exc:
                raise UsageError(f"{key}: cannot parse {text!r} ({exc})") from None
        fields.update(changes)
        return RepeaterParams(**fields)

    def get(self, key, default):
        if key not in self.raw:
            return default
        try:
            return RUN_KEYS[key](self.raw[key])
        except ValueError:
            raise UsageError(f"{key}: cannot parse {self.raw[key]!r}") from None


def fmt_csv(x):
    """Shortest round-trip text for CSV output (locale independent)."""
    if x is None:
        return NA
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def fmt_human(x):
    if x is None:
        return "n/a"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


def write_table(out, header, rows, fmt):
    if fmt == "csv":
        out.write(",".join(header) + "\n")
        for row in rows:
            out.write(",".join(fmt_csv(v) for v in row) + "\n")
        return
    cells = [list(header)] + [[fmt_human(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        out.write("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n")


def breakdown_rows(params, bd):
    w = bd.weights
    rows = [
        ("T_charge_s", bd.T_charge),
        ("T_source_s", bd.T_source),
        ("P_s_eta", bd.P_s_eta),
        ("c2", w.c2),
        ("c1", w.c1),
        ("c0", w.c0),
        ("P0", bd.P0),
        ("Pi", bd.Pi),
        ("Ppr", bd.Ppr),
        ("T_tot_product_s", bd.T_tot_product),
        ("T_tot_closed_s", bd.T_tot_closed),
    ]
    if bd.F_final is not None:
        rows.append(("F_final", bd.F_final))
    return rows


def cmd_rates(args, config, out):
    params = config.params()
    bd = analytic.rate_breakdown(params)
    if bd.F_final is None:
        print(f"warning: no fidelity coefficients for n={params.n}; F_final omitted", file=sys.stderr)
    write_table(out, ("quantity", "value"), breakdown_rows(params, bd), args.format)
    return 0


def cmd_sweep(args, config, out):
    if not (0 <= args.lmin <= args.lmax) or args.step <= 0:
        raise UsageError("sweep needs 0 <= lmin <= lmax and step > 0")
    count = int(math.floor((args.lmax - args.lmin) / args.step + 1e-9)) + 1
    distances = [args.lmin + i * args.step for i in range(count)]
    params = config.params()
    rows = analytic.sweep_curves(params, distances, config.get("max_links", 16))
    write_table(out, ("distance_km", "protocol", "links", "time_s"), rows, args.format)
    return 0


def _load_grid(path):
    if path is None:
        return DEFAULT_GRID
    with open(path, encoding="utf-8") as fh:
        raw = parse_kv_text(fh.read(), allowed={"alpha2", "eta"})
    grid = dict(DEFAULT_GRID)
    for key, text in raw.items():
        try:
            grid[key] = [float(v) for v in text.replace(",", " ").split()]
        except ValueError:
            raise UsageError(f"grid {key}: cannot parse {text!r}") from None
    return grid


def verify_point(alpha2, eta, eta_t, perturb=0.0):
    """Max absolute deviations (weights, probabilities) between oracle and closed forms at one grid point."""
    expected = analytic.source_weights(alpha2, eta)
    exp_w = np.array(expected.as_tuple()) + perturb
    src = fock.run_source_circuit(alpha2, math.sqrt(eta), math.sqrt(eta))
    gen = fock.run_generation_circuit(expected, expected, eta, eta_t)
    swp = fock.run_swap_circuit(expected, expected, eta)
    dw = max(np.max(np.abs(np.array(r.weights.as_tuple()) - exp_w)) for r in (src, gen, swp))
    dp = max(
        abs(src.probability - analytic.source_success_prob(alpha2, eta)),
        abs(gen.probability - analytic.link_generation_prob(expected, eta, eta_t)),
        abs(swp.probability - analytic.swap_prob(expected, eta)),
    )
    resid = max(r.residual for r in (src, gen, swp))
    return float(dw), float(dp), float(resid)


def cmd_verify(args, config, out):
    grid = _load_grid(args.grid)
    eta_t = config.params().eta_t
    rows = []
    ok = True
    for a2, eta in itertools.product(grid["alpha2"], grid["eta"]):
        dw, dp, resid = verify_point(a2, eta, eta_t, args.perturb)
        passed = dw <= VERIFY_TOL and dp <= VERIFY_TOL and resid <= VERIFY_TOL
        ok &= passed
        rows.append((a2, eta, dw, dp, resid, "pass" if passed else "FAIL"))
    write_table(out, ("alpha2", "eta", "max_dev_weights", "max_dev_prob", "residual", "status"), rows, args.format)
    return 0 if ok else 2


def cmd_simulate(args, config, out):
    base = config.params()
    trials = args.trials if args.trials is not None else config.get("trials", 10_000)
    seed = args.seed if args.seed is not None else config.get("seed", 42)
    policy = config.get("restart_policy", "full-restart")
    n_lo = base.n if args.nmin is None else args.nmin
    n_hi = base.n if args.nmax is None else args.nmax
    if n_lo > n_hi:
        raise UsageError("nmin must not exceed nmax")
    rows = []
    for n in range(n_lo, n_hi + 1):
        params = base.replace(n=n)
        probs = [args.scale * x for x in analytic.chain_probabilities(params)]
        sim = chain.SimConfig(params, trials=trials, seed=seed, restart_policy=policy,
                              probabilities=probs, swap_latency=args.swap_latency)
        stats = chain.run_trials(sim, workers=args.workers)
        eq3 = analytic.eq3_time(n, analytic.attempt_cycle(params), *probs)
        rows.append((n, stats.mean, stats.stderr, eq3, stats.mean / eq3))
    write_table(out, ("n", "mean_s", "stderr_s", "eq3_s", "ratio"), rows, args.format)
    return 0


def cmd_optimize(args, config, out):
    params = config.params()
    try:
        alpha2, bd = analytic.optimize_alpha(params, args.fmin)
    except analytic.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    write_table(out, ("quantity", "value"), [("alpha2_opt", alpha2)] + breakdown_rows(params, bd), args.format)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ensemble-repeater", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="flat 'key = value' parameter file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--format", choices=("human", "csv"), default="human")
    parser.add_argument("--out", help="write output to this file instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("rates", help="closed-form rate and fidelity breakdown")

    p = sub.add_parser("sweep", help="direct vs partial-readout distribution time over distance")
    p.add_argument("--lmin", type=float, default=400.0)
    p.add_argument("--lmax", type=float, default=1200.0)
    p.add_argument("--step", type=float, default=100.0)

    p = sub.add_parser("verify", help="compare the Fock-space oracle with the closed forms")
    p.add_argument("--grid", help="file with 'alpha2 = ...' and 'eta = ...' lists")
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)

    p = sub.add_parser("simulate", help="Monte Carlo chain simulation vs the closed-form estimate")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--nmin", type=int)
    p.add_argument("--nmax", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--scale", type=float, default=1.0, help="multiply P0, Pi, Ppr by this factor")
    p.add_argument("--swap-latency", default="link", help="'link' (L0/c), 'none', or seconds")

    p = sub.add_parser("optimize", help="readout weight minimizing the distribution time")
    p.add_argument("--fmin", type=float, default=0.0)
    return parser


COMMANDS = {"rates": cmd_rates, "sweep": cmd_sweep, "verify": cmd_verify,
            "simulate": cmd_simulate, "optimize": cmd_optimize}


def main(argv=None):
    args = build_parser().parse_args(argv)
    buf = io.StringIO()
    try:
        config = RunConfig.load(args.config, args.set)
        code = COMMANDS[args.command](args, config, buf)
    except (ParameterError, UsageError, analytic.UnsupportedNestingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
