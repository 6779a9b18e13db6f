"""Command-line surface.

Subcommands: quantize, decode, ripcheck, sweep.  Vector files are UTF-8,
one number per line, `#` starts a comment.  Sweep configs are flat
`key = value` files.  Exit codes: 0 success, 1 assertion failure under
--assert, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from math import sqrt
from pathlib import Path

import numpy as np

from circsd.errors import InputError
from circsd import harness, rip
from circsd.decode import DecodeProblem, decode_sd
from circsd.operators import MeasurementEnsemble, build_difference_system, sample_omega
from circsd.quantize import Alphabet, msq, sigma_delta, verify_sd_identity


def read_vector(path):
    values = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            values.append(float(body))
        except ValueError:
            raise InputError(f"{path}:{lineno}: not a number: {body!r}") from None
    if not values:
        raise InputError(f"{path}: no numbers found")
    return np.array(values)


def write_vector(path, v):
    with open(path, "w", encoding="utf-8") as fh:
        for entry in np.asarray(v).ravel():
            fh.write(format(float(entry), ".17g") + "\n")


_CONFIG_KEYS = {
    "n": ("N", int),
    "s": ("s", int),
    "m_list": ("m_list", lambda v: tuple(int(t) for t in v.split(","))),
    "r_list": ("r_list", lambda v: tuple(int(t) for t in v.split(","))),
    "levels": ("levels", int),
    "step": ("step", float),
    "one_bit": ("one_bit", lambda v: v.lower() in ("1", "true", "yes")),
    "noise_level": ("noise_level", float),
    "noise_bound": ("noise_bound", float),
    "alpha": ("alpha", float),
    "trials": ("trials", int),
    "decoder": ("decoder", str),
    "xi_dist": ("xi_dist", str),
    "signal_model": ("signal_model", str),
    "signal_p": ("signal_p", float),
    "mu": ("mu", float),
    "seed": ("seed", int),
    "solver_tol": ("solver_tol", float),
    "solver_max_iters": ("solver_max_iters", int),
}


def read_config(path):
    """Parse a flat key = value sweep config."""
    kwargs = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise InputError(f"{path}:{lineno}: expected key = value, got {body!r}")
        key, _, value = (t.strip() for t in body.partition("="))
        if key.lower() not in _CONFIG_KEYS:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        field, conv = _CONFIG_KEYS[key.lower()]
        try:
            kwargs[field] = conv(value)
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    for required in ("N", "s", "m_list", "r_list"):
        if required not in kwargs:
            raise InputError(f"{path}: missing required key {required.lower()}")
    return harness.ExperimentConfig(**kwargs)


def _alphabet_from_args(args):
    if args.one_bit:
        return Alphabet.one_bit()
    return Alphabet(levels=args.levels, step=args.step)


def cmd_quantize(args):
    y = read_vector(args.input)
    a = _alphabet_from_args(args)
    if args.msq:
        q = msq(y, a)
        write_vector(args.out_q, q)
        print(f"msq: wrote {len(q)} samples to {args.out_q}")
        print(f"max residual {np.abs(y - q).max():.6g}")
        return 0
    run = sigma_delta(y, args.r, a)
    write_vector(args.out_q, run.q)
    if args.out_u:
        write_vector(args.out_u, run.u)
    resid = verify_sd_identity(run, y)
    print(f"sigma-delta order {args.r}: wrote q to {args.out_q}"
          + (f", state trace to {args.out_u}" if args.out_u else ""))
    print(f"state sup norm {np.abs(run.u).max():.6g} "
          f"(bound {run.stability_bound:g}), identity residual {resid:.3e}")
    print("stable" if run.stable else "NOT stable")
    return 0


def cmd_decode(args):
    q = read_vector(args.q)
    xi = read_vector(args.xi)
    omega = read_vector(args.omega).astype(np.int64)
    ens = MeasurementEnsemble(N=len(xi), m=len(omega), xi=xi, omega=omega)
    if len(q) != ens.m:
        raise InputError(f"q has length {len(q)}, expected m={ens.m}")
    diff = build_difference_system(args.r, ens.m)
    prob = DecodeProblem(ens=ens, diff=diff, q=q, gamma_r=args.gamma, eps=args.eps)
    res = decode_sd(prob)
    write_vector(args.out, res.xhat)
    print(f"objective={res.objective:.9g} feas_quant={res.feas_quant:.3e} "
          f"feas_noise={res.feas_noise:.3e} iterations={res.iterations} "
          f"converged={res.converged}")
    return 0


def cmd_ripcheck(args):
    if args.trials < 1:
        raise InputError(f"trials must be >= 1, got {args.trials}")
    spec = rip.CompositeSpec(N=args.N, m=args.m, s=args.s, alpha=args.alpha, r=args.r)
    rng = np.random.default_rng(args.seed)
    params = {"N": args.N, "m": args.m, "s": args.s, "alpha": args.alpha,
              "r": args.r, "ell": spec.ell, "trials": args.trials, "seed": args.seed}
    reports = []

    x = np.zeros(args.N)
    support = rng.choice(args.N, size=args.s, replace=False)
    x[support] = rng.standard_normal(args.s)
    x /= np.linalg.norm(x)
    exp = rip.expectation_check(x, spec, omega_draws=args.trials, rng=rng)
    slack = 3.0 / sqrt(args.trials)
    reports.append(rip.report_record(
        "expectation", params, exp.deviation, exp.bound + slack,
        exp.deviation <= exp.bound + slack))

    y = np.zeros(args.N)
    support2 = rng.choice(args.N, size=args.s, replace=False)
    y[support2] = rng.standard_normal(args.s)
    y /= np.linalg.norm(y)
    bd = rip.bounded_difference_check(x, y, spec, trials=args.trials, rng=rng)
    reports.append(rip.report_record(
        "bounded_difference", params, bd.max_diff, bd.bound, bd.max_diff <= bd.bound))

    xi = rng.standard_normal(args.N)
    omega = sample_omega(args.N, args.m, rng)
    ens = MeasurementEnsemble(N=args.N, m=args.m, xi=xi, omega=omega)
    diff = build_difference_system(args.r, args.m)
    M = rip.composite_matrix(ens, diff, spec.ell)
    est = rip.rip_monte_carlo(M, args.s, trials=args.trials, rng=rng)
    reports.append(rip.report_record(
        "rip_estimate", params, est.delta_hat, args.delta_threshold,
        est.delta_hat < args.delta_threshold))

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for rec in reports:
            out.write(json.dumps(rec) + "\n")
    finally:
        if args.out:
            out.close()
    return 0 if all(rec["pass"] for rec in reports) else 1


def cmd_sweep(args):
    cfg = read_config(args.config)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    result = harness.sweep_and_fit(cfg, threads=args.threads)
    comparison = harness.compare_msq_floor(result.records)
    harness.write_records_csv(result.records, outdir / "records.csv")
    harness.write_summary_csv(result.summary, outdir / "summary.csv")
    harness.write_slopes_csv(result.slopes, outdir / "slopes.csv")
    print(f"wrote {len(result.records)} records to {outdir}")
    for row in result.slopes:
        print(f"scheme={row['scheme']} r={row['r']} slope={row['slope']:.4f} "
              f"r2={row['r2']:.4f}")
    print(f"msq comparison: ordering_ok={comparison['ordering_ok']} "
          f"ratio_monotone={comparison['ratio_monotone']}")
    if args.check:
        ok = comparison["ordering_ok"]
        for row in result.slopes:
            if row["scheme"] != "sd":
                continue
            threshold = -cfg.alpha * (row["r"] - 0.5) + 0.2
            if row["slope"] > threshold:
                print(f"slope assertion failed: scheme=sd r={row['r']} "
                      f"slope={row['slope']:.4f} > {threshold:.4f}")
                ok = False
        if not ok:
            return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="circsd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    pq = sub.add_parser("quantize", help="quantize a vector file")
    pq.add_argument("input", help="vector file, one number per line")
    pq.add_argument("--r", type=int, default=1, help="sigma-delta order")
    pq.add_argument("--one-bit", action="store_true", help="use the {-1,+1} alphabet")
    pq.add_argument("--levels", type=int, default=4)
    pq.add_argument("--step", type=float, default=0.25)
    pq.add_argument("--msq", action="store_true", help="memoryless scalar quantization")
    pq.add_argument("--out-q", default="q.txt")
    pq.add_argument("--out-u", default=None, help="state-trace output file")
    pq.set_defaults(func=cmd_quantize)

    pd = sub.add_parser("decode", help="run the quantization-aware decoder")
    pd.add_argument("--q", required=True, help="quantized measurement file")
    pd.add_argument("--xi", required=True, help="generator vector file")
    pd.add_argument("--omega", required=True, help="1-based sample index file")
    pd.add_argument("--r", type=int, default=1)
    pd.add_argument("--gamma", type=float, required=True)
    pd.add_argument("--eps", type=float, default=0.0)
    pd.add_argument("--out", default="xhat.txt")
    pd.set_defaults(func=cmd_decode)

    pr = sub.add_parser("ripcheck", help="near-isometry and expectation checks")
    pr.add_argument("--N", type=int, required=True)
    pr.add_argument("--m", type=int, required=True)
    pr.add_argument("--s", type=int, required=True)
    pr.add_argument("--alpha", type=float, default=0.25)
    pr.add_argument("--r", type=int, default=1)
    pr.add_argument("--trials", type=int, default=200)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--delta-threshold", type=float, default=1.0 / 3.0)
    pr.add_argument("--out", default=None, help="JSONL output file (default stdout)")
    pr.set_defaults(func=cmd_ripcheck)

    ps = sub.add_parser("sweep", help="run an experiment sweep from a config file")
    ps.add_argument("config")
    ps.add_argument("--out-dir", default="sweep_out")
    ps.add_argument("--threads", type=int, default=1)
    ps.add_argument("--assert", dest="check", action="store_true",
                    help="turn slope/ordering criteria into the exit status")
    ps.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
