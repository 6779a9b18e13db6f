"""End-to-end experiment harness: draw an ensemble, a signal, and noise;
quantize; decode; record errors; sweep the measurement count and fit
log-log error slopes; compare Sigma-Delta against memoryless scalar
quantization on the same sweep.

Every cell is keyed by (scheme, r, m, trial) and seeded from the master
seed and that key only, so results are independent of execution order and
thread count.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache, partial
from math import floor, sqrt

import numpy as np

from circsd.errors import InputError
from circsd.decode import (
    DecodeProblem,
    decode_l1,
    decode_sd,
    shaped_residuals,
    sobolev_dual_decode,
    two_stage_decode,
)
from circsd.operators import MeasurementEnsemble, build_difference_system, measure, sample_omega
from circsd.quantize import Alphabet, msq, sigma_delta

SCHEMES = ("sd", "msq", "unquantized")
DECODERS = ("eq_opt", "two_stage", "sobolev_oracle", "msq_l1")
SIGNAL_MODELS = ("exact_sparse", "compressible")
XI_DISTS = ("gaussian", "rademacher")

RECORD_FIELDS = ("scheme", "r", "m", "ell", "trial", "seed", "err_l2", "rel_err",
                 "sigma_s_over_sqrt_s", "iters", "stable", "converged", "wall_ms")
SUMMARY_FIELDS = ("scheme", "r", "m", "median_err", "q25", "q75", "n_ok")
SLOPE_FIELDS = ("scheme", "r", "slope", "intercept", "r2")


@dataclass(frozen=True)
class ExperimentConfig:
    N: int
    s: int
    m_list: tuple
    r_list: tuple
    levels: int = 4
    step: float = 0.25
    one_bit: bool = False
    noise_level: float = 0.0      # half-width of the uniform noise draw
    noise_bound: float = 0.0      # sup-norm bound the decoder is told about
    alpha: float = 0.25
    trials: int = 10
    decoder: str = "eq_opt"
    xi_dist: str = "gaussian"
    signal_model: str = "exact_sparse"
    signal_p: float = 0.5
    mu: float = 0.6
    seed: int = 0
    solver_tol: float = 1e-3
    solver_max_iters: int = 30_000

    def __post_init__(self):
        m_list = tuple(int(m) for m in self.m_list)
        r_list = tuple(int(r) for r in self.r_list)
        object.__setattr__(self, "m_list", m_list)
        object.__setattr__(self, "r_list", r_list)
        if not m_list or any(b <= a for a, b in zip(m_list, m_list[1:])):
            raise InputError("m_list must be non-empty and strictly increasing")
        if max(m_list) > self.N:
            raise InputError(f"largest m={max(m_list)} exceeds N={self.N}")
        if not r_list or min(r_list) < 1:
            raise InputError("r_list must contain orders >= 1")
        if not 0 <= self.alpha < 0.5:
            raise InputError(f"alpha must lie in [0, 1/2), got {self.alpha}")
        if not 0 < self.mu < 1:
            raise InputError(f"mu must lie in (0, 1), got {self.mu}")
        if self.noise_bound >= 1 - self.mu:
            raise InputError(
                f"noise bound {self.noise_bound} must stay below 1 - mu = {1 - self.mu}")
        if self.noise_level < 0 or self.noise_bound < 0:
            raise InputError("noise levels must be nonnegative")
        if self.decoder not in DECODERS:
            raise InputError(f"unknown decoder {self.decoder!r}")
        if self.signal_model not in SIGNAL_MODELS:
            raise InputError(f"unknown signal model {self.signal_model!r}")
        if self.xi_dist not in XI_DISTS:
            raise InputError(f"unknown generator distribution {self.xi_dist!r}")
        if not 0 <= self.s <= self.N:
            raise InputError(f"need 0 <= s <= N, got s={self.s}")
        if self.trials < 1:
            raise InputError(f"trials must be >= 1, got {self.trials}")

    @property
    def alphabet(self):
        return Alphabet.one_bit() if self.one_bit else Alphabet(self.levels, self.step)

    def ell(self, m):
        raw = m * (max(self.s, 1) / m) ** self.alpha
        return int(min(max(floor(raw + 0.5), 1), m))


@dataclass(frozen=True)
class ExperimentRecord:
    scheme: str
    r: int
    m: int
    ell: int
    trial: int
    seed: int
    err_l2: float
    rel_err: float
    sigma_s_over_sqrt_s: float
    iters: int
    stable: bool
    converged: bool
    wall_ms: float


def generate_signal(cfg, ens, rng):
    """Draw a signal per the configured model and rescale it so the sup
    norm of its measurements equals mu (when nonzero)."""
    x = np.zeros(cfg.N)
    if cfg.s == 0:
        return x
    if cfg.signal_model == "exact_sparse":
        support = rng.choice(cfg.N, size=cfg.s, replace=False)
        x[support] = rng.standard_normal(cfg.s)
    else:
        mags = (np.arange(1, cfg.N + 1)) ** (-1.0 / cfg.signal_p)
        signs = rng.choice([-1.0, 1.0], size=cfg.N)
        x = (mags * signs)[rng.permutation(cfg.N)]
    peak = np.abs(measure(ens, x)).max()
    if peak > 0:
        x *= cfg.mu / peak
    return x


def _draw_xi(cfg, rng):
    if cfg.xi_dist == "gaussian":
        return rng.standard_normal(cfg.N)
    return rng.choice([-1.0, 1.0], size=cfg.N)


@lru_cache(maxsize=32)
def _diff_system(r, m):
    return build_difference_system(r, m)


def _cell_seed_seq(cfg, scheme, r, m, trial):
    return np.random.SeedSequence([cfg.seed, SCHEMES.index(scheme), r, m, trial])


def run_cell(cfg, scheme, r, m, trial):
    """One (scheme, order, measurement-count, trial) cell; fully determined
    by the master seed and the cell key."""
    if scheme not in SCHEMES:
        raise InputError(f"unknown scheme {scheme!r}")
    ss = _cell_seed_seq(cfg, scheme, r, m, trial)
    seed_id = int(ss.generate_state(1)[0])
    rng = np.random.default_rng(ss)
    t0 = time.perf_counter()

    xi = _draw_xi(cfg, rng)
    omega = sample_omega(cfg.N, m, rng)
    ens = MeasurementEnsemble(N=cfg.N, m=m, xi=xi, omega=omega)
    x = generate_signal(cfg, ens, rng)
    e = rng.uniform(-cfg.noise_level, cfg.noise_level, size=m) if cfg.noise_level > 0 \
        else np.zeros(m)
    y = measure(ens, x) + e

    a = cfg.alphabet
    gamma_r = a.step / 2
    diff = _diff_system(r, m)
    iters, converged = 0, True

    if scheme == "sd":
        run = sigma_delta(y, r, a)
        q, stable = run.q, run.stable
        if cfg.decoder == "eq_opt":
            prob = DecodeProblem(ens=ens, diff=diff, q=q, gamma_r=gamma_r,
                                 eps=cfg.noise_bound, tol_obj=cfg.solver_tol,
                                 max_iters=cfg.solver_max_iters)
            res1, res2 = shaped_residuals(prob, x, e)
            stable = stable and res1 <= 1e-9 * sqrt(m) and res2 <= 1e-9 * sqrt(m)
            out = decode_sd(prob)
            xhat, iters, converged = out.xhat, out.iterations, out.converged
        elif cfg.decoder == "two_stage":
            xhat = two_stage_decode(ens, diff, q, cfg.s, gamma_r, cfg.noise_bound,
                                    tol_obj=cfg.solver_tol, max_iters=cfg.solver_max_iters)
        elif cfg.decoder == "sobolev_oracle":
            support = np.flatnonzero(x) + 1
            xhat = sobolev_dual_decode(ens, diff, q, support)
        else:  # msq_l1 decoding of sigma-delta output: plain residual ball
            out = decode_l1(ens, q, sqrt(m) * (gamma_r + cfg.noise_bound),
                            tol_obj=cfg.solver_tol, max_iters=cfg.solver_max_iters)
            xhat, iters, converged = out.xhat, out.iterations, out.converged
    elif scheme == "msq":
        q = msq(y, a)
        stable = bool(np.abs(y - q).max() <= a.step / 2 + 1e-12)
        out = decode_l1(ens, q, sqrt(m) * (a.step / 2 + cfg.noise_bound),
                        tol_obj=cfg.solver_tol, max_iters=cfg.solver_max_iters)
        xhat, iters, converged = out.xhat, out.iterations, out.converged
    else:  # unquantized sanity pass-through: q = y, vanishing radius
        stable = True
        prob = DecodeProblem(ens=ens, diff=diff, q=y, gamma_r=1e-9,
                             eps=cfg.noise_bound if cfg.noise_bound > 0 else 0.0,
                             tol_obj=cfg.solver_tol, max_iters=cfg.solver_max_iters)
        out = decode_sd(prob)
        xhat, iters, converged = out.xhat, out.iterations, out.converged

    err = float(np.linalg.norm(xhat - x))
    nx = float(np.linalg.norm(x))
    sigma_s = _best_s_term_residual(x, cfg.s)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return ExperimentRecord(
        scheme=scheme, r=r, m=m, ell=cfg.ell(m), trial=trial, seed=seed_id,
        err_l2=err, rel_err=err / nx if nx > 0 else err,
        sigma_s_over_sqrt_s=sigma_s / sqrt(max(cfg.s, 1)),
        iters=iters, stable=stable, converged=converged, wall_ms=wall_ms)


def _best_s_term_residual(x, s):
    if s >= x.size:
        return 0.0
    mags = np.sort(np.abs(x))[::-1]
    return float(mags[s:].sum())


def _run_keyed(cfg, key):
    return run_cell(cfg, *key)


def cell_keys(cfg, schemes):
    keys = []
    for scheme, r in schemes:
        for m in cfg.m_list:
            for trial in range(cfg.trials):
                keys.append((scheme, r, m, trial))
    return keys


def run_cells(cfg, schemes, threads=1):
    """Run all cells for the given (scheme, r) pairs; deterministic order."""
    keys = cell_keys(cfg, schemes)
    if threads <= 1:
        return [run_cell(cfg, *k) for k in keys]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(partial(_run_keyed, cfg), keys, chunksize=4))


def default_schemes(cfg, include_msq=True):
    schemes = [("sd", r) for r in cfg.r_list]
    if include_msq:
        schemes.append(("msq", max(cfg.r_list)))
    return schemes


def summarize(records):
    """Per-(scheme, r, m) medians and quartiles over cells that passed the
    stability/feasibility preflight and converged."""
    rows = []
    groups = {}
    for rec in records:
        groups.setdefault((rec.scheme, rec.r, rec.m), []).append(rec)
    for (scheme, r, m) in sorted(groups):
        cells = groups[(scheme, r, m)]
        ok = [c.err_l2 for c in cells if c.stable and c.converged and np.isfinite(c.err_l2)]
        if ok:
            med, q25, q75 = (float(np.percentile(ok, p)) for p in (50, 25, 75))
        else:
            med = q25 = q75 = float("nan")
        rows.append({"scheme": scheme, "r": r, "m": m, "median_err": med,
                     "q25": q25, "q75": q75, "n_ok": len(ok)})
    return rows


def fit_loglog_slope(ms, errs):
    """Least-squares slope/intercept of log(err) against log(m), plus R^2."""
    ms = np.asarray(ms, dtype=float)
    errs = np.asarray(errs, dtype=float)
    mask = np.isfinite(errs) & (errs > 0)
    if mask.sum() < 2:
        raise InputError("need at least 2 finite positive cells for a slope fit")
    lx, ly = np.log(ms[mask]), np.log(errs[mask])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_slopes(summary):
    rows = []
    groups = {}
    for row in summary:
        groups.setdefault((row["scheme"], row["r"]), []).append(row)
    for (scheme, r) in sorted(groups):
        cells = sorted(groups[(scheme, r)], key=lambda c: c["m"])
        slope, intercept, r2 = fit_loglog_slope(
            [c["m"] for c in cells], [c["median_err"] for c in cells])
        rows.append({"scheme": scheme, "r": r, "slope": slope,
                     "intercept": intercept, "r2": r2})
    return rows


@dataclass(frozen=True)
class SweepResult:
    records: list
    summary: list
    slopes: list


def sweep_and_fit(cfg, threads=1, records=None, include_msq=True):
    if len(cfg.m_list) < 4 or cfg.m_list[-1] < 8 * cfg.m_list[0]:
        raise InputError("m_list must have >= 4 values spanning at least an 8x ratio")
    if records is None:
        records = run_cells(cfg, default_schemes(cfg, include_msq), threads=threads)
    summary = summarize(records)
    slopes = fit_slopes(summary)
    return SweepResult(records=records, summary=summary, slopes=slopes)


def compare_msq_floor(records):
    """Side-by-side MSQ vs Sigma-Delta medians per m; reports the ordering
    at the largest m and whether the error ratio shrinks along the sweep."""
    summary = summarize(records)
    msq_rows = {row["m"]: row for row in summary if row["scheme"] == "msq"}
    sd_rows = {}
    for row in summary:
        if row["scheme"] == "sd":
            cur = sd_rows.get(row["m"])
            if cur is None or row["r"] > cur["r"]:
                sd_rows[row["m"]] = row
    ms = sorted(set(msq_rows) & set(sd_rows))
    table = [{"m": m,
              "sd_r": sd_rows[m]["r"],
              "sd_median": sd_rows[m]["median_err"],
              "msq_median": msq_rows[m]["median_err"],
              "ratio": sd_rows[m]["median_err"] / msq_rows[m]["median_err"]}
             for m in ms]
    ordering_ok = bool(table) and table[-1]["sd_median"] < table[-1]["msq_median"]
    ratios = [row["ratio"] for row in table]
    ratio_monotone = all(b < a for a, b in zip(ratios, ratios[1:]))
    return {"table": table, "ordering_ok": ordering_ok, "ratio_monotone": ratio_monotone}


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in fieldnames])


def write_records_csv(records, path):
    _write_csv(path, RECORD_FIELDS, [vars(r) for r in records])


def write_summary_csv(summary, path):
    _write_csv(path, SUMMARY_FIELDS, summary)


def write_slopes_csv(slopes, path):
    _write_csv(path, SLOPE_FIELDS, slopes)
