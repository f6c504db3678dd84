"""Estimators and experiment drivers.

Every driver takes an explicit root seed and derives one 32-bit seed per
replica from it, so results are a pure function of the arguments (thread
count included: replicas are independent and aggregated in a fixed order).

Conventions
-----------
density
    Occupied fraction of the lattice.  For long-run estimates from the
    fully occupied start a configuration with a single particle left is
    counted as empty: the lone walker is an artifact of the finite ring
    and carries no density in the infinite-volume limit.
survival
    Fraction of runs started from two adjacent particles that still have at
    least two particles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import adjacent_pair_start, replicate_counts
from .lattice import full_configuration

Z95 = 1.959963984540054


@dataclass
class ExperimentResult:
    name: str
    params: dict
    estimate: float
    stderr: float
    replicas: int
    seed: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.stderr >= 0 or math.isnan(self.stderr)):
            raise ValueError("standard error must be nonnegative")
        if self.replicas < 1:
            raise ValueError("need at least one replica")

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(x):
    """Convert numpy scalars/arrays nested in dicts and lists to builtins."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def _mean_se(x: np.ndarray, axis=0):
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    m = x.mean(axis=axis)
    if n < 2:
        return m, np.full_like(m, np.nan)
    return m, x.std(axis=axis, ddof=1) / np.sqrt(n)


def _active(counts: np.ndarray) -> np.ndarray:
    n = counts[..., 0].astype(float)
    return np.where(n >= 2, n, 0.0)


# --- density -------------------------------------------------------------------

def _density_once(lam, L, t_burn, t_measure, replicas, seed, batches, threads, tag):
    edges = t_burn + t_measure * np.arange(batches + 1) / batches
    _, integ, _ = replicate_counts(full_configuration(L), lam, edges, replicas, seed,
                                   threads, tag=tag)
    per = integ[:, 1:] / (L * (t_measure / batches))  # [R, B] batch averages
    batch_means = per.mean(axis=0)
    est = float(batch_means.mean())
    se = float(batch_means.std(ddof=1) / np.sqrt(batches))
    rep_se = float(per.mean(axis=1).std(ddof=1) / np.sqrt(replicas)) if replicas > 1 else float("nan")
    return est, se, rep_se, batch_means


def estimate_density(lam: float, L: int, t_burn: float, t_measure: float, replicas: int,
                     seed: int, batches: int = 20, threads: int | None = None,
                     finite_size: bool = True) -> ExperimentResult:
    """Time-and-space averaged density over ``[t_burn, t_burn + t_measure]``.

    The standard error comes from ``batches`` consecutive batch means (each
    pooled over replicas).  With ``finite_size`` the estimate is repeated on
    ``L // 2`` sites and a flag is raised when the two differ by more than
    three combined standard errors.
    """
    if t_burn <= 0 or t_measure <= 0:
        raise ValueError("burn-in and measurement windows must be positive")
    if batches < 20:
        raise ValueError("use at least 20 batches")
    est, se, rep_se, bm = _density_once(lam, L, t_burn, t_measure, replicas, seed,
                                        batches, threads, tag=11)
    extra = {"batch_means": bm, "replica_stderr": rep_se}
    if finite_size:
        e2, s2, _, _ = _density_once(lam, L // 2, t_burn, t_measure, replicas, seed,
                                     batches, threads, tag=12)
        extra.update(half_L=L // 2, half_L_estimate=e2, half_L_stderr=s2,
                     finite_size_flag=bool(abs(est - e2) > 3 * math.hypot(se, s2)))
    params = dict(lam=lam, L=L, t_burn=t_burn, t_measure=t_measure, batches=batches)
    return ExperimentResult("density", params, est, se, replicas, seed, _plain(extra))


# --- survival ------------------------------------------------------------------

def _survival_once(lam, L, horizons, replicas, seed, threads, tag):
    counts, _, _ = replicate_counts(adjacent_pair_start(L), lam, horizons, replicas, seed,
                                    threads, tag=tag)
    alive = counts[:, :, 0] >= 2
    p = alive.mean(axis=0)
    return p, np.sqrt(p * (1 - p) / replicas), counts


def estimate_survival(lam: float, horizons, replicas: int, seed: int, L: int = 1000,
                      threads: int | None = None, finite_size: bool = True) -> ExperimentResult:
    """Fraction of two-particle starts still alive, at two (or more) horizons.

    The headline estimate is the one at the largest horizon.  ``converged``
    says whether the last two horizons agree within two standard errors of
    their (paired) difference; finite-horizon values are upper bounds.
    """
    h = np.sort(np.atleast_1d(np.asarray(horizons, dtype=float)))
    if h.size < 2:
        raise ValueError("give at least two horizons")
    if np.any(h <= 0):
        raise ValueError("horizons must be positive")
    p, se, counts = _survival_once(lam, L, h, replicas, seed, threads, tag=21)
    died_between = float(p[-2] - p[-1])
    d_se = math.sqrt(max(died_between * (1 - died_between), 0.0) / replicas)
    extra = {"horizons": h, "psi": p, "psi_stderr": se,
             "converged": bool(died_between <= 2 * d_se)}
    if finite_size:
        p2, se2, _ = _survival_once(lam, L // 2, h, replicas, seed, threads, tag=22)
        extra.update(half_L=L // 2, half_L_psi=p2, half_L_stderr=se2,
                     finite_size_flag=bool(abs(p[-1] - p2[-1]) > 3 * math.hypot(se[-1], se2[-1])))
    params = dict(lam=lam, L=L, horizons=h)
    return ExperimentResult("survival", _plain(params), float(p[-1]), float(se[-1]),
                            replicas, seed, _plain(extra))


# --- critical point scan -----------------------------------------------------------

@dataclass
class ScanResult:
    rows: list
    lambda_c: float | None
    lambda_c_prime: float | None
    status: str
    status_prime: str
    params: dict

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _scan_point(lam, L, horizon, replicas, seed, threads, tag):
    times = np.array([horizon / 2, horizon])
    c_full, _, _ = replicate_counts(full_configuration(L), lam, times, replicas, seed,
                                    threads, tag=tag)
    dens = _active(c_full) / L
    theta, theta_se = _mean_se(dens)
    decay, decay_se = _mean_se(dens[:, 1] - dens[:, 0])
    c_pair, _, _ = replicate_counts(adjacent_pair_start(L), lam, times, replicas, seed,
                                    threads, tag=tag + 1)
    alive = c_pair[:, :, 0] >= 2
    psi = alive.mean(axis=0)
    psi_se = np.sqrt(psi * (1 - psi) / replicas)
    mass = c_pair[:, :, 0].astype(float)
    growth, growth_se = _mean_se(mass[:, 1] - mass[:, 0])
    return {
        "lambda": float(lam),
        "theta": float(theta[1]), "theta_se": float(theta_se[1]),
        "psi": float(psi[1]), "psi_se": float(psi_se[1]),
        "theta_half": float(theta[0]), "psi_half": float(psi[0]),
        "decay": float(decay), "decay_se": float(decay_se),
        "growth": float(growth), "growth_se": float(growth_se),
    }


def _bracket_last(flags, grid):
    """Midpoint after the last True flag; None if no flag or the last point is flagged."""
    idx = [i for i, f in enumerate(flags) if f]
    if not idx or idx[-1] == len(grid) - 1:
        return None
    k = idx[-1]
    return 0.5 * (grid[k] + grid[k + 1])


def _bracket_first(flags, grid):
    """Midpoint before the first True flag; None if none or the first point is flagged."""
    idx = [i for i, f in enumerate(flags) if f]
    if not idx or idx[0] == 0:
        return None
    k = idx[0]
    return 0.5 * (grid[k - 1] + grid[k])


def scan_critical(lambda_grid, L: int, horizon: float, replicas: int, seed: int,
                  threads: int | None = None, eps_factor: float = 2.0) -> ScanResult:
    """Scan a grid of branching rates and bracket both critical points.

    At each grid point the density from the fully occupied start and the
    survival probability from two adjacent particles are recorded at
    ``horizon/2`` and ``horizon``.  Finite-horizon values of either are
    positive on both sides of the transition, so the crossing is located on
    their trend between the two horizons, with threshold
    ``eps = eps_factor * stderr``:

    * density side: the grid point is subcritical while the density still
      drops by more than ``eps`` between the horizons; ``lambda_c`` is the
      midpoint after the last such point;
    * survival side: the grid point is supercritical once the mean mass of
      the two-particle start grows by more than ``eps``; ``lambda_c_prime``
      is the midpoint before the first such point.

    Without a crossing inside the grid the status is ``"unbracketed"``.
    """
    grid = [float(x) for x in lambda_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly ascending")
    rows = [_scan_point(lam, L, horizon, replicas, seed, threads, tag=100 + 2 * k)
            for k, lam in enumerate(grid)]
    decaying = [r["decay"] < -eps_factor * r["decay_se"] for r in rows]
    growing = [r["growth"] > eps_factor * r["growth_se"] for r in rows]
    for r, d, g in zip(rows, decaying, growing):
        r["subcritical_density"] = bool(d)
        r["supercritical_survival"] = bool(g)
    lc = _bracket_last(decaying, grid)
    lcp = _bracket_first(growing, grid)
    params = dict(L=L, horizon=horizon, replicas=replicas, seed=seed, eps_factor=eps_factor)
    return ScanResult(rows, lc, lcp, "bracketed" if lc is not None else "unbracketed",
                      "bracketed" if lcp is not None else "unbracketed", params)


def monotone_violations(values, errors, factor: float = 2.0) -> int:
    """Count grid steps where an estimate drops by more than ``factor`` combined SE."""
    v = np.asarray(values, float)
    e = np.asarray(errors, float)
    drop = v[:-1] - v[1:]
    return int(np.count_nonzero(drop > factor * np.hypot(e[:-1], e[1:])))


# --- log-log fits ------------------------------------------------------------------

@dataclass(frozen=True)
class LogLogFit:
    slope: float
    slope_se: float
    intercept: float
    ci: tuple
    used: int
    dropped: int


def fit_loglog(x, y, se) -> LogLogFit:
    """Weighted least squares of ``log y`` on ``log x``.

    Per-point variances use the delta method, ``var(log y) = (se / y)**2``.
    Points with ``y <= 0`` are dropped with a warning; fewer than three
    usable points is an error.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    se = np.asarray(se, float)
    ok = y > 0
    dropped = int(np.count_nonzero(~ok))
    if dropped:
        warnings.warn(f"dropping {dropped} nonpositive point(s) from the fit", RuntimeWarning)
    x, y, se = x[ok], y[ok], se[ok]
    if x.size < 3:
        raise ValueError("fewer than three usable points")
    if np.any(se <= 0) or np.any(~np.isfinite(se)):
        raise ValueError("standard errors must be finite and positive")
    lx, ly = np.log(x), np.log(y)
    w = (y / se) ** 2
    sw = w.sum()
    mx, my = (w * lx).sum() / sw, (w * ly).sum() / sw
    sxx = (w * (lx - mx) ** 2).sum()
    if sxx <= 0:
        raise ValueError("abscissae must not all coincide")
    slope = float((w * (lx - mx) * (ly - my)).sum() / sxx)
    sse = float(1.0 / math.sqrt(sxx))
    return LogLogFit(slope, sse, float(my - slope * mx),
                     (slope - Z95 * sse, slope + Z95 * sse), int(x.size), dropped)


OBSERVABLES = ("density", "pair_density", "survival")


def decay_series(lam: float, L: int, time_grid, replicas: int, seed: int, observable: str,
                 threads: int | None = None):
    """Per-time estimates and standard errors of one observable."""
    if observable not in OBSERVABLES:
        raise ValueError(f"observable must be one of {OBSERVABLES}")
    t = np.asarray(time_grid, float)
    if observable == "survival":
        counts, _, _ = replicate_counts(adjacent_pair_start(L), lam, t, replicas, seed,
                                        threads, tag=31)
        alive = (counts[:, :, 0] >= 2).astype(float)
        p = alive.mean(axis=0)
        return p, np.sqrt(p * (1 - p) / replicas)
    counts, _, _ = replicate_counts(full_configuration(L), lam, t, replicas, seed,
                                    threads, tag=32)
    col = 0 if observable == "density" else 1
    return _mean_se(counts[:, :, col] / L)


def fit_decay(lam: float, L: int, time_grid, replicas: int, seed: int,
              observable: str = "density", threads: int | None = None,
              bound_mode: bool = False) -> ExperimentResult:
    """Slope of ``log(observable)`` against ``log(t)`` with a 95% interval."""
    if bound_mode and not lam < 0.5:
        raise ValueError("bound comparison needs lambda < 1/2")
    t = np.sort(np.asarray(time_grid, float))
    if t.size < 3 or t[0] <= 0:
        raise ValueError("need at least three positive times")
    if t[-1] / t[0] < 10:
        raise ValueError("time grid must span at least one decade")
    est, se = decay_series(lam, L, t, replicas, seed, observable, threads)
    fit = fit_loglog(t, est, se)
    params = dict(lam=lam, L=L, observable=observable, time_grid=t)
    extra = dict(ci=fit.ci, intercept=fit.intercept, estimates=est, stderr=se,
                 used=fit.used, dropped=fit.dropped)
    return ExperimentResult(f"decay_{observable}", _plain(params), fit.slope, fit.slope_se,
                            replicas, seed, _plain(extra))


# --- density identity --------------------------------------------------------------

def ode_rhs(p11, p111, lam: float):
    """Right-hand side of the density identity: ``(lam - 1) p(11) - lam p(111)``."""
    return (lam - 1.0) * np.asarray(p11) - lam * np.asarray(p111)


@dataclass
class OdeCheck:
    lam: float
    times: np.ndarray
    derivative: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    stderr: np.ndarray
    bias: np.ndarray
    coarse_flag: np.ndarray
    params: dict

    def consistent(self, k: float = 3.0) -> np.ndarray:
        return np.abs(self.residual) < k * self.stderr

    def rows(self) -> list[dict]:
        return [dict(t=float(t), derivative=float(d), rhs=float(r), residual=float(x),
                     stderr=float(s), bias=float(b), coarse=bool(f))
                for t, d, r, x, s, b, f in zip(self.times, self.derivative, self.rhs,
                                                self.residual, self.stderr, self.bias,
                                                self.coarse_flag)]


def check_density_ode(lam: float, L: int, t_grid, replicas: int, seed: int, h: float = 0.1,
                      threads: int | None = None) -> OdeCheck:
    """Compare a central difference of the density with the pattern densities.

    For each grid time ``t`` and replica, ``(p(1)[t+h] - p(1)[t-h]) / 2h``
    minus the right-hand side at ``t`` forms one residual sample; the
    reported standard error is taken across replicas.  The finite-difference
    bias is estimated by Richardson comparison with step ``2h`` and a grid
    time is flagged as too coarse when that bias is both significant and
    larger than the standard error.  ``t = 0`` is evaluated exactly from the
    fully occupied start, where all pattern densities are 1.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    tg = np.asarray(t_grid, float)
    inner = tg[tg > 0]
    if np.any(inner < 2 * h):
        raise ValueError("grid times must be 0 or at least 2h")
    offs = np.array([-2 * h, -h, 0.0, h, 2 * h])
    times = np.unique(np.concatenate([t + offs for t in inner])) if inner.size else np.array([0.0])
    counts, _, _ = replicate_counts(full_configuration(L), lam, times, replicas, seed,
                                    threads, tag=41)
    p = counts / L  # [R, K, 3]

    def at(t):
        return int(np.argmin(np.abs(times - t)))

    out = {k: [] for k in ("d", "r", "x", "s", "b", "f")}
    for t in tg:
        if t == 0:
            r0 = float(ode_rhs(1.0, 1.0, lam))
            for key, val in zip("drxsbf", (r0, r0, 0.0, 0.0, 0.0, False)):
                out[key].append(val)
            continue
        d1 = (p[:, at(t + h), 0] - p[:, at(t - h), 0]) / (2 * h)
        d2 = (p[:, at(t + 2 * h), 0] - p[:, at(t - 2 * h), 0]) / (4 * h)
        rhs = ode_rhs(p[:, at(t), 1], p[:, at(t), 2], lam)
        res_m, res_s = _mean_se(d1 - rhs)
        bias_m, bias_s = _mean_se((d2 - d1) / 3.0)
        out["d"].append(float(d1.mean()))
        out["r"].append(float(rhs.mean()))
        out["x"].append(float(res_m))
        out["s"].append(float(res_s))
        out["b"].append(float(bias_m))
        out["f"].append(bool(abs(bias_m) > max(res_s, 2 * bias_s)))
    a = {k: np.asarray(v) for k, v in out.items()}
    return OdeCheck(lam, tg, a["d"], a["r"], a["x"], a["s"], a["b"], a["f"],
                    dict(L=L, replicas=replicas, seed=seed, h=h))


# --- order parameter exponent ---------------------------------------------------------

def fit_power_law(x, y, se) -> LogLogFit:
    return fit_loglog(x, y, se)


def beta_fit(lambda_grid, lambda_c: float, L: int, horizon: float, replicas: int, seed: int,
             window: tuple | None = None, threads: int | None = None) -> ExperimentResult:
    """Indicative exponent of ``theta`` against ``lambda - lambda_c``.

    Densities come from :func:`estimate_density` with burn-in ``horizon`` and
    a measurement window of ``horizon / 2``.  ``window`` restricts the fit to
    ``lo <= lambda - lambda_c <= hi``; the sensitivity to dropping the
    smallest or largest grid point is reported in ``extra``.
    """
    grid = np.asarray(lambda_grid, float)
    if np.any(grid <= lambda_c):
        raise ValueError("grid must lie strictly above the critical estimate")
    th, se = [], []
    for k, lam in enumerate(grid):
        r = estimate_density(float(lam), L, horizon, horizon / 2, replicas, seed + k,
                             threads=threads, finite_size=False)
        th.append(r.estimate)
        se.append(max(r.stderr, 1e-12))
    x = grid - lambda_c
    th, se = np.asarray(th), np.asarray(se)
    sel = np.ones(x.size, bool)
    if window is not None:
        sel = (x >= window[0]) & (x <= window[1])
    fit = fit_loglog(x[sel], th[sel], se[sel])
    sens = {}
    xs, ts, ss = x[sel], th[sel], se[sel]
    if xs.size >= 4:
        sens["drop_first"] = fit_loglog(xs[1:], ts[1:], ss[1:]).slope
        sens["drop_last"] = fit_loglog(xs[:-1], ts[:-1], ss[:-1]).slope
    extra = dict(theta=th, theta_se=se, ci=fit.ci, sensitivity=sens, binding=False)
    params = dict(lambda_grid=grid, lambda_c=lambda_c, L=L, horizon=horizon, window=window)
    return ExperimentResult("beta", _plain(params), fit.slope, fit.slope_se, replicas, seed,
                            _plain(extra))
