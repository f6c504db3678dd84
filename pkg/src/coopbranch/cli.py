"""Command-line interface.

Usage: ``coopbranch <command> [options]``.  Every option can also come from a
flat config file (``--config FILE``) with ``key = value`` lines and ``#``
comments; keys are option names with dashes or underscores.  Flags given on
the command line override file values.  The seed falls back to the
``COOPBRANCH_SEED`` environment variable, then to 0.

Each run writes ``<out>.csv`` (a ``#`` schema line, a header row, then
RFC-4180 rows) and ``<out>.json`` (parameters, estimates, version).  Both are
pure functions of the configuration and seed.  Wall-clock time goes to a
separate ``<out>.timing.json`` so the main outputs stay byte-identical.
If a run fails midway the outputs written so far get a ``.partial`` suffix.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._pool import resolve_seed

CSV_SCHEMA = "coopbranch-csv/1"
JSON_SCHEMA = "coopbranch-summary/1"


class UsageError(Exception):
    pass


# --- option table -------------------------------------------------------------

def _nonneg(x):
    v = float(x)
    if not v >= 0:
        raise ValueError("must be nonnegative")
    return v


def _pos(x):
    v = float(x)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _posint(x):
    v = int(x)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _prob(x):
    v = float(x)
    if not 0 <= v <= 1:
        raise ValueError("must lie in [0, 1]")
    return v


def _floats(x):
    if isinstance(x, (list, tuple)):
        return [float(v) for v in x]
    vals = [float(v) for v in str(x).replace(" ", "").split(",") if v]
    if not vals:
        raise ValueError("empty list")
    return vals


def _ints(x):
    if isinstance(x, (list, tuple)):
        return [int(v) for v in x]
    return [int(v) for v in str(x).replace(" ", "").split(",") if v]


def _grid(x):
    """``a:b:step`` (inclusive) or a comma list."""
    s = str(x)
    if ":" in s:
        a, b, st = (float(v) for v in s.split(":"))
        if st <= 0 or b < a:
            raise ValueError("bad grid")
        n = int(math.floor((b - a) / st + 1e-9)) + 1
        return [round(a + k * st, 12) for k in range(n)]
    return _floats(s)


def _loggrid(x):
    """``a:b:n`` (n log-spaced points) or a comma list."""
    s = str(x)
    if ":" in s:
        a, b, n = s.split(":")
        return [float(v) for v in np.geomspace(float(a), float(b), int(n))]
    return _floats(s)


def _choice(*opts):
    def f(x):
        if str(x) not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return str(x)
    return f


COMMON = {
    "seed": (int, None, "root seed (default: $COOPBRANCH_SEED or 0)"),
    "threads": (_posint, None, "worker threads (default: all cores)"),
    "out": (str, None, "output prefix (default: coopbranch-<command>)"),
}

COMMANDS = {
    "simulate": ("direct simulation; counts per sample time and an optional diagram", {
        "lambda": (_nonneg, 7 / 3, "branching rate"),
        "sites": (_posint, 700, "lattice size"),
        "horizon": (_pos, 500.0, "final time"),
        "samples": (_posint, 500, "number of uniformly spaced samples after t=0"),
        "init": (_choice("full", "pair"), "full", "initial state"),
        "diagram": (str, "", "diagram path (.pbm, .svg or .png)"),
    }),
    "diagram": ("space-time diagram from the fully occupied state", {
        "lambda": (_nonneg, 7 / 3, "branching rate"),
        "sites": (_posint, 700, "lattice size"),
        "horizon": (_pos, 500.0, "final time"),
        "samples": (_posint, 500, "rows after the initial one"),
        "svg": (_choice("yes", "no"), "no", "also write an SVG next to the PBM"),
        "png": (_choice("yes", "no"), "no", "also write a PNG (needs matplotlib)"),
    }),
    "scan": ("density and survival over a grid of branching rates", {
        "grid": (_grid, "2.0:3.0:0.1", "a:b:step or comma list"),
        "sites": (_posint, 500, "lattice size"),
        "horizon": (_pos, 2000.0, "horizon"),
        "replicas": (_posint, 200, "replicas per grid point"),
    }),
    "survival": ("survival probability from two adjacent particles", {
        "lambda": (_nonneg, 4.0, "branching rate"),
        "horizons": (_floats, "500,1000", "comma list of horizons"),
        "sites": (_posint, 1000, "lattice size"),
        "replicas": (_posint, 400, "replicas"),
    }),
    "density": ("long-run density after burn-in", {
        "lambda": (_nonneg, 4.0, "branching rate"),
        "sites": (_posint, 1000, "lattice size"),
        "burn": (_pos, 5000.0, "burn-in time"),
        "measure": (_pos, 1000.0, "measurement window"),
        "replicas": (_posint, 20, "replicas"),
    }),
    "decay": ("power-law decay fit of density, pair density or survival", {
        "lambda": (_nonneg, 0.4, "branching rate"),
        "sites": (_posint, 2000, "lattice size"),
        "times": (_loggrid, "50:500:7", "a:b:n log grid or comma list"),
        "replicas": (_posint, 200, "replicas"),
        "observable": (_choice("density", "pair_density", "survival"), "density", "observable"),
    }),
    "meeting": ("meeting times of coalescing walkers", {
        "walkers": (_choice("2", "3"), "3", "number of walkers"),
        "starts": (_ints, "", "start positions (default 0,1 or 0,1,2)"),
        "replicas": (_posint, 100000, "replicas"),
        "cap": (_pos, None, "censoring cap (default 1e6 for two walkers, 1e4 for three)"),
        "times": (_floats, "1,10,100", "times for survival probabilities"),
    }),
    "dual": ("superdual monotonicity and dual 3-path counts", {
        "lambda": (_nonneg, 0.25, "branching rate"),
        "sites": (_posint, 30, "lattice size"),
        "horizon": (_pos, 10.0, "horizon"),
        "replicas": (_posint, 200, "realizations"),
        "cap": (_posint, 10 ** 6, "state cap"),
    }),
    "couple-check": ("pathwise coupling suites", {
        "lambda": (_nonneg, 1.0, "branching rate"),
        "lambda-prime": (_nonneg, 2.0, "larger branching rate"),
        "p": (_prob, 0.6, "percolation parameter"),
        "p-prime": (_prob, 0.7, "larger percolation parameter"),
        "sites": (_posint, 200, "lattice size"),
        "horizon": (_pos, 50.0, "horizon"),
        "replicas": (_posint, 100, "realizations per suite"),
    }),
    "ode-check": ("finite-difference check of the density identity", {
        "lambda": (_nonneg, 1.0, "branching rate"),
        "sites": (_posint, 1000, "lattice size"),
        "times": (_floats, "1,2,4,8,16", "grid times"),
        "replicas": (_posint, 400, "replicas"),
        "step": (_pos, 0.1, "finite-difference step"),
    }),
}


def _dest(name: str) -> str:
    return name.replace("-", "_")


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[_dest(key)]

    def to_text(self) -> str:
        lines = [f"# coopbranch {self.command}"]
        for k in sorted(self.values):
            v = self.values[k]
            if v is None:
                continue
            if isinstance(v, (list, tuple)):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, str(path))


def parse_config_text(text: str, path: str = "<config>") -> dict:
    """Raw ``key -> string`` mapping from ``key = value`` lines."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        k, v = (x.strip() for x in s.split("=", 1))
        out[_dest(k)] = v
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopbranch", description="Cooperative branching-coalescent toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (helptext, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext, description=helptext)
        sp.add_argument("--config", default=None, help="config file with key = value lines")
        for key, (_, default, h) in {**opts, **COMMON}.items():
            flag = "--" + key
            # raw strings; conversion happens after merging with the config file
            sp.add_argument(flag, dest=_dest(key), default=None, metavar=key.upper().replace("-", "_"),
                            help=f"{h} [default: {default}]" if default not in (None, "") else h)
    return p


def config_from_text(command: str, text: str) -> RunConfig:
    """Inverse of :meth:`RunConfig.to_text`."""
    import os
    import tempfile
    fd, name = tempfile.mkstemp(suffix=".conf")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        return parse_config([command, "--config", name])
    finally:
        os.unlink(name)


def parse_config(argv=None) -> RunConfig:
    """Merge defaults, config file and flags into a validated :class:`RunConfig`."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            raise UsageError("invalid arguments") from None
        raise
    cmd = ns.command
    opts = {**COMMANDS[cmd][1], **COMMON}
    known = {_dest(k): v for k, v in opts.items()}
    raw = {k: opt[1] for k, opt in known.items()}
    if ns.config:
        filevals = read_config_file(ns.config)
        unknown = sorted(set(filevals) - set(known))
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        raw.update(filevals)
    for k in known:
        v = getattr(ns, k)
        if v is not None:
            raw[k] = v
    values = {}
    for k, (conv, default, _) in known.items():
        v = raw[k]
        if v is None or (v == "" and default == ""):
            values[k] = None if v is None else ""
            continue
        try:
            values[k] = conv(v)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"--{k.replace('_', '-')}: {exc}") from None
    values["seed"] = resolve_seed(values.get("seed"))
    return RunConfig(cmd, values)


# --- outputs ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def csv_text(command: str, header: list, rows: list) -> str:
    buf = io.StringIO(newline="")
    buf.write(f"# schema={CSV_SCHEMA} command={command}\r\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r.get(h)) for h in header])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def git_describe() -> str:
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                           cwd=Path(__file__).resolve().parent, capture_output=True,
                           text=True, timeout=5)
        if r.returncode == 0 and r.stdout.strip():
            return r.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def json_text(cfg: RunConfig, results: dict) -> str:
    doc = {
        "schema": JSON_SCHEMA,
        "command": cfg.command,
        "config": cfg.values,
        "results": results,
        "version": __version__,
        "git_describe": git_describe(),
    }
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


@dataclass
class Output:
    header: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


# --- commands -------------------------------------------------------------------

def _cmd_simulate(cfg: RunConfig, out: Output, prefix: Path):
    from .dynamics import adjacent_pair_start, simulate_direct
    from .lattice import full_configuration
    from .diagram import render_diagram
    L, lam, T, n = cfg["sites"], cfg["lambda"], cfg["horizon"], cfg["samples"]
    c0 = full_configuration(L) if cfg.values.get("init", "full") == "full" else adjacent_pair_start(L)
    times = T * np.arange(n + 1) / n
    want_diagram = cfg.command == "diagram" or bool(cfg.values.get("diagram"))
    traj = simulate_direct(c0, lam, times, cfg["seed"], snapshots=want_diagram)
    out.header = ["time", "particles", "pairs", "triples", "density"]
    for t, (a, b, c) in zip(times, traj.counts):
        out.rows.append(dict(time=float(t), particles=int(a), pairs=int(b), triples=int(c),
                             density=a / L))
    out.results = dict(final_density=float(traj.counts[-1, 0] / L),
                       absorb_time=traj.absorb_time, events=traj.n_events)
    paths = []
    if cfg.command == "diagram":
        paths.append(prefix.with_suffix(".pbm"))
        if cfg["svg"] == "yes":
            paths.append(prefix.with_suffix(".svg"))
        if cfg["png"] == "yes":
            paths.append(prefix.with_suffix(".png"))
    elif cfg.values.get("diagram"):
        paths.append(Path(cfg["diagram"]))
    for p in paths:
        render_diagram(traj, p)
        out.files.append(str(p))


def _cmd_scan(cfg, out, prefix):
    from .experiments import monotone_violations, scan_critical
    res = scan_critical(cfg["grid"], cfg["sites"], cfg["horizon"], cfg["replicas"],
                        cfg["seed"], cfg["threads"])
    out.header = ["lambda", "theta", "theta_se", "psi", "psi_se", "theta_half", "psi_half",
                  "decay", "decay_se", "growth", "growth_se",
                  "subcritical_density", "supercritical_survival"]
    out.rows = res.rows
    th = [r["theta"] for r in res.rows]
    out.results = dict(
        lambda_c=res.lambda_c, lambda_c_prime=res.lambda_c_prime,
        status=res.status, status_prime=res.status_prime,
        theta_monotone_violations=monotone_violations(th, [r["theta_se"] for r in res.rows]),
        psi_monotone_violations=monotone_violations([r["psi"] for r in res.rows],
                                                    [r["psi_se"] for r in res.rows]))


def _cmd_survival(cfg, out, prefix):
    from .experiments import estimate_survival
    r = estimate_survival(cfg["lambda"], cfg["horizons"], cfg["replicas"], cfg["seed"],
                          L=cfg["sites"], threads=cfg["threads"])
    out.header = ["horizon", "psi", "psi_se", "half_L_psi", "half_L_se"]
    for k, h in enumerate(r.extra["horizons"]):
        out.rows.append(dict(horizon=h, psi=r.extra["psi"][k], psi_se=r.extra["psi_stderr"][k],
                             half_L_psi=r.extra["half_L_psi"][k],
                             half_L_se=r.extra["half_L_stderr"][k]))
    out.results = r.to_dict()


def _cmd_density(cfg, out, prefix):
    from .experiments import estimate_density
    r = estimate_density(cfg["lambda"], cfg["sites"], cfg["burn"], cfg["measure"],
                         cfg["replicas"], cfg["seed"], threads=cfg["threads"])
    out.header = ["batch", "mean_density"]
    out.rows = [dict(batch=k, mean_density=v) for k, v in enumerate(r.extra["batch_means"])]
    out.results = r.to_dict()


def _cmd_decay(cfg, out, prefix):
    from .experiments import fit_decay
    r = fit_decay(cfg["lambda"], cfg["sites"], cfg["times"], cfg["replicas"], cfg["seed"],
                  cfg["observable"], cfg["threads"])
    out.header = ["time", "estimate", "stderr"]
    out.rows = [dict(time=t, estimate=e, stderr=s) for t, e, s in
                zip(r.params["time_grid"], r.extra["estimates"], r.extra["stderr"])]
    out.results = r.to_dict()


def _cmd_meeting(cfg, out, prefix):
    from .walks import meeting_times, mean_meeting_exact, tau2_survival_exact, tau3_survival_exact
    k = int(cfg["walkers"])
    starts = cfg["starts"] or list(range(k))
    if len(starts) != k:
        raise UsageError("--starts must list one position per walker")
    cap = cfg["cap"] or None
    b = meeting_times(starts, cfg["replicas"], cfg["seed"], cap=cap, threads=cfg["threads"])
    mean, se = b.mean_truncated()
    times = [t for t in cfg["times"] if t <= b.cap]
    p, pse = b.survival(times)
    consecutive = list(starts) == list(range(starts[0], starts[0] + k))
    exact = None
    if consecutive:
        exact = tau2_survival_exact(np.array(times)) if k == 2 else tau3_survival_exact(np.array(times))
    out.header = ["time", "survival", "stderr", "exact"]
    for j, t in enumerate(times):
        out.rows.append(dict(time=t, survival=p[j], stderr=pse[j],
                             exact=None if exact is None else float(exact[j])))
    out.results = dict(starts=starts, cap=b.cap, mean_truncated=mean, mean_stderr=se,
                       censored=b.censored, replicas=cfg["replicas"],
                       mean_exact=mean_meeting_exact(*starts) if k == 3 else None)


def _cmd_dual(cfg, out, prefix):
    from ._pool import replica_seeds
    from .dual import count_3paths, renewal_expectations, superdual_pathwise_check, unit_pairs
    from .graphical import generate
    L, lam, T = cfg["sites"], cfg["lambda"], cfg["horizon"]
    seeds = replica_seeds(cfg["seed"], cfg["replicas"], tag=51)
    viol = lemma = 0
    counts = []
    nmax = 0
    bins: dict = {}
    for r, s in enumerate(seeds):
        rep = generate(L, lam, T, int(s))
        occ = np.random.default_rng(int(s)).integers(0, 2, L).astype(np.uint8)
        chk = superdual_pathwise_check(rep, occ, unit_pairs(L), cfg["cap"])
        viol += chk.violations
        lemma += int(chk.top == 1 and chk.bottom == 0)
        n3 = count_3paths(rep, T, T, cfg["cap"], anchor=L // 2)
        counts.append(n3.total)
        for k, m in n3.by_renewals.items():
            bins[k] = bins.get(k, 0) + m
            nmax = max(nmax, k)
        out.rows.append(dict(replica=r, seed=int(s), violations=chk.violations,
                             top=chk.top, bottom=chk.bottom, largest=chk.largest,
                             paths=n3.total))
    out.header = ["replica", "seed", "violations", "top", "bottom", "largest", "paths"]
    R = len(seeds)
    expect = renewal_expectations(lam, T, max(nmax, 2))
    out.results = dict(violations=viol, anchor_violations=lemma,
                       mean_paths=float(np.mean(counts)),
                       mean_paths_stderr=float(np.std(counts, ddof=1) / np.sqrt(R)) if R > 1 else None,
                       by_renewals={str(k): v / R for k, v in sorted(bins.items())},
                       expected_by_renewals=[float(x) for x in expect])


def _cmd_couple(cfg, out, prefix):
    from ._pool import replica_seeds
    from .comparisons import contact_inclusion_violations, op_monotone_violations
    from .dynamics import replay_many
    from .graphical import augment, generate
    L, T, R = cfg["sites"], cfg["horizon"], cfg["replicas"]
    lam, lam2 = cfg["lambda"], cfg["lambda_prime"]
    if lam2 < lam:
        raise UsageError("--lambda-prime must be at least --lambda")
    if cfg["p_prime"] < cfg["p"]:
        raise UsageError("--p-prime must be at least --p")
    seeds = replica_seeds(cfg["seed"], R, tag=61)
    tot = dict(monotone=0, subadditive=0, contact_dd=0, op_monotone=0)
    times = np.linspace(0, T, 51)[1:]
    for s in seeds:
        s = int(s)
        rng = np.random.default_rng(s)
        rep = generate(L, lam, T, s)
        rep2 = augment(rep, lam2)
        a = (rng.random(L) < 0.3).astype(np.uint8)
        b = (rng.random(L) < 0.3).astype(np.uint8)
        big = a | (rng.random(L) < 0.3).astype(np.uint8)
        x = replay_many(a, rep, times)[:, 0]
        y = replay_many(big, rep2, times)[:, 0]
        tot["monotone"] += int(np.count_nonzero((x > y).any(axis=1)))
        st = replay_many(np.stack([a, b, a | b]), rep, times)
        tot["subadditive"] += int(np.count_nonzero(((st[:, 0] | st[:, 1]) > st[:, 2]).any(axis=1)))
        tot["contact_dd"] += contact_inclusion_violations(rep, np.ones(L, np.uint8))
        w0 = np.arange(-L // 2, L // 2, 2)
        tot["op_monotone"] += op_monotone_violations(w0, cfg["p"], cfg["p_prime"], int(T), s)
    out.header = ["suite", "replicas", "violations"]
    out.rows = [dict(suite=k, replicas=R, violations=v) for k, v in tot.items()]
    out.results = dict(violations=tot, all_clear=not any(tot.values()))


def _cmd_ode(cfg, out, prefix):
    from .experiments import check_density_ode
    o = check_density_ode(cfg["lambda"], cfg["sites"], cfg["times"], cfg["replicas"],
                          cfg["seed"], h=cfg["step"], threads=cfg["threads"])
    out.header = ["t", "derivative", "rhs", "residual", "stderr", "bias", "coarse"]
    out.rows = o.rows()
    out.results = dict(consistent=[bool(v) for v in o.consistent()],
                       coarse=[bool(v) for v in o.coarse_flag])


HANDLERS = {
    "simulate": _cmd_simulate, "diagram": _cmd_simulate, "scan": _cmd_scan,
    "survival": _cmd_survival, "density": _cmd_density, "decay": _cmd_decay,
    "meeting": _cmd_meeting, "dual": _cmd_dual, "couple-check": _cmd_couple,
    "ode-check": _cmd_ode,
}


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run(cfg: RunConfig) -> int:
    """Execute a parsed configuration; returns the process exit code."""
    prefix = Path(cfg.values.get("out") or f"coopbranch-{cfg.command}")
    out = Output()
    t0 = time.perf_counter()
    failure = None
    try:
        HANDLERS[cfg.command](cfg, out, prefix)
    except UsageError:
        raise
    except Exception as exc:  # runtime failure: keep whatever was produced
        failure = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0
    suffix = ".partial" if failure else ""
    if failure:
        out.results = dict(out.results, error=failure)
    csv_path = Path(str(prefix) + ".csv" + suffix)
    json_path = Path(str(prefix) + ".json" + suffix)
    try:
        if out.header or failure:
            _write(csv_path, csv_text(cfg.command, out.header, out.rows))
        _write(json_path, json_text(cfg, dict(out.results, files=out.files)))
        _write(Path(str(prefix) + ".timing.json"),
               json.dumps({"wall_seconds": wall}, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"coopbranch: cannot write outputs: {exc}", file=sys.stderr)
        return 1
    if failure:
        print(f"coopbranch: {failure}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except UsageError as exc:
        print(f"coopbranch: usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
