"""Command-line experiment runner.

Every command reads an optional INI config (``--config``), applies
``--set section.key=value`` overrides, and writes CSV/JSON into ``--out``.
Each output carries the digest of the resolved configuration, so two runs
with the same digest produce byte-identical files.

Exit status: 0 success, 1 a check command found a violation,
2 invalid configuration, 3 parameters outside the regime of the requested
analysis, 4 numerical failure (series truncation or degenerate estimates).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .correlation import (
    CorrelationQuery,
    CorrelationReport,
    correlation,
    correlation_table,
    decay_exponent_fit,
    regime,
    theorem1_bound,
    theorem2_delta,
)
from .errors import (
    DegenerateError,
    DomainError,
    RegimeError,
    ResourceError,
    TruncationError,
    ValidationError,
)
from .harmonics import SphericalPoint
from .kernels import MexicanKernel, SMHWProfile, kernel_from_params, smhw_approximation_gap
from .simulation import default_mc_lmax, monte_carlo_correlation, write_beta_csv
from .spectra import AlphaRegular, spectrum_from_params
from .stats import StatisticConfig, clt_experiment, gamma_experiment

COMMANDS = (
    "kernel-dump",
    "corr-table",
    "decay-fit",
    "bound-check",
    "supercritical-check",
    "smhw-gap",
    "mc-corr",
    "clt",
    "gamma",
)

DEFAULTS = {
    "kernel": {"kind": "mexican", "B": "2", "p": "2"},
    "spectrum": {"variant": "alpha_regular", "alpha": "3"},
    "scales": {"j_min": "4", "j_max": "7", "pairs": "all"},
    "angles": {"thetas": "0, 0.05, 0.1, 0.2, 0.5, 1.0", "theta": "0.2"},
    "numerics": {"tolerance": "1e-12"},
    "bound": {"c0": "1", "Cg": "1"},
    "supercritical": {"epsilon": "0.3"},
    "mc": {"replicates": "200", "j": "6", "stream": "false"},
    "stats": {"orders": "2, 4"},
    "smhw": {"n_theta": "1024", "fit_span": "8"},
    "run": {"seed": "0"},
}

EXIT_OK, EXIT_CHECK_FAILED, EXIT_VALIDATION, EXIT_REGIME, EXIT_NUMERIC = 0, 1, 2, 3, 4


class Config:
    """Flat ``section.key -> str`` view over INI text plus overrides."""

    def __init__(self, sections: dict):
        self.sections = {s: dict(kv) for s, kv in sections.items()}

    @classmethod
    def load(cls, path=None, overrides=(), seed=None) -> "Config":
        merged = {s: dict(kv) for s, kv in DEFAULTS.items()}
        if path is not None:
            cp = configparser.ConfigParser(interpolation=None)
            cp.optionxform = str
            try:
                with open(path) as fh:
                    cp.read_file(fh)
            except OSError as exc:
                raise ValidationError(f"cannot read config: {exc.strerror}", field="--config") from None
            except configparser.Error as exc:
                raise ValidationError(f"malformed config: {exc}", field="--config") from None
            for s in cp.sections():
                merged.setdefault(s, {}).update(cp[s])
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ValidationError(f"expected section.key=value, got {item!r}", field="--set")
            key, value = item.split("=", 1)
            sec, opt = key.strip().split(".", 1)
            merged.setdefault(sec, {})[opt] = value.strip()
        if seed is not None:
            merged["run"]["seed"] = str(seed)
        return cls(merged)

    def raw(self, key: str, default=None):
        sec, opt = key.split(".", 1)
        val = self.sections.get(sec, {}).get(opt)
        if val is None:
            if default is None:
                raise ValidationError("missing value", field=key)
            return default
        return val

    def float(self, key, default=None) -> float:
        try:
            v = float(self.raw(key, default))
        except ValueError:
            raise ValidationError(f"not a number: {self.raw(key)!r}", field=key) from None
        if not math.isfinite(v):
            raise ValidationError("must be finite", field=key)
        return v

    def int(self, key, default=None) -> int:
        v = self.float(key, default)
        if v != int(v):
            raise ValidationError(f"expected an integer, got {v}", field=key)
        return int(v)

    def floats(self, key, default=None) -> list:
        text = self.raw(key, default)
        try:
            return [float(t) for t in text.replace(",", " ").split()]
        except ValueError:
            raise ValidationError(f"cannot parse number list {text!r}", field=key) from None

    def bool(self, key, default=None) -> bool:
        v = str(self.raw(key, default)).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"expected a boolean, got {v!r}", field=key)

    def section(self, name) -> dict:
        return dict(self.sections.get(name, {}))

    def digest(self) -> str:
        canon = json.dumps(self.sections, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# shared builders


def _kernel(cfg):
    params = cfg.section("kernel")
    try:
        return kernel_from_params(params)
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc), field="kernel") from None


def _spectrum(cfg):
    params = cfg.section("spectrum")
    params.setdefault("B", cfg.raw("kernel.B", "2"))
    return spectrum_from_params(params)


def _scales(cfg) -> list:
    if "js" in cfg.sections.get("scales", {}):
        js = cfg.floats("scales.js")
    else:
        lo, hi = cfg.int("scales.j_min"), cfg.int("scales.j_max")
        if hi < lo:
            raise ValidationError("j_max must be at least j_min", field="scales.j_max")
        js = [float(j) for j in range(lo, hi + 1)]
    if not js or any(j < 0 for j in js):
        raise ValidationError("scales must be nonnegative", field="scales")
    return js


def _pairs(cfg, js):
    mode = cfg.raw("scales.pairs", "all")
    if mode == "all":
        return [(a, b) for a in js for b in js]
    if mode == "diagonal":
        return [(a, a) for a in js]
    raise ValidationError(f"pairs must be 'all' or 'diagonal', got {mode!r}", field="scales.pairs")


def _thetas(cfg):
    ts = cfg.floats("angles.thetas")
    if any(not 0 <= t <= math.pi for t in ts):
        raise ValidationError("angles must lie in [0, pi]", field="angles.thetas")
    return ts


def _tol(cfg):
    t = cfg.float("numerics.tolerance")
    if not 0 < t < 1:
        raise ValidationError("tolerance must lie in (0, 1)", field="numerics.tolerance")
    return t


def _bound_params(cfg, kernel, spectrum):
    if not isinstance(kernel, MexicanKernel) or not isinstance(spectrum, AlphaRegular):
        return None
    return {"p": kernel.p, "alpha": spectrum.alpha, "c0": cfg.float("bound.c0"), "Cg": cfg.float("bound.Cg")}


class _Writer:
    def __init__(self, out: Path, cfg: Config, command: str):
        self.out = out
        self.cfg = cfg
        self.command = command
        out.mkdir(parents=True, exist_ok=True)
        self.comment = f"config_digest={cfg.digest()} command={command} version={__version__}"
        self.written = []

    def path(self, name) -> Path:
        p = self.out / name
        self.written.append(str(p))
        return p

    def json(self, name, doc: dict):
        full = {"config_digest": self.cfg.digest(), "command": self.command, "config": self.cfg.sections}
        full.update(doc)
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(full), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def rows(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(f"# {self.comment}\n")
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(_cell(v) for v in r) + "\n")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# commands


def cmd_kernel_dump(cfg, w, threads):
    """Tabulate kernel weights w_j(l)."""
    kernel = _kernel(cfg)
    js = _scales(cfg)
    top = max(kernel.truncation_degree(j) for j in js)
    top = min(top, cfg.int("kernel.l_max", str(top)))
    l = np.arange(top + 1)
    rows = []
    for j in js:
        wt = np.asarray(kernel.weight(l, j), dtype=float)
        rows.extend((int(li), _jfmt(j), float(v)) for li, v in zip(l, wt))
    w.rows("kernel.csv", ["l", "j", "weight"], rows)
    w.json("kernel.json", {"kernel": kernel.describe(), "scales": js, "l_max": top})
    return EXIT_OK


def _jfmt(j):
    return int(j) if float(j).is_integer() else float(j)


def _report(cfg, threads, pairs, thetas, with_bound=True):
    kernel, spectrum = _kernel(cfg), _spectrum(cfg)
    bp = _bound_params(cfg, kernel, spectrum) if with_bound else None
    rep = correlation_table(kernel, spectrum, pairs, thetas, _tol(cfg), bp, threads)
    rep.params = {"kernel": kernel.describe(), "spectrum": spectrum.describe()}
    return kernel, spectrum, rep


def _write_report(w, name, rep: CorrelationReport, extra=None):
    rows = [(_jfmt(e.j1), _jfmt(e.j2), e.theta, e.corr, e.bound, e.lmax) for e in rep.entries]
    w.rows(f"{name}.csv", ["j1", "j2", "theta", "corr", "bound", "lmax"], rows)
    doc = rep.to_json()
    doc.update(extra or {})
    w.json(f"{name}.json", doc)


def cmd_corr_table(cfg, w, threads):
    """Correlation table over scale pairs and angles."""
    js = _scales(cfg)
    _, _, rep = _report(cfg, threads, _pairs(cfg, js), _thetas(cfg))
    _write_report(w, "corr_table", rep)
    return EXIT_OK


def cmd_decay_fit(cfg, w, threads):
    """Fit the decay exponent of same-scale correlations."""
    js = _scales(cfg)
    theta = cfg.float("angles.theta")
    kernel, _, rep = _report(cfg, threads, [(j, j) for j in js], [theta])
    fit = decay_exponent_fit([e.j1 for e in rep.entries], [e.corr for e in rep.entries], kernel.B)
    rep.fitted_exponent, rep.fit_residual = fit.exponent, fit.residual
    _write_report(w, "decay", rep, {"intercept": fit.intercept})
    return EXIT_OK


def cmd_bound_check(cfg, w, threads):
    """Check every |corr| against the decay bound."""
    kernel, spectrum = _kernel(cfg), _spectrum(cfg)
    if not isinstance(kernel, MexicanKernel) or not isinstance(spectrum, AlphaRegular):
        raise ValidationError("bound-check needs a mexican kernel and an alpha_regular spectrum", field="kernel.kind")
    # surfaces the regime error before any series work
    theorem1_bound(kernel.p, spectrum.alpha, kernel.B, 1, 1, 0.0, cfg.float("bound.c0"), cfg.float("bound.Cg"))
    js = _scales(cfg)
    _, _, rep = _report(cfg, threads, _pairs(cfg, js), _thetas(cfg))
    violations = [e for e in rep.entries if not abs(e.corr) <= e.bound]
    _write_report(w, "bound_check", rep, {"violations": len(violations), "passed": not violations})
    return EXIT_OK if not violations else EXIT_CHECK_FAILED


def cmd_supercritical_check(cfg, w, threads):
    """Check persistent correlation for fast-decaying spectra."""
    kernel, spectrum = _kernel(cfg), _spectrum(cfg)
    if not isinstance(kernel, MexicanKernel) or not isinstance(spectrum, AlphaRegular):
        raise ValidationError("supercritical-check needs a mexican kernel and an alpha_regular spectrum",
                              field="kernel.kind")
    eps = cfg.float("supercritical.epsilon")
    delta = theorem2_delta(eps, spectrum.alpha, kernel.p, cfg.float("bound.c0"))
    theta = min(cfg.float("angles.theta"), delta)
    js = _scales(cfg)
    _, _, rep = _report(cfg, threads, [(j, j) for j in js], [theta], with_bound=False)
    rep.regime = regime(kernel.p, spectrum.alpha)
    ok_level = all(e.corr > 1 - eps for e in rep.entries)
    _write_report(w, "supercritical", rep, {"epsilon": eps, "delta": delta, "theta": theta, "passed": ok_level})
    return EXIT_OK if ok_level else EXIT_CHECK_FAILED


def cmd_smhw_gap(cfg, w, threads):
    """Compare the SMHW profile with order-p needlets."""
    kernel = _kernel(cfg)
    if not isinstance(kernel, MexicanKernel):
        raise ValidationError("smhw-gap needs a mexican kernel", field="kernel.kind")
    n = cfg.int("smhw.n_theta")
    if n < 2:
        raise ValidationError("need at least two angles", field="smhw.n_theta")
    span = cfg.float("smhw.fit_span")
    theta = np.arange(1, n + 1) / n  # (0, 1]
    rows, summary = [], []
    for j in _scales(cfg):
        prof = SMHWProfile(kernel.B, j)
        t = prof.scale_t
        fit = np.linspace(0.0, span * t, 257)
        K, gap = smhw_approximation_gap(prof, kernel, theta, fit_grid=fit)
        norm = gap / (t * np.minimum(theta**4 * kernel.B ** (4 * j), 1.0))
        rows.extend((_jfmt(j), float(a), float(g), float(r)) for a, g, r in zip(theta, gap, norm))
        _, gap0 = smhw_approximation_gap(prof, kernel, [0.0], fit_grid=fit)
        summary.append({"j": j, "K": K, "sup_gap_over_t": float(gap.max() / t), "gap_at_zero_over_t": float(gap0[0] / t),
                        "sup_normalized_gap": float(norm.max())})
    w.rows("smhw_gap.csv", ["j", "theta", "gap", "normalized_gap"], rows)
    w.json("smhw_gap.json", {"scales": summary})
    return EXIT_OK


def cmd_mc_corr(cfg, w, threads):
    """Monte Carlo correlation at two points versus the series value."""
    kernel, spectrum = _kernel(cfg), _spectrum(cfg)
    j = cfg.float("mc.j")
    theta = cfg.float("angles.theta")
    R = cfg.int("mc.replicates")
    seed = cfg.int("run.seed")
    l_max = cfg.int("mc.l_max", str(default_mc_lmax(kernel.B, j)))
    if not 0 <= theta <= math.pi:
        raise ValidationError("angle must lie in [0, pi]", field="angles.theta")
    pts = (SphericalPoint(math.pi / 2, 0.0), SphericalPoint(math.pi / 2, theta))
    mc = monte_carlo_correlation(spectrum, kernel, j, pts, R, seed, l_max, threads)
    analytic = correlation(CorrelationQuery(kernel, spectrum, j, j, theta, _tol(cfg)))
    z = (mc.corr - analytic) / mc.se if mc.se > 0 else math.nan
    w.json("mc_corr.json", {"j": j, "theta": theta, "replicates": R, "l_max": l_max, "seed": seed,
                            "empirical": mc.corr, "se": mc.se, "analytic": analytic, "z": z})
    if cfg.bool("mc.stream"):
        write_beta_csv(w.path("betas.csv"), mc.betas, w.comment)
    return EXIT_OK


def cmd_clt(cfg, w, threads):
    """Hermite statistics, whitening and normality diagnostics."""
    kernel, spectrum = _kernel(cfg), _spectrum(cfg)
    orders = [int(q) for q in cfg.floats("stats.orders")]
    sc = StatisticConfig.single_orders(orders)
    j = cfg.float("mc.j")
    R = cfg.int("mc.replicates")
    l_max = cfg.int("mc.l_max", str(default_mc_lmax(kernel.B, j)))
    res = clt_experiment(spectrum, kernel, j, sc, R, cfg.int("run.seed"), l_max=l_max, threads=threads)
    res.report.to_csv(w.path("clt_stats.csv"), w.comment)
    doc = res.report.to_json()
    doc.update({"omega": res.omega.matrix, "omega_min_eigenvalue": res.omega.min_eigenvalue, "gamma": res.gamma,
                "l_max": res.l_max, "n_points": res.n_points, "orders": orders})
    w.json("clt.json", doc)
    return EXIT_OK if res.report.passed else EXIT_CHECK_FAILED


def cmd_gamma(cfg, w, threads):
    """Monte Carlo check of the Gamma_j estimator."""
    kernel, spectrum = _kernel(cfg), _spectrum(cfg)
    R = cfg.int("mc.replicates")
    seed = cfg.int("run.seed")
    rows, docs = [], []
    for j in _scales(cfg):
        g = gamma_experiment(spectrum, kernel, j, R, seed, threads=threads)
        rows.append((_jfmt(j), g.mean, g.se, g.target, g.z))
        docs.append({"j": j, "mean": g.mean, "se": g.se, "target": g.target, "z": g.z, "l_max": g.l_max})
    w.rows("gamma.csv", ["j", "mean", "se", "target", "z"], rows)
    w.json("gamma.json", {"replicates": R, "seed": seed, "scales": docs})
    return EXIT_OK


HANDLERS = {
    "kernel-dump": cmd_kernel_dump,
    "corr-table": cmd_corr_table,
    "decay-fit": cmd_decay_fit,
    "bound-check": cmd_bound_check,
    "supercritical-check": cmd_supercritical_check,
    "smhw-gap": cmd_smhw_gap,
    "mc-corr": cmd_mc_corr,
    "clt": cmd_clt,
    "gamma": cmd_gamma,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mexneedlets", description="Needlet coefficient correlation experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=(HANDLERS[name].__doc__ or name.replace("-", " ")).strip().splitlines()[0])
        sp.add_argument("--config", metavar="PATH", help="INI file with experiment parameters")
        sp.add_argument("--set", metavar="SECTION.KEY=VALUE", action="append", default=[], help="override one key")
        sp.add_argument("--seed", type=int, help="random seed for Monte Carlo commands")
        sp.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ValidationError("must be at least 1", field="--threads")
        cfg = Config.load(args.config, args.set, args.seed)
        kind = cfg.raw("experiment.kind", args.command)
        if kind != args.command:
            raise ValidationError(f"config is for {kind!r}, not {args.command!r}", field="experiment.kind")
        writer = _Writer(Path(args.out), cfg, args.command)
        status = HANDLERS[args.command](cfg, writer, args.threads)
    except ValidationError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RegimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (TruncationError, DegenerateError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for p in writer.written:
        print(p)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
