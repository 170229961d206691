"""Hermite statistics of normalized needlet coefficients and their Gaussian diagnostics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from .cubature import CubatureGrid, build_grid
from .errors import DegenerateError, ValidationError
from .harmonics import FOUR_PI
from .kernels import NeedletKernel
from .simulation import CoefficientField, _spectrum_table, default_mc_lmax, kernel_weights, simulate_coefficients
from .spectra import PowerSpectrum


def hermite_table(Q: int, x) -> np.ndarray:
    """``He_0(x) .. He_Q(x)`` stacked on a new leading axis."""
    if Q < 0:
        raise ValidationError("Hermite order must be nonnegative", field="q")
    x = np.asarray(x, dtype=float)
    out = np.empty((Q + 1,) + x.shape)
    out[0] = 1.0
    if Q >= 1:
        out[1] = x
    for q in range(1, Q):
        out[q + 1] = x * out[q] - q * out[q - 1]
    return out


def hermite(q: int, x):
    """Probabilists' Hermite polynomial, ``He_2(x) = x^2 - 1``."""
    res = hermite_table(q, x)[q]
    return float(res) if res.ndim == 0 else res


def gamma_target(kernel: NeedletKernel, spectrum: PowerSpectrum, j, l_max: int) -> float:
    """``Gamma_j = sum_{l<=l_max} w_j(l)^2 (2l+1)/(4 pi) C_l`` with the kernel's own weights."""
    w = kernel_weights(kernel, j, l_max)
    l = np.arange(l_max + 1)
    return float(np.sum(w**2 * (2 * l + 1) / FOUR_PI * _spectrum_table(spectrum, l_max)))


def normalize_coefficients(field_or_values, variance) -> np.ndarray:
    """``beta / sqrt(variance)``; pass ``lambda_k Gamma_j`` per point for a grid field."""
    vals = field_or_values.values if isinstance(field_or_values, CoefficientField) else field_or_values
    vals = np.asarray(vals, dtype=float)
    var = np.asarray(variance, dtype=float)
    if np.any(~(var > 0)):
        raise ValidationError("variances must be strictly positive", field="variance")
    return vals / np.sqrt(var)


@dataclass(frozen=True, eq=False)
class StatisticConfig:
    """Weights ``w[u, q-1]`` on ``He_q`` for ``q = 1 .. Q``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if w.ndim != 2 or w.size == 0:
            raise ValidationError("weights must be a nonempty U x Q matrix", field="weights")
        if np.any(np.all(w == 0, axis=1)):
            raise ValidationError("every statistic needs at least one nonzero weight", field="weights")
        object.__setattr__(self, "weights", w)

    @property
    def U(self) -> int:
        return self.weights.shape[0]

    @property
    def Q(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def single_orders(cls, orders) -> "StatisticConfig":
        orders = list(orders)
        if any(q < 1 for q in orders):
            raise ValidationError("orders start at 1", field="orders")
        w = np.zeros((len(orders), max(orders)))
        for u, q in enumerate(orders):
            w[u, q - 1] = 1.0
        return cls(w)


def h_statistic(config: StatisticConfig, normalized) -> np.ndarray:
    """``h_u = N^(-1/2) sum_k sum_q w_uq He_q(beta_hat_k)``; leading axes are kept."""
    x = np.asarray(normalized, dtype=float)
    if x.shape[-1] == 0:
        raise ValidationError("no coefficients", field="normalized")
    H = hermite_table(config.Q, x)[1:]  # (Q, ..., N)
    sums = H.sum(axis=-1) / math.sqrt(x.shape[-1])  # (Q, ...)
    return np.moveaxis(np.tensordot(config.weights, sums, axes=(1, 0)), 0, -1)


def gamma_estimator(field_or_values, weights=None) -> float | np.ndarray:
    """``(1/N) sum_k beta_k^2 / lambda_k``."""
    if isinstance(field_or_values, CoefficientField):
        vals, weights = field_or_values.values, field_or_values.weights
    else:
        vals = np.asarray(field_or_values, dtype=float)
        if weights is None:
            raise ValidationError("cubature weights required", field="weights")
    weights = np.asarray(weights, dtype=float)
    if np.any(~(weights > 0)):
        raise ValidationError("cubature weights must be positive", field="weights")
    out = np.mean(np.asarray(vals) ** 2 / weights, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def skewness_kurtosis_stats(normalized) -> tuple[float, float]:
    """``N^(-1/2) sum beta_hat^3`` and ``N^(-1/2) sum (beta_hat^4 - 3)``."""
    x = np.asarray(normalized, dtype=float)
    if x.size == 0:
        raise ValidationError("no coefficients", field="normalized")
    rn = math.sqrt(x.size)
    return float(np.sum(x**3) / rn), float(np.sum(x**4 - 3.0) / rn)


@dataclass(frozen=True, eq=False)
class OmegaEstimate:
    matrix: np.ndarray
    replicates: int
    min_eigenvalue: float

    def rank(self, rel_tol: float = 1e-8) -> int:
        ev = np.linalg.eigvalsh(self.matrix)
        return int(np.sum(ev > rel_tol * max(ev.max(), 0.0)))

    @property
    def full_rank(self) -> bool:
        return self.rank() == self.matrix.shape[0]


def estimate_omega(h) -> OmegaEstimate:
    """Second moment ``E h h'`` from replicate rows (no centering)."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    R, U = h.shape
    if R < U + 1:
        raise ValidationError(f"need at least {U + 1} replicates for {U} statistics, got {R}", field="replicates")
    M = h.T @ h / R
    M = 0.5 * (M + M.T)
    return OmegaEstimate(M, R, float(np.linalg.eigvalsh(M).min()))


def whiten(h, omega: OmegaEstimate, rel_tol: float = 1e-8) -> np.ndarray:
    """``Omega^(-1/2) h`` for each replicate row (symmetric inverse square root)."""
    ev, V = np.linalg.eigh(omega.matrix)
    if ev.min() <= rel_tol * max(ev.max(), 0.0):
        raise DegenerateError(
            f"Omega is singular (smallest eigenvalue {ev.min():.3e}); statistics are multicollinear"
        )
    S = (V / np.sqrt(ev)) @ V.T
    return np.asarray(h, dtype=float) @ S


@dataclass(frozen=True)
class Thresholds:
    mean: float
    var_low: float
    var_high: float
    skew: float
    kurt: float
    ks: float

    @classmethod
    def default(cls, R: int) -> "Thresholds":
        r = math.sqrt(R)
        return cls(9.0 / r, 0.85, 1.15, 3.0 * math.sqrt(6.0 / R), 3.0 * math.sqrt(24.0 / R), 1.63 / r)


@dataclass(frozen=True)
class ComponentDiagnostic:
    u: int
    mean: float
    var: float
    skew: float
    kurt: float
    ks: float
    mean_ok: bool
    var_ok: bool
    skew_ok: bool
    kurt_ok: bool
    ks_ok: bool

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.var_ok and self.skew_ok and self.kurt_ok and self.ks_ok


@dataclass
class CLTReport:
    components: list
    thresholds: Thresholds
    replicates: int
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.components)

    def to_json(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        return {
            "replicates": self.replicates,
            "passed": self.passed,
            "thresholds": asdict(self.thresholds),
            "components": [{k: clean(v) for k, v in asdict(c).items()} | {"passed": c.passed} for c in self.components],
            **self.extra,
        }

    def write_json(self, path, extra: dict | None = None) -> None:
        doc = dict(extra or {})
        doc.update(self.to_json())
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["u", "mean", "var", "skew", "kurt", "ks"])
            for c in self.components:
                w.writerow([c.u, repr(c.mean), repr(c.var), repr(c.skew), repr(c.kurt), repr(c.ks)])


def clt_diagnostic(samples, thresholds: Thresholds | None = None) -> CLTReport:
    """Per-component moments and KS distance to ``N(0, 1)`` with pass/fail flags."""
    z = np.asarray(samples, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    R, U = z.shape
    if R < 2:
        raise ValidationError("need at least two samples", field="samples")
    th = Thresholds.default(R) if thresholds is None else thresholds
    comps = []
    for u in range(U):
        x = z[:, u]
        mean = float(x.mean())
        var = float(x.var(ddof=1))
        if var > 0:
            sk = float(sps.skew(x))
            ku = float(sps.kurtosis(x))
        else:
            sk = ku = math.nan
        ks = float(sps.kstest(x, "norm").statistic)
        comps.append(
            ComponentDiagnostic(
                u, mean, var, sk, ku, ks,
                abs(mean) < th.mean,
                th.var_low <= var <= th.var_high,
                abs(sk) < th.skew,
                abs(ku) < th.kurt,
                ks < th.ks,
            )
        )
    return CLTReport(comps, th, R)


# ---------------------------------------------------------------------------
# Monte Carlo pipelines


@dataclass(frozen=True)
class GammaResult:
    j: float
    mean: float
    se: float
    target: float
    replicates: int
    l_max: int

    @property
    def z(self) -> float:
        return (self.mean - self.target) / self.se


def gamma_experiment(
    spectrum: PowerSpectrum, kernel: NeedletKernel, j, replicates: int, seed: int,
    grid: CubatureGrid | None = None, l_max: int | None = None, threads: int = 1,
) -> GammaResult:
    """MC mean and standard error of the Gamma estimator against its analytic target."""
    grid = build_grid(kernel.B, j) if grid is None else grid
    l_max = default_mc_lmax(kernel.B, j) if l_max is None else l_max
    wts = grid.weights
    g = simulate_coefficients(
        spectrum, kernel, j, grid, replicates, seed, l_max, threads, reduce=lambda b: gamma_estimator(b, wts)
    )
    return GammaResult(j, float(g.mean()), float(g.std(ddof=1) / math.sqrt(g.size)),
                       gamma_target(kernel, spectrum, j, l_max), replicates, l_max)


@dataclass
class CLTResult:
    h: np.ndarray
    omega: OmegaEstimate
    whitened: np.ndarray
    report: CLTReport
    gamma: float
    l_max: int
    n_points: int


def clt_experiment(
    spectrum: PowerSpectrum, kernel: NeedletKernel, j, config: StatisticConfig, replicates: int, seed: int,
    grid: CubatureGrid | None = None, l_max: int | None = None, threads: int = 1,
    thresholds: Thresholds | None = None,
) -> CLTResult:
    """Simulate, normalize by ``lambda_k Gamma_j``, form ``h``, estimate ``Omega``, whiten, diagnose."""
    grid = build_grid(kernel.B, j) if grid is None else grid
    l_max = default_mc_lmax(kernel.B, j) if l_max is None else l_max
    gam = gamma_target(kernel, spectrum, j, l_max)
    scale = np.sqrt(grid.weights * gam)

    def reduce(beta):
        return h_statistic(config, beta / scale)

    h = simulate_coefficients(spectrum, kernel, j, grid, replicates, seed, l_max, threads, reduce=reduce)
    om = estimate_omega(h)
    z = whiten(h, om)
    return CLTResult(h, om, z, clt_diagnostic(z, thresholds), gam, l_max, grid.size)
