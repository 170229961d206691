"""Covariances and correlations of needlet coefficients by direct series summation.

All series here drop the ``sqrt(lambda_jk lambda_jk')`` cubature factor,
which cancels in every correlation:

    cov(j1, j2, theta) = sum_{l>=1} w_j1(l) w_j2(l) (2l+1)/(4 pi) C_l P_l(cos theta)

Series are summed sequentially in ascending ``l`` so a given query is
bit-reproducible regardless of how a lattice of queries is scheduled.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateError, DomainError, RegimeError, TruncationError, ValidationError
from .harmonics import FOUR_PI
from .kernels import MexicanKernel, NeedletKernel
from .spectra import PowerSpectrum

BLOCK = 64
L_CAP = 1_000_000
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class SeriesResult:
    value: float
    l_max: int
    #: sum of |terms|, a scale for rounding error in ``value``
    abs_sum: float


@dataclass(frozen=True)
class CorrelationQuery:
    kernel: NeedletKernel
    spectrum: PowerSpectrum
    j1: float
    j2: float
    theta: float
    tolerance: float = DEFAULT_TOL

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise ValidationError(f"theta={self.theta} outside [0, pi]", field="theta")
        if not 0.0 < self.tolerance < 1.0:
            raise ValidationError(f"tolerance={self.tolerance} outside (0, 1)", field="tolerance")
        if self.j1 < 0 or self.j2 < 0:
            raise ValidationError("scales must be nonnegative", field="j")


class _LegendreStream:
    """Continues ``P_l(x)`` across blocks; plain floats are faster than numpy for one ``x``."""

    def __init__(self, x: float):
        self.x = x
        self.l = 0
        self.prev = 0.0
        self.cur = 1.0

    def take(self, n: int) -> np.ndarray:
        """Values ``P_{l+1} .. P_{l+n}`` where ``l`` is the last degree returned."""
        out = [0.0] * n
        x, prev, cur, l = self.x, self.prev, self.cur, self.l
        for i in range(n):
            if l == 0:
                nxt = x
            else:
                nxt = ((2 * l + 1) * x * cur - l * prev) / (l + 1)
            prev, cur, l = cur, nxt, l + 1
            out[i] = cur
        self.prev, self.cur, self.l = prev, cur, l
        return np.array(out)


def _start_degree(kernel: NeedletKernel, j1, j2) -> float:
    """Degree past which the product weight is decreasing."""
    if isinstance(kernel, MexicanKernel):
        eps = kernel.B ** (-2.0 * j1) + kernel.B ** (-2.0 * j2)
        # maximum of (l(l+1))^(2p) exp(-l(l+1) eps) at l(l+1) = 2p / eps
        return 0.5 * (math.sqrt(1.0 + 8.0 * kernel.p / eps) - 1.0)
    return max(kernel.peak_degree(j1), kernel.peak_degree(j2))


def covariance_series(
    kernel: NeedletKernel,
    spectrum: PowerSpectrum,
    j1,
    j2,
    theta: float,
    tolerance: float = DEFAULT_TOL,
    l_cap: int = L_CAP,
) -> SeriesResult:
    """Sum the covariance series block by block until the tail is negligible.

    A block of ``BLOCK`` degrees ending at ``L`` is the last one when

    * ``L`` is past the maximum of the product weight,
    * the block's own sum is at most ``tolerance * |S|``, and
    * the envelope ``e_l = w1 w2 (2l+1)/(4 pi) C_l >= |term_l|`` has ratio
      ``rho = e_L / e_{L-1} < 1`` with ``e_L rho / (1 - rho) <= tolerance * |S|``,
      which bounds the remaining tail once the envelope ratios decrease.

    Spectra with a finite ``lmax`` are treated as band-limited.
    """
    x = math.cos(theta)
    x = min(1.0, max(-1.0, x))
    stream = _LegendreStream(x)
    start = _start_degree(kernel, j1, j2)
    band = spectrum.lmax
    S = 0.0
    A = 0.0
    lo = 1
    while True:
        hi = lo + BLOCK - 1
        if band is not None:
            hi = min(hi, band)
        if hi > l_cap:
            raise TruncationError(
                f"series for (j1={j1}, j2={j2}, theta={theta}) not converged by l={l_cap}; running sum {S:.6e}"
            )
        l = np.arange(lo, hi + 1)
        with np.errstate(under="ignore"):
            env = (
                np.asarray(kernel.weight(l, j1), dtype=float)
                * np.asarray(kernel.weight(l, j2), dtype=float)
                * (2 * l + 1)
                / FOUR_PI
                * np.asarray(spectrum.evaluate(l), dtype=float)
            )
        terms = env * stream.take(l.size)
        # sequential ascending accumulation
        S = float(np.cumsum(np.concatenate(([S], terms)))[-1])
        A = float(np.cumsum(np.concatenate(([A], np.abs(terms))))[-1])
        if band is not None and hi >= band:
            return SeriesResult(S, int(hi), A)
        block = abs(float(terms.sum()))
        limit = tolerance * abs(S)
        if hi > start and block <= limit:
            eL = env[-1]
            if eL == 0.0:
                return SeriesResult(S, int(hi), A)
            rho = eL / env[-2] if env[-2] > 0 else math.inf
            if rho < 1.0 and eL * rho / (1.0 - rho) <= limit:
                return SeriesResult(S, int(hi), A)
        lo = hi + 1


def needlet_covariance(kernel, spectrum, j1, j2, theta, tolerance=DEFAULT_TOL) -> float:
    q = CorrelationQuery(kernel, spectrum, j1, j2, theta, tolerance)
    return covariance_series(q.kernel, q.spectrum, q.j1, q.j2, q.theta, q.tolerance).value


def needlet_variance(kernel, spectrum, j, tolerance=DEFAULT_TOL) -> float:
    v = needlet_covariance(kernel, spectrum, j, j, 0.0, tolerance)
    if not v > 0:
        raise DegenerateError(f"variance at j={j} is not positive ({v})")
    return v


@dataclass(frozen=True)
class CorrelationValue:
    corr: float
    covariance: float
    var1: float
    var2: float
    l_max: int


def _clamp(c: float) -> float:
    if abs(c) > 1.0:
        if abs(c) - 1.0 > 1e-12:
            raise ArithmeticError(f"correlation {c!r} outside [-1, 1] beyond rounding")
        return math.copysign(1.0, c)
    return c


def correlation_detail(query: CorrelationQuery, variances: dict | None = None) -> CorrelationValue:
    k, s, tol = query.kernel, query.spectrum, query.tolerance
    cov = covariance_series(k, s, query.j1, query.j2, query.theta, tol)

    def var(j):
        if variances is not None and j in variances:
            return variances[j]
        v = needlet_variance(k, s, j, tol)
        if variances is not None:
            variances[j] = v
        return v

    v1, v2 = var(query.j1), var(query.j2)
    return CorrelationValue(_clamp(cov.value / math.sqrt(v1 * v2)), cov.value, v1, v2, cov.l_max)


def correlation(query: CorrelationQuery) -> float:
    return correlation_detail(query).corr


# ---------------------------------------------------------------------------
# theoretical envelopes


def regime(p: int, alpha: float) -> str:
    crit = 4 * p + 2
    if math.isclose(alpha, crit, rel_tol=0.0, abs_tol=1e-12):
        return "critical"
    return "subcritical" if alpha < crit else "supercritical"


def bound_constant(p: int, alpha: float, B: float, c0: float = 1.0, Cg: float = 1.0) -> float:
    """``C_M = 2^(2p) pi^(M+1) M^2 Gamma(M-1) c0 Cg ln B`` with ``M = 4p+2-alpha``."""
    if not alpha > 2:
        raise ValidationError(f"alpha={alpha} violates α > 2", field="alpha")
    M = 4 * p + 2 - alpha
    if M <= 0:
        raise RegimeError(f"α ≥ 4p+2 (alpha={alpha}, p={p}): decay bound unavailable")
    if M <= 1:
        raise RegimeError(
            f"α ≥ 4p+1 (alpha={alpha}, p={p}): the constant needs Gamma(4p+1-α), which is undefined here"
        )
    if not B > 1:
        raise ValidationError("B must exceed 1", field="B")
    return 2.0 ** (2 * p) * math.pi ** (M + 1) * M**2 * special.gamma(M - 1) * c0 * Cg * math.log(B)


def theorem1_bound(p, alpha, B, j1, j2, theta, c0=1.0, Cg=1.0) -> float:
    """Upper bound on ``|corr|`` in the subcritical regime ``2 < alpha < 4p+1``.

    ``C_M / (1 + B^(jbar - log_B jbar) theta)^M`` with ``jbar = (j1+j2)/2``.
    """
    CM = bound_constant(p, alpha, B, c0, Cg)
    jbar = 0.5 * (j1 + j2)
    if not jbar > 0:
        raise ValidationError("the bound needs j1 + j2 > 0", field="j")
    if theta < 0:
        raise ValidationError("theta must be nonnegative", field="theta")
    M = 4 * p + 2 - alpha
    growth = B ** (jbar - math.log(jbar) / math.log(B))
    return CM / (1.0 + growth * theta) ** M


def theorem2_delta(epsilon, alpha, p, c0=1.0) -> float:
    """Angular radius ``epsilon (1 + c0^2)^(-1/(alpha-4p-2))`` for persistent correlation."""
    if not 0 < epsilon < 1:
        raise ValidationError(f"epsilon={epsilon} outside (0, 1)", field="epsilon")
    if not alpha > 4 * p + 2:
        raise RegimeError(f"α ≤ 4p+2 (alpha={alpha}, p={p}): persistence radius needs α > 4p+2")
    return epsilon * (1.0 + c0**2) ** (-1.0 / (alpha - 4 * p - 2))


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    residual: float
    intercept: float


def decay_exponent_fit(js, corrs, B: float) -> DecayFit:
    """Fit ``log|corr| = a - kappa (j - log_B j) ln B`` and return ``kappa``.

    ``residual`` is the root-mean-square misfit in natural-log units.
    """
    js = np.asarray(js, dtype=float)
    corrs = np.asarray(corrs, dtype=float)
    if js.size != corrs.size:
        raise ValidationError("scales and correlations differ in length", field="entries")
    if np.unique(js).size < 4:
        raise DegenerateError("need at least four distinct scales")
    if np.any(js <= 0):
        raise DomainError("scales must be positive for log_B j")
    mag = np.abs(corrs)
    if np.any(mag == 0) or not np.all(np.isfinite(mag)) or np.any(mag < np.finfo(float).tiny):
        raise DegenerateError("correlations underflow; the log-linear fit is undefined")
    x = (js - np.log(js) / math.log(B)) * math.log(B)
    A = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(A, np.log(mag), rcond=None)
    resid = np.log(mag) - A @ coef
    return DecayFit(float(coef[1]), float(np.sqrt(np.mean(resid**2))), float(coef[0]))


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class CorrelationEntry:
    j1: float
    j2: float
    theta: float
    corr: float
    bound: float
    lmax: int


@dataclass
class CorrelationReport:
    entries: list
    regime: str
    fitted_exponent: float | None = None
    fit_residual: float | None = None
    params: dict = field(default_factory=dict)

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["j1", "j2", "theta", "corr", "bound", "lmax"])
            for e in self.entries:
                w.writerow([_fmt(e.j1), _fmt(e.j2), repr(float(e.theta)), repr(float(e.corr)), repr(float(e.bound)), e.lmax])

    def to_json(self) -> dict:
        return {
            "params": self.params,
            "regime": self.regime,
            "fitted_exponent": self.fitted_exponent,
            "fit_residual": self.fit_residual,
            "entries": [
                {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(e).items()}
                for e in self.entries
            ],
        }

    def write_json(self, path, extra: dict | None = None) -> None:
        doc = dict(extra or {})
        doc.update(self.to_json())
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(j):
    return str(int(j)) if float(j).is_integer() else repr(float(j))


def correlation_table(
    kernel: NeedletKernel,
    spectrum: PowerSpectrum,
    pairs,
    thetas,
    tolerance: float = DEFAULT_TOL,
    bound_params: dict | None = None,
    threads: int = 1,
) -> CorrelationReport:
    """Correlations on the lattice ``pairs x thetas``, sorted by ``(j1, j2, theta)``.

    ``bound_params`` (keys ``p, alpha, c0, Cg``) adds the decay bound column;
    rows where it does not apply carry NaN.
    """
    pairs = sorted({(float(a), float(b)) for a, b in pairs})
    thetas = sorted(float(t) for t in thetas)
    scales = sorted({j for pr in pairs for j in pr})

    def _var(j):
        return j, needlet_variance(kernel, spectrum, j, tolerance)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        variances = dict(ex.map(_var, scales))

    def _one(task):
        (j1, j2), t = task
        cv = correlation_detail(CorrelationQuery(kernel, spectrum, j1, j2, t, tolerance), variances)
        bound = math.nan
        if bound_params is not None:
            try:
                bound = theorem1_bound(
                    bound_params["p"], bound_params["alpha"], kernel.B, j1, j2, t,
                    bound_params.get("c0", 1.0), bound_params.get("Cg", 1.0),
                )
            except RegimeError:
                pass
        return CorrelationEntry(j1, j2, t, cv.corr, bound, cv.l_max)

    tasks = [(pr, t) for pr in pairs for t in thetas]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        entries = list(ex.map(_one, tasks))
    rg = regime(bound_params["p"], bound_params["alpha"]) if bound_params else "unspecified"
    return CorrelationReport(entries, rg)
