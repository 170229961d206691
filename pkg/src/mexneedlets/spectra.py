"""Angular power spectrum models.

Three families are supported:

``AlphaRegular``
    ``C_l = l^(-alpha) g(l / B^j)`` with a single smooth factor ``g`` applied
    at the scale ``j = round(log_B l)`` nearest to ``l``.
``Exponential``
    ``C_l = H(l) exp(-l^p)`` with ``H`` a polynomial bounded away from zero.
``Tabulated``
    Explicit values for ``l = 1 .. lmax``. Evaluation beyond the table is an
    error, never an extrapolation; the correlation engine and the simulator
    treat a tabulated spectrum as band-limited at ``lmax``.

All spectra are immutable and evaluate vectorially on integer degrees ``l >= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DomainError, RegimeError, ValidationError


def _degrees(l):
    arr = np.asarray(l)
    if arr.size and np.any(arr < 1):
        raise DomainError("power spectrum is defined for l >= 1 only (the monopole is excluded)")
    return arr.astype(float)


class PowerSpectrum:
    """Common surface: ``spec(l)`` / ``spec.evaluate(l)`` and ``spec.lmax``."""

    #: last supported degree, ``None`` when unbounded
    lmax: int | None = None

    def evaluate(self, l):
        raise NotImplementedError

    def __call__(self, l):
        return self.evaluate(l)

    def describe(self) -> dict:
        raise NotImplementedError


def _constant_one(u):
    return np.ones_like(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class AlphaRegular(PowerSpectrum):
    alpha: float
    g: Callable = field(default=_constant_one, compare=False)
    B: float = 2.0
    g_label: str = "1"

    def __post_init__(self):
        if not self.alpha > 2:
            raise ValidationError(
                f"alpha={self.alpha} violates the regularity requirement α > 2 (sum (2l+1) C_l must converge)",
                field="alpha",
            )
        if not self.B > 1:
            raise ValidationError("B must exceed 1", field="B")

    def scale_of(self, l):
        """Nearest scale ``j`` with ``B^(j-1) < l < B^(j+1)``."""
        return np.floor(np.log(_degrees(l)) / math.log(self.B) + 0.5)

    def evaluate(self, l):
        ll = _degrees(l)
        u = ll / self.B ** self.scale_of(ll)
        out = ll ** (-self.alpha) * np.asarray(self.g(u), dtype=float)
        return float(out) if np.ndim(out) == 0 else out

    def describe(self):
        return {"variant": "alpha_regular", "alpha": self.alpha, "B": self.B, "g": self.g_label}


@dataclass(frozen=True)
class Exponential(PowerSpectrum):
    """``C_l = H(l) exp(-l^p_exp)``; ``H`` given by ascending coefficients."""

    H: tuple = (1.0,)
    p_exp: float = 1.0

    def __post_init__(self):
        if not self.p_exp > 0:
            raise ValidationError("exponent must be positive", field="p_exp")
        object.__setattr__(self, "H", tuple(float(c) for c in self.H))
        if not self.H:
            raise ValidationError("polynomial H needs at least one coefficient", field="H")

    def evaluate(self, l):
        ll = _degrees(l)
        h = np.polynomial.polynomial.polyval(ll, self.H)
        if np.any(h <= 0):
            raise DomainError("H(l) must stay positive")
        out = h * np.exp(-(ll ** self.p_exp))
        return float(out) if np.ndim(out) == 0 else out

    def describe(self):
        return {"variant": "exponential", "H": list(self.H), "p_exp": self.p_exp}


@dataclass(frozen=True)
class Tabulated(PowerSpectrum):
    """Spectrum given as ``values[l - 1] = C_l`` for ``l = 1 .. len(values)``."""

    values: tuple
    source: str = ""

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValidationError("empty table", field="values")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ValidationError("tabulated C_l must be finite and positive", field="values")
        object.__setattr__(self, "values", vals)

    @property
    def lmax(self):
        return len(self.values)

    def evaluate(self, l):
        ll = np.asarray(l)
        _degrees(ll)
        if np.any(ll > self.lmax):
            raise DomainError(f"degree beyond tabulated range (lmax={self.lmax}); no extrapolation")
        idx = ll.astype(int) - 1
        out = np.asarray(self.values)[idx]
        return float(out) if np.ndim(out) == 0 else out

    def describe(self):
        return {"variant": "tabulated", "lmax": self.lmax, "source": self.source}

    @classmethod
    def from_file(cls, path) -> "Tabulated":
        """Read a two-column ``l C_l`` text file; ``#`` starts a comment."""
        values = []
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                where = f"{path}:{lineno}"
                if len(parts) != 2:
                    raise ValidationError(f"expected two columns 'l C_l', got {len(parts)}", field=where)
                try:
                    l = int(parts[0])
                    c = float(parts[1])
                except ValueError:
                    raise ValidationError(f"cannot parse {line!r}", field=where) from None
                if l != len(values) + 1:
                    raise ValidationError(
                        f"degrees must increase by one starting at 1; expected {len(values) + 1}, got {l}",
                        field=where,
                    )
                if not (c > 0 and math.isfinite(c)):
                    raise ValidationError(f"C_l must be positive, got {c}", field=where)
                values.append(c)
        if not values:
            raise ValidationError("no data rows", field=str(path))
        return cls(tuple(values), source=str(path))


def single_multipole(L: int, floor: float = 1e-300, lmax: int | None = None) -> Tabulated:
    """Tabulated spectrum with ``C_L = 1`` and a tiny positive floor elsewhere."""
    lmax = L if lmax is None else lmax
    vals = np.full(lmax, floor)
    vals[L - 1] = 1.0
    return Tabulated(tuple(vals), source=f"single multipole L={L}")


def evaluate(spec: PowerSpectrum, l):
    return spec.evaluate(l)


@dataclass
class ConditionReport:
    """Numerical check of the regularity condition on ``g``."""

    B: float
    j_range: tuple
    M: int
    g_sup: float
    g_inf: float
    c0_estimate: float
    derivative_sups: list
    c0_bound: float | None
    derivative_bounds: list | None
    alpha_ok: bool
    c0_ok: bool
    derivatives_ok: bool
    # separate constraints needed by the uncorrelation bound, reported only when p is given
    p: int | None = None
    subcritical: bool | None = None
    smoothness_order_ok: bool | None = None

    @property
    def passed(self) -> bool:
        return self.alpha_ok and self.c0_ok and self.derivatives_ok


def _central_difference(g, u, r, h):
    k = np.arange(r + 1)
    coef = (-1.0) ** k * np.array([math.comb(r, int(i)) for i in k])
    offsets = (r / 2.0 - k) * h
    vals = np.stack([np.asarray(g(u + o), dtype=float) * np.ones_like(u) for o in offsets])
    return coef @ vals / h**r


def validate_condition_A(
    spec: PowerSpectrum,
    B: float,
    j_range=(1, 10),
    M: int = 2,
    c0_bound: float | None = None,
    derivative_bounds=None,
    p: int | None = None,
    n_grid: int = 1024,
) -> ConditionReport:
    """Estimate ``c_0`` and ``sup |g^(r)|`` on ``u in [1/B, B]``.

    ``c0_estimate = max(sup g, 1 / inf g)``. Derivatives use the ``r``-th
    central difference with step equal to the grid spacing, enlarged to
    ``eps^(1/(r+2))`` when that spacing would drown the estimate in round-off.
    Missing bounds are treated as "report only" and pass.
    """
    if not isinstance(spec, AlphaRegular):
        raise RegimeError("the regularity check applies to the alpha-regular family only")
    u = np.linspace(1.0 / B, B, n_grid)
    g = np.asarray(spec.g(u), dtype=float) * np.ones_like(u)
    g_sup, g_inf = float(g.max()), float(g.min())
    if g_inf <= 0:
        c0 = math.inf
    else:
        c0 = max(g_sup, 1.0 / g_inf)
    spacing = u[1] - u[0]
    sups = []
    for r in range(1, M + 1):
        h = max(spacing, np.finfo(float).eps ** (1.0 / (r + 2)))
        d = _central_difference(spec.g, u, r, h)
        sups.append(float(np.max(np.abs(d))))
    c0_ok = True if c0_bound is None else c0 <= c0_bound
    if derivative_bounds is None:
        deriv_ok = True
    else:
        bounds = list(derivative_bounds)
        deriv_ok = all(s <= b for s, b in zip(sups, bounds))
    report = ConditionReport(
        B=B,
        j_range=tuple(j_range),
        M=M,
        g_sup=g_sup,
        g_inf=g_inf,
        c0_estimate=c0,
        derivative_sups=sups,
        c0_bound=c0_bound,
        derivative_bounds=None if derivative_bounds is None else list(derivative_bounds),
        alpha_ok=spec.alpha > 2,
        c0_ok=c0_ok,
        derivatives_ok=deriv_ok,
    )
    if p is not None:
        report.p = p
        report.subcritical = spec.alpha < 4 * p + 2
        report.smoothness_order_ok = M >= 4 * p + 2 - spec.alpha
    return report


def summability_check(spec: PowerSpectrum, l_max: int):
    """``(sum_{l=1}^{l_max} (2l+1) C_l, tail estimate beyond l_max)``.

    Tails come from integral comparison for the parametric families and are
    exact (the remaining table) for tabulated spectra.
    """
    if l_max < 1:
        raise DomainError("l_max must be at least 1")
    top = l_max if spec.lmax is None else min(l_max, spec.lmax)
    l = np.arange(1, top + 1)
    terms = (2 * l + 1) * np.asarray(spec(l), dtype=float)
    partial = float(np.sum(terms))
    if isinstance(spec, Tabulated):
        rest = np.arange(top + 1, spec.lmax + 1)
        tail = float(np.sum((2 * rest + 1) * np.asarray(spec(rest)))) if rest.size else 0.0
    elif isinstance(spec, AlphaRegular):
        gmax = max(1.0, float(np.max(spec.g(np.linspace(1 / math.sqrt(spec.B), math.sqrt(spec.B), 257)))))
        x, a = float(l_max), spec.alpha
        # int_x^inf (2t+1) t^-a dt
        tail = gmax * (2 * x ** (2 - a) / (a - 2) + x ** (1 - a) / (a - 1))
    elif isinstance(spec, Exponential):
        def f(t):
            return (2 * t + 1) * abs(np.polynomial.polynomial.polyval(t, spec.H)) * math.exp(-(t**spec.p_exp))

        x = float(l_max)
        val, _ = integrate.quad(f, x + 1, math.inf, epsabs=0.0, epsrel=1e-10, limit=200)
        tail = f(x + 1) + val
    else:
        tail = math.nan
    return partial, tail


def spectrum_from_params(params: dict) -> PowerSpectrum:
    """Build a spectrum from a flat parameter mapping (used by the CLI)."""
    variant = params.get("variant", "alpha_regular")
    if variant == "alpha_regular":
        if "alpha" not in params:
            raise ValidationError("missing", field="spectrum.alpha")
        alpha = float(params["alpha"])
        if not alpha > 2:
            raise ValidationError(
                f"alpha={alpha} violates α > 2 (the spectrum must satisfy the regularity condition)",
                field="spectrum.alpha",
            )
        g_label = str(params.get("g", "1"))
        return AlphaRegular(alpha=alpha, g=_parse_g(g_label), B=float(params.get("B", 2.0)), g_label=g_label)
    if variant == "exponential":
        H = params.get("H", "1")
        coeffs = tuple(float(c) for c in str(H).replace(",", " ").split())
        return Exponential(H=coeffs, p_exp=float(params.get("p_exp", 1.0)))
    if variant == "tabulated":
        if "file" not in params:
            raise ValidationError("tabulated spectrum needs a file", field="spectrum.file")
        return Tabulated.from_file(params["file"])
    raise ValidationError(f"unknown variant {variant!r}", field="spectrum.variant")


_G_NAMESPACE = {"np": np, "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "pi": np.pi}


def _parse_g(expr: str):
    """Turn a small arithmetic expression in ``u`` into a vectorized callable."""
    expr = expr.strip()
    if expr in ("", "1"):
        return _constant_one
    try:
        code = compile(expr, "<g(u)>", "eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse g(u) = {expr!r}: {exc.msg}", field="spectrum.g") from None
    bad = [n for n in code.co_names if n not in _G_NAMESPACE and n != "u"]
    if bad:
        raise ValidationError(f"g(u) may only use u and {sorted(_G_NAMESPACE)}; got {bad}", field="spectrum.g")

    def g(u):
        u = np.asarray(u, dtype=float)
        return np.asarray(eval(code, {"__builtins__": {}}, dict(_G_NAMESPACE, u=u)), dtype=float) * np.ones_like(u)

    return g
