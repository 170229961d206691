"""Gaussian isotropic fields from sampled harmonic coefficients, and their needlet coefficients.

Coefficients use the packed m-major layout: for ``0 <= m <= l <= l_max``
entry ``a_lm`` sits at ``m (2 l_max + 1 - m) / 2 + l``. Negative orders are
implied by ``a_{l,-m} = (-1)^m conj(a_lm)``, so every synthesized field is real.

Each replicate ``r`` draws from its own generator seeded by
``SeedSequence(seed, spawn_key=(r,))``; results never depend on how
replicates are batched or spread across threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cubature import CubatureGrid
from .errors import DegenerateError, DomainError, ValidationError
from .harmonics import FOUR_PI, SphericalPoint, legendre_series, normalized_legendre
from .kernels import NeedletKernel
from .spectra import PowerSpectrum

#: weight cutoff used for Monte Carlo band limits (``s > p + MC_CUTOFF``)
MC_CUTOFF = 12.0
#: replicates per synthesis batch; fixed so batching never changes results
BATCH = 16
_POINT_CHUNK_FLOATS = 20_000_000


def packed_size(l_max: int) -> int:
    return (l_max + 1) * (l_max + 2) // 2


def packed_index(l_max: int, l, m):
    return m * (2 * l_max + 1 - m) // 2 + l


def _packed_lm(l_max: int):
    """Arrays ``(l, m)`` for every packed slot."""
    m = np.concatenate([np.full(l_max + 1 - mm, mm) for mm in range(l_max + 1)])
    l = np.concatenate([np.arange(mm, l_max + 1) for mm in range(l_max + 1)])
    return l, m


@dataclass(frozen=True, eq=False)
class HarmonicCoefficients:
    l_max: int
    alm: np.ndarray = field(repr=False)

    def __post_init__(self):
        alm = np.asarray(self.alm, dtype=complex)
        if alm.shape != (packed_size(self.l_max),):
            raise ValidationError(f"expected {packed_size(self.l_max)} packed coefficients, got {alm.shape}", field="alm")
        if not np.all(np.isfinite(alm)):
            raise ValidationError("coefficients must be finite", field="alm")
        object.__setattr__(self, "alm", alm)

    def get(self, l: int, m: int) -> complex:
        if not (0 <= l <= self.l_max and abs(m) <= l):
            raise DomainError(f"(l={l}, m={m}) outside the coefficient table")
        a = self.alm[packed_index(self.l_max, l, abs(m))]
        return complex((-1) ** m * np.conj(a)) if m < 0 else complex(a)

    @classmethod
    def zeros(cls, l_max: int) -> "HarmonicCoefficients":
        return cls(l_max, np.zeros(packed_size(l_max), dtype=complex))

    def __add__(self, other: "HarmonicCoefficients") -> "HarmonicCoefficients":
        if other.l_max != self.l_max:
            raise ValidationError("coefficient tables differ in l_max", field="l_max")
        return HarmonicCoefficients(self.l_max, self.alm + other.alm)


def _spectrum_table(spectrum: PowerSpectrum, l_max: int) -> np.ndarray:
    """``C_l`` for ``l = 0 .. l_max`` with ``C_0 = 0``; zero beyond a tabulated range."""
    C = np.zeros(l_max + 1)
    top = l_max if spectrum.lmax is None else min(l_max, spectrum.lmax)
    if top >= 1:
        C[1 : top + 1] = spectrum.evaluate(np.arange(1, top + 1))
    return C


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replicate),)))


def _draw(sd_full: np.ndarray, sd_half: np.ndarray, is_m0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((2, sd_full.size))
    re = np.where(is_m0, sd_full * z[0], sd_half * z[0])
    im = np.where(is_m0, 0.0, sd_half * z[1])
    return re + 1j * im


class _Sampler:
    def __init__(self, spectrum: PowerSpectrum, l_max: int):
        if l_max < 1:
            raise ValidationError("l_max must be at least 1", field="l_max")
        self.l_max = l_max
        C = _spectrum_table(spectrum, l_max)
        l, m = _packed_lm(l_max)
        self.is_m0 = m == 0
        self.sd_full = np.sqrt(C[l])
        self.sd_half = np.sqrt(C[l] / 2.0)

    def one(self, seed: int, replicate: int) -> np.ndarray:
        return _draw(self.sd_full, self.sd_half, self.is_m0, replicate_rng(seed, replicate))

    def many(self, seed: int, replicates) -> np.ndarray:
        return np.stack([self.one(seed, r) for r in replicates])


def sample_alm(spectrum: PowerSpectrum, l_max: int, seed: int, replicate: int = 0) -> HarmonicCoefficients:
    """Gaussian ``a_lm`` with ``E|a_lm|^2 = C_l`` and ``a_00 = 0``.

    ``a_l0`` is real ``N(0, C_l)``; for ``m > 0`` the real and imaginary parts
    are independent ``N(0, C_l / 2)``.
    """
    return HarmonicCoefficients(l_max, _Sampler(spectrum, l_max).one(seed, replicate))


# ---------------------------------------------------------------------------
# synthesis at arbitrary points


def _filtered(alm: np.ndarray, l_max: int, lweights) -> np.ndarray:
    if lweights is None:
        return alm
    lw = np.asarray(lweights, dtype=float)
    if lw.shape != (l_max + 1,):
        raise ValidationError(f"need {l_max + 1} degree weights", field="lweights")
    l, _ = _packed_lm(l_max)
    return alm * lw[l]


def _synthesize_points(alm: np.ndarray, l_max: int, theta, phi, check_real: bool = True) -> np.ndarray:
    """Field values for a stack ``alm[..., packed]`` at points, full ``m`` sum."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    lead = alm.shape[:-1]
    A = alm.reshape(-1, alm.shape[-1])
    l, m = _packed_lm(l_max)
    out = np.empty((A.shape[0], theta.size))
    step = max(1, _POINT_CHUNK_FLOATS // ((l_max + 1) ** 2))
    for lo in range(0, theta.size, step):
        th, ph = theta[lo : lo + step], phi[lo : lo + step]
        lam = normalized_legendre(l_max, np.cos(th), np.sin(th))[l, m]  # (packed, P)
        Y = lam * np.exp(1j * np.outer(m, ph))
        pos = A @ Y
        # negative orders: a_{l,-m} Y_{l,-m} = conj(a_lm Y_lm) for m > 0
        neg = np.conj(A[:, m > 0] @ Y[m > 0])
        val = pos + neg
        if check_real:
            scale = max(1.0, float(np.max(np.abs(val.real), initial=0.0)))
            if np.max(np.abs(val.imag), initial=0.0) > 1e-10 * scale:
                raise ArithmeticError("synthesized field has a non-negligible imaginary part")
        out[:, lo : lo + step] = val.real
    return out.reshape(lead + (theta.size,))


def synthesize_field(coeffs: HarmonicCoefficients, points, lweights=None) -> np.ndarray:
    """``T(x) = sum_lm a_lm Y_lm(x)`` at a sequence of points (or a grid)."""
    theta, phi = _point_arrays(points)
    alm = _filtered(coeffs.alm, coeffs.l_max, lweights)
    return _synthesize_points(alm, coeffs.l_max, theta, phi)


def _point_arrays(points):
    if isinstance(points, CubatureGrid):
        return points.theta, points.phi
    if isinstance(points, SphericalPoint):
        points = [points]
    pts = list(points)
    return np.array([p.theta for p in pts], dtype=float), np.array([p.phi for p in pts], dtype=float)


# ---------------------------------------------------------------------------
# synthesis on product grids


class RingSynthesizer:
    """Fast synthesis on a :class:`CubatureGrid` for a fixed ``l_max``.

    Per-order Legendre blocks are tabulated on the northern rings only and
    reflected with ``lambda_lm(-x) = (-1)^(l+m) lambda_lm(x)``; the longitude
    sum is one inverse FFT per ring with orders folded modulo ``n_phi``.
    """

    def __init__(self, grid: CubatureGrid, l_max: int):
        self.grid = grid
        self.l_max = l_max
        n = grid.n_theta
        self.n_north = (n + 1) // 2
        x = grid.ring_cos[: self.n_north]
        lam = normalized_legendre(l_max, x, np.sqrt(np.maximum(1.0 - x * x, 0.0)))
        self.blocks = []
        for m in range(l_max + 1):
            blk = lam[m:, m, :]
            self.blocks.append((np.ascontiguousarray(blk[0::2]), np.ascontiguousarray(blk[1::2])))
        del lam
        self.offsets = [packed_index(l_max, m, m) for m in range(l_max + 2)]
        self.offsets[-1] = packed_size(l_max)
        n_phi = grid.n_phi
        m = np.arange(l_max + 1)
        self.fold_pos = m % n_phi
        self.fold_neg = (-m[1:]) % n_phi

    def synthesize(self, alm: np.ndarray, lweights=None) -> np.ndarray:
        """Fields for a stack ``alm[R, packed]``, shape ``(R, grid.size)``."""
        alm = np.atleast_2d(alm)
        R = alm.shape[0]
        A = _filtered(alm, self.l_max, lweights)
        n_theta, nN, n_phi = self.grid.n_theta, self.n_north, self.grid.n_phi
        F = np.zeros((R, n_theta, self.l_max + 1), dtype=complex)
        for m in range(self.l_max + 1):
            seg = A[:, self.offsets[m] : self.offsets[m + 1]]
            ev, od = self.blocks[m]
            se, so = seg[:, 0::2], seg[:, 1::2]
            E = np.concatenate([se.real, se.imag]) @ ev
            O = np.concatenate([so.real, so.imag]) @ od if od.shape[0] else np.zeros_like(E)
            north = (E[:R] + O[:R]) + 1j * (E[R:] + O[R:])
            south = (E[:R] - O[:R]) + 1j * (E[R:] - O[R:])
            F[:, :nN, m] = north
            F[:, nN:, m] = south[:, : n_theta - nN][:, ::-1]
        H = np.zeros((R, n_theta, n_phi), dtype=complex)
        np.add.at(H, (slice(None), slice(None), self.fold_pos), F)
        np.add.at(H, (slice(None), slice(None), self.fold_neg), np.conj(F[:, :, 1:]))
        T = np.fft.ifft(H, axis=-1).real * n_phi
        return T.reshape(R, n_theta * n_phi)


# ---------------------------------------------------------------------------
# needlet coefficients


@dataclass(frozen=True, eq=False)
class CoefficientField:
    grid: CubatureGrid
    values: np.ndarray = field(repr=False)
    kernel: dict
    j: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise ValidationError(f"{vals.size} values for a grid of {self.grid.size} points", field="values")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("coefficients must be finite", field="values")
        object.__setattr__(self, "values", vals)

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights


def kernel_weights(kernel: NeedletKernel, j, l_max: int) -> np.ndarray:
    w = np.asarray(kernel.weight(np.arange(l_max + 1), j), dtype=float)
    w[0] = 0.0
    return w


def _check_band(kernel: NeedletKernel, j, l_max: int, cutoff):
    need = kernel.truncation_degree(j, cutoff)
    if l_max < need:
        raise ValidationError(
            f"coefficient l_max={l_max} is below the kernel truncation degree {need} at j={j}", field="l_max"
        )


def needlet_coefficients_harmonic(
    coeffs: HarmonicCoefficients, kernel: NeedletKernel, grid: CubatureGrid, j, cutoff=None
) -> CoefficientField:
    """``beta_jk = sqrt(lambda_jk) sum_l w_j(l) sum_m a_lm Y_lm(xi_jk)`` at every grid point."""
    _check_band(kernel, j, coeffs.l_max, cutoff)
    syn = RingSynthesizer(grid, coeffs.l_max)
    vals = syn.synthesize(coeffs.alm[None, :], kernel_weights(kernel, j, coeffs.l_max))[0]
    return CoefficientField(grid, np.sqrt(grid.weights) * vals, kernel.describe(), j)


def needlet_profile_series(kernel: NeedletKernel, j, degree: int) -> np.ndarray:
    """Legendre coefficients ``w_j(l) (2l+1) / (4 pi)`` for ``l <= degree``."""
    l = np.arange(degree + 1)
    return kernel_weights(kernel, j, degree) * (2 * l + 1) / FOUR_PI


def needlet_coefficients_quadrature(
    values, fine_grid: CubatureGrid, kernel: NeedletKernel, j, grid: CubatureGrid, field_lmax: int | None = None,
    chunk: int = 64,
) -> CoefficientField:
    """``beta_jk = sqrt(lambda_jk) int T(x) psi_jk(x) dx`` by cubature on ``fine_grid``.

    ``psi_jk(x) = sum_l w_j(l) (2l+1)/(4 pi) P_l(<x, xi_jk>)`` is summed up to
    ``field_lmax`` when the field is known to be band-limited there, and up to
    the kernel truncation degree otherwise. The fine grid must integrate the
    product ``T psi`` exactly.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (fine_grid.size,):
        raise ValidationError(f"{values.size} field values for {fine_grid.size} fine-grid points", field="values")
    degree = kernel.truncation_degree(j) if field_lmax is None else int(field_lmax)
    band = degree if field_lmax is None else field_lmax
    if fine_grid.exact_degree <= band + degree:
        raise ValidationError(
            f"fine grid exact below degree {fine_grid.exact_degree}; needs more than {band + degree}",
            field="fine_grid.exact_degree",
        )
    coef = needlet_profile_series(kernel, j, degree)
    X = fine_grid.unit_vectors()
    wT = fine_grid.weights * values
    xi = grid.unit_vectors()
    out = np.empty(grid.size)
    for lo in range(0, grid.size, chunk):
        c = np.clip(xi[lo : lo + chunk] @ X.T, -1.0, 1.0)
        out[lo : lo + chunk] = legendre_series(coef, c) @ wT
    return CoefficientField(grid, np.sqrt(grid.weights) * out, kernel.describe(), j)


# ---------------------------------------------------------------------------
# Monte Carlo drivers


def default_mc_lmax(B: float, j_max: float) -> int:
    return int(min(math.ceil(4.0 * B**j_max), 4096))


def _batches(R: int):
    return [range(lo, min(lo + BATCH, R)) for lo in range(0, R, BATCH)]


def simulate_coefficients(
    spectrum: PowerSpectrum,
    kernel: NeedletKernel,
    j,
    grid: CubatureGrid,
    replicates: int,
    seed: int,
    l_max: int | None = None,
    threads: int = 1,
    reduce=None,
    cutoff: float | None = MC_CUTOFF,
):
    """Needlet coefficients on ``grid`` for ``replicates`` independent fields.

    Returns an ``(R, N)`` array, or, when ``reduce`` is given, the stacked
    per-replicate results of ``reduce(beta_batch) -> (batch, ...)`` in
    replicate order, which keeps memory bounded for large grids.
    """
    l_max = default_mc_lmax(kernel.B, j) if l_max is None else int(l_max)
    _check_band(kernel, j, l_max, cutoff)
    sampler = _Sampler(spectrum, l_max)
    syn = RingSynthesizer(grid, l_max)
    lw = kernel_weights(kernel, j, l_max)
    root_w = np.sqrt(grid.weights)

    def run(rows):
        alm = sampler.many(seed, rows)
        beta = syn.synthesize(alm, lw) * root_w
        return beta if reduce is None else np.asarray(reduce(beta))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        parts = list(ex.map(run, _batches(replicates)))
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class MCCorrelation:
    corr: float
    se: float
    replicates: int
    l_max: int
    betas: np.ndarray = field(repr=False, compare=False)


def pearson_jackknife(x, y) -> tuple[float, float]:
    """Pearson correlation and its leave-one-out jackknife standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise DegenerateError("need at least three samples")
    sx, sy = x.sum(), y.sum()
    sxx, syy, sxy = (x * x).sum(), (y * y).sum(), (x * y).sum()

    def corr(n_, sx_, sy_, sxx_, syy_, sxy_):
        vx = sxx_ - sx_ * sx_ / n_
        vy = syy_ - sy_ * sy_ / n_
        if np.any(vx <= tiny) or np.any(vy <= tiny):
            raise DegenerateError("sample variance underflows; correlation undefined")
        return (sxy_ - sx_ * sy_ / n_) / np.sqrt(vx * vy)

    tiny = np.finfo(float).tiny * 1e6
    r = corr(n, sx, sy, sxx, syy, sxy)
    loo = corr(n - 1, sx - x, sy - y, sxx - x * x, syy - y * y, sxy - x * y)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return float(np.clip(r, -1.0, 1.0)), se


def monte_carlo_correlation(
    spectrum: PowerSpectrum,
    kernel: NeedletKernel,
    j,
    points,
    replicates: int,
    seed: int,
    l_max: int | None = None,
    threads: int = 1,
    cutoff: float | None = MC_CUTOFF,
) -> MCCorrelation:
    """Empirical correlation of ``beta_j`` at two points over independent fields.

    The cubature factor ``sqrt(lambda)`` is omitted since it cancels.
    """
    if replicates < 100:
        raise ValidationError(f"need at least 100 replicates, got {replicates}", field="replicates")
    p1, p2 = points
    l_max = default_mc_lmax(kernel.B, j) if l_max is None else int(l_max)
    _check_band(kernel, j, l_max, cutoff)
    sampler = _Sampler(spectrum, l_max)
    theta = np.array([p1.theta, p2.theta])
    phi = np.array([p1.phi, p2.phi])
    l, m = _packed_lm(l_max)
    lam = normalized_legendre(l_max, np.cos(theta), np.sin(theta))[l, m]
    Y = lam * np.exp(1j * np.outer(m, phi))
    # real field: sum over +-m equals a_l0 Y_l0 + 2 Re sum_{m>0} a_lm Y_lm
    V = Y * (kernel_weights(kernel, j, l_max)[l] * np.where(m == 0, 1.0, 2.0))[:, None]

    def run(rows):
        return (sampler.many(seed, rows) @ V).real

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        betas = np.concatenate(list(ex.map(run, _batches(replicates))), axis=0)
    r, se = pearson_jackknife(betas[:, 0], betas[:, 1])
    return MCCorrelation(r, se, replicates, l_max, betas)


def write_beta_csv(path, betas, header_comment: str | None = None) -> None:
    """Stream replicate-level coefficients as ``replicate,k,beta`` rows."""
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["replicate", "k", "beta"])
        for r, row in enumerate(betas):
            for k, b in enumerate(row):
                w.writerow([r, k, repr(float(b))])
