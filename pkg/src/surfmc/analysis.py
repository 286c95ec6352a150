"""Post-run statistics: autocovariance, autocorrelation time, marginal checks.

The autocovariance estimator divides the lag-t sum by N - t.  The FFT path
computes the same sums in O(N log N); note the raw FFT convolution carries an
implicit 1/N normalization that has to be undone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ConstraintModel
from .moves import SamplerConfig


class DegenerateSeries(Exception):
    """The input series is constant, so normalized autocovariances are undefined."""


class WindowNotFound(Exception):
    """No truncation window satisfied the self-consistency rule; series too short."""


@dataclass
class AutocovarianceResult:
    covariances: np.ndarray  # C_0 .. C_{max_lag}
    normalized: np.ndarray   # C_t / C_0

    def __len__(self) -> int:
        return len(self.covariances)


def autocovariance(series, max_lag: int | None = None) -> AutocovarianceResult:
    """Sample autocovariances of a scalar series for lags 0 .. max_lag.

    Mean-subtracted, computed with a zero-padded FFT so the circular
    convolution reproduces the plain lagged sums, then each lag-t sum is
    divided by N - t.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("series must be one-dimensional with at least 2 entries")
    n = len(x)
    if max_lag is None:
        max_lag = n - 1
    max_lag = min(max_lag, n - 1)
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    sums = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    cov = sums / (n - np.arange(max_lag + 1))
    if cov[0] <= 0.0:
        raise DegenerateSeries("constant series has no autocovariance structure")
    return AutocovarianceResult(covariances=cov, normalized=cov / cov[0])


@dataclass
class IactResult:
    tau: float
    window: int
    n_eff: float


def integrated_autocorrelation_time(series, window_constant: float = 5.0) -> IactResult:
    """Integrated autocorrelation time with a self-consistent truncation window.

    tau_hat(M) = 1 + 2 sum_{t=1}^{M} C_t / C_0, truncated at the smallest M
    with M >= window_constant * tau_hat(M).  Raises WindowNotFound when no
    window below N/2 qualifies.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 100:
        raise ValueError("need at least 100 samples to estimate the autocorrelation time")
    half = n // 2
    acov = autocovariance(x, max_lag=half)
    rho = acov.normalized
    tau_by_window = 1.0 + 2.0 * np.cumsum(rho[1:half])  # index k -> window M = k + 1
    windows = np.arange(1, half)
    satisfied = windows >= window_constant * tau_by_window
    if not satisfied.any():
        raise WindowNotFound(
            f"no window below {half} satisfies M >= {window_constant} * tau(M)"
        )
    idx = int(np.argmax(satisfied))
    tau = max(float(tau_by_window[idx]), 1.0)
    return IactResult(tau=tau, window=int(windows[idx]), n_eff=n / tau)


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint-rule grid over a rectangle in the last two coordinates."""

    lo: tuple  # (x2_lo, x3_lo)
    hi: tuple  # (x2_hi, x3_hi)
    n: tuple   # (n2, n3)

    def __post_init__(self):
        if len(self.lo) != 2 or len(self.hi) != 2 or len(self.n) != 2:
            raise ValueError("grid is a rectangle in two coordinates")
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise ValueError("grid bounds must satisfy lo < hi")
        if min(self.n) < 2:
            raise ValueError("need at least 2 cells per axis")

    @property
    def cell_area(self) -> float:
        return (
            (self.hi[0] - self.lo[0]) / self.n[0]
            * (self.hi[1] - self.lo[1]) / self.n[1]
        )

    def midpoints(self):
        m2 = self.lo[0] + (np.arange(self.n[0]) + 0.5) * (self.hi[0] - self.lo[0]) / self.n[0]
        m3 = self.lo[1] + (np.arange(self.n[1]) + 0.5) * (self.hi[1] - self.lo[1]) / self.n[1]
        return m2, m3

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return QuadratureGrid(self.lo, self.hi, (self.n[0] * factor, self.n[1] * factor))

    @classmethod
    def auto(
        cls, model: ConstraintModel, config: SamplerConfig, n: tuple | None = None
    ) -> "QuadratureGrid":
        """Rectangle from the model's bounding box inflated by 6 epsilon.

        The default resolution targets a cell size of epsilon / 4 so the
        near-surface Gaussian layer is resolved, capped to keep grids tame.
        """
        box = model.bounding_box()
        if box is None:
            raise ValueError("model has no bounding box; provide an explicit grid")
        lo, hi = box
        pad = 6.0 * config.epsilon
        lo2, lo3 = lo[1] - pad, lo[2] - pad
        hi2, hi3 = hi[1] + pad, hi[2] + pad
        if n is None:
            target = config.epsilon / 4.0
            n2 = int(min(max(math.ceil((hi2 - lo2) / target), 100), 1600))
            n3 = int(min(max(math.ceil((hi3 - lo3) / target), 100), 1600))
            n = (n2, n3)
        return cls((lo2, lo3), (hi2, hi3), tuple(n))


def marginal_density_x1(
    model: ConstraintModel,
    config: SamplerConfig,
    x1: float,
    grid: QuadratureGrid,
) -> float:
    """Unnormalized first-coordinate marginal of the soft target.

    Midpoint-rule double integral of exp(-|q|^2 / 2 eps^2) over the grid's
    rectangle in the remaining two coordinates.
    """
    if model.ambient_dim != 3:
        raise ValueError("marginal quadrature assumes a three-dimensional ambient space")
    m2, m3 = grid.midpoints()
    pts = np.empty((len(m2), len(m3), 3))
    pts[..., 0] = x1
    pts[..., 1] = m2[:, None]
    pts[..., 2] = m3[None, :]
    q = model.evaluate(pts)
    u = (q * q).sum(axis=-1)
    np.divide(u, -2.0 * config.epsilon**2, out=u)
    np.exp(u, out=u)
    return float(u.sum()) * grid.cell_area


@dataclass
class BinRatioReport:
    """Histogram counts compared against the quadrature marginal, bin by bin.

    ratio[i] = (count_i / N) / (pdf_i * width_i); for a correct sampler the
    ratios agree across bins (they all estimate the same normalization
    constant).  stderr holds the Poisson relative error ratio / sqrt(count);
    empty bins are flagged instead of failing.
    """

    edges: np.ndarray
    centers: np.ndarray
    counts: np.ndarray
    pdf: np.ndarray
    ratio: np.ndarray
    stderr: np.ndarray
    n_samples: int

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0

    def __len__(self) -> int:
        return len(self.centers)


def bin_ratio_report(
    samples_x1,
    bins,
    model: ConstraintModel,
    config: SamplerConfig,
    grid: QuadratureGrid | None = None,
    trim: float = 0.005,
) -> BinRatioReport:
    """Bin the first-coordinate samples and compare against the marginal.

    bins may be an integer (that many equal-width bins over the trimmed
    central sample range) or an explicit array of edges.
    """
    x = np.asarray(samples_x1, dtype=float)
    n = len(x)
    if n < 1:
        raise ValueError("no samples given")
    if np.isscalar(bins) or np.ndim(bins) == 0:
        lo, hi = np.quantile(x, [trim, 1.0 - trim])
        if not lo < hi:
            raise ValueError("sample range is degenerate")
        edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, _ = np.histogram(x, edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    if grid is None:
        grid = QuadratureGrid.auto(model, config)
    pdf = np.array([marginal_density_x1(model, config, c, grid) for c in centers])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (counts / n) / (pdf * widths)
        stderr = np.where(counts > 0, ratio / np.sqrt(np.maximum(counts, 1)), np.nan)
    return BinRatioReport(
        edges=edges,
        centers=centers,
        counts=counts,
        pdf=pdf,
        ratio=ratio,
        stderr=stderr,
        n_samples=n,
    )
