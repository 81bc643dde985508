"""
Maximum mean discrepancy with a Gaussian kernel
"""
from typing import Optional
import numpy as np
from scipy.spatial.distance import cdist
from helpers.errors import ArgumentError
from logger.logger import logger
from models.base_model import NumericModel

MEDIAN_SUBSAMPLE = 1000


class MMDTestResult(NumericModel):
    statistic: float
    null_quantile: float
    p_value: float
    bandwidth: float
    permutations: int

    def rejects(self, level: float) -> bool:
        return self.p_value < level


def _column(xs) -> np.ndarray:
    return np.asarray(xs, dtype=float).reshape(-1, 1)


def _kernel(a: np.ndarray, b: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * bandwidth**2))


def _block_sum(a: np.ndarray, b: np.ndarray, bandwidth: float, block_size: int) -> float:
    total = 0.0
    for start in range(0, a.shape[0], block_size):
        total += float(_kernel(a[start : start + block_size], b, bandwidth).sum())
    return total


def median_bandwidth(xs, ys) -> float:
    """Median pairwise distance of the pooled sample (first MEDIAN_SUBSAMPLE points of each side)."""
    pooled = np.concatenate([_column(xs)[:MEDIAN_SUBSAMPLE], _column(ys)[:MEDIAN_SUBSAMPLE]])
    distances = cdist(pooled, pooled, "euclidean")
    upper = distances[np.triu_indices_from(distances, k=1)]
    bandwidth = float(np.median(upper)) if upper.size else 1.0
    return bandwidth if bandwidth > 0 else 1.0


def mmd_sq(
    xs,
    ys,
    bandwidth: Optional[float] = None,
    biased: bool = False,
    block_size: int = 2048,
) -> float:
    """
    Squared MMD between two samples, k(a, b) = exp(-(a - b)^2 / (2 h^2)).

    The default is the unbiased U-statistic, which can be slightly negative;
    `biased=True` gives the V-statistic. The bandwidth defaults to the median
    heuristic.

    Raises:
        ArgumentError: empty samples, fewer than two points per side for the
            U-statistic, or a non-positive bandwidth
    """
    x, y = _column(xs), _column(ys)
    n, m = x.shape[0], y.shape[0]
    if n == 0 or m == 0:
        raise ArgumentError("MMD needs two non-empty samples")
    if not biased and (n < 2 or m < 2):
        raise ArgumentError("the unbiased MMD estimate needs at least two points per sample")
    if bandwidth is None:
        bandwidth = median_bandwidth(x, y)
    if not bandwidth > 0:
        raise ArgumentError(f"bandwidth must be positive, got {bandwidth!r}")

    kxx = _block_sum(x, x, bandwidth, block_size)
    kyy = _block_sum(y, y, bandwidth, block_size)
    kxy = _block_sum(x, y, bandwidth, block_size)
    if biased:
        return kxx / n**2 + kyy / m**2 - 2.0 * kxy / (n * m)
    # the kernel diagonal is exactly 1
    return (kxx - n) / (n * (n - 1)) + (kyy - m) / (m * (m - 1)) - 2.0 * kxy / (n * m)


def _u_statistic(kernel: np.ndarray, first: np.ndarray, second: np.ndarray) -> float:
    n, m = first.size, second.size
    kxx = kernel[np.ix_(first, first)].sum() - n
    kyy = kernel[np.ix_(second, second)].sum() - m
    kxy = kernel[np.ix_(first, second)].sum()
    return float(kxx / (n * (n - 1)) + kyy / (m * (m - 1)) - 2.0 * kxy / (n * m))


def mmd_permutation_test(
    xs,
    ys,
    bandwidth: Optional[float] = None,
    permutations: int = 200,
    rng: Optional[np.random.Generator] = None,
    max_samples: int = 1000,
    quantile: float = 0.95,
) -> MMDTestResult:
    """
    Permutation two-sample test on the unbiased MMD^2.

    Each side is subsampled to `max_samples` points; the pooled kernel matrix
    is built once and relabelled for every permutation.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    x, y = _column(xs), _column(ys)
    if x.shape[0] > max_samples:
        x = x[rng.choice(x.shape[0], max_samples, replace=False)]
    if y.shape[0] > max_samples:
        y = y[rng.choice(y.shape[0], max_samples, replace=False)]
    if bandwidth is None:
        bandwidth = median_bandwidth(x, y)
    pooled = np.concatenate([x, y])
    kernel = _kernel(pooled, pooled, bandwidth)
    n = x.shape[0]
    index = np.arange(pooled.shape[0])
    statistic = _u_statistic(kernel, index[:n], index[n:])
    null = np.empty(permutations)
    for i in range(permutations):
        shuffled = rng.permutation(index)
        null[i] = _u_statistic(kernel, shuffled[:n], shuffled[n:])
    p_value = float((1 + np.sum(null >= statistic)) / (1 + permutations))
    logger.debug(f"MMD permutation test: statistic={statistic:.3e}, p={p_value:.3f}")
    return MMDTestResult(
        statistic=statistic,
        null_quantile=float(np.quantile(null, quantile)),
        p_value=p_value,
        bandwidth=float(bandwidth),
        permutations=permutations,
    )


def gaussian_mmd_sq(mean_1: float, std_1: float, mean_2: float, std_2: float, bandwidth: float) -> float:
    """Population MMD^2 between two Gaussians under the Gaussian kernel."""
    h2 = bandwidth**2

    def expected_kernel(mean_gap: float, variance: float) -> float:
        spread = h2 + variance
        return float(np.sqrt(h2 / spread) * np.exp(-(mean_gap**2) / (2.0 * spread)))

    return (
        expected_kernel(0.0, 2 * std_1**2)
        + expected_kernel(0.0, 2 * std_2**2)
        - 2.0 * expected_kernel(mean_1 - mean_2, std_1**2 + std_2**2)
    )
