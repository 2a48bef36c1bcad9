"""Hot-path kernels for the fusion scan, numba-jitted when available.

Both implementations compute, for one query Gaussian against a set of
candidate rows, the Hellinger distance derived from the Bhattacharyya
distance in log-determinant form:

    B = (1/8) d' S^-1 d + (1/2)(log det S - (log det A + log det B)/2)
    H = sqrt(1 - exp(-B))            with S = (A + B)/2

A candidate pair whose averaged covariance has determinant below det_min is
reported as +inf (unmergeable); a candidate with log-determinant -inf (a
degenerate covariance) comes out as 1.0 through the same arithmetic, which
any merge threshold in (0,1) rejects. The determinant uses the same
first-row cofactor expansion as graph.det3x3 so that identical inputs give
bit-identical values to the stored log-determinants (this is what makes the
distance exactly 0.0 for identical Gaussians).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without the extra
    HAVE_NUMBA = False


def _merge_moments_py(w_a, mean_a, cov_a, w_b, mean_b, cov_b, out_mean, out_cov):
    """Numpy fallback; outputs may alias inputs, so both are computed first."""
    w = w_a + w_b
    d = mean_a - mean_b
    mean = (w_a * mean_a + w_b * mean_b) / w
    cov = (w_a * cov_a + w_b * cov_b) / w + (w_a * w_b / (w * w)) * np.outer(d, d)
    out_mean[:] = mean
    out_cov[:] = 0.5 * (cov + cov.T)


def _hellinger_scan_py(mean, cov, logdet, means, covs, logdets, ids, det_min, out):
    """Vectorized numpy fallback; same arithmetic as the jitted loop."""
    if len(ids) == 0:
        return
    s = 0.5 * (covs[ids] + cov)
    d = means[ids] - mean
    s00 = s[:, 0, 0]; s01 = s[:, 0, 1]; s02 = s[:, 0, 2]
    s10 = s[:, 1, 0]; s11 = s[:, 1, 1]; s12 = s[:, 1, 2]
    s20 = s[:, 2, 0]; s21 = s[:, 2, 1]; s22 = s[:, 2, 2]
    c00 = s11 * s22 - s12 * s21
    c01 = s10 * s22 - s12 * s20
    c02 = s10 * s21 - s11 * s20
    det = s00 * c00 - s01 * c01 + s02 * c02
    bad = ~(det > det_min)
    det_safe = np.where(bad, 1.0, det)
    # adjugate entries for the symmetric solve d' S^-1 d = d' adj(S) d / det
    a00 = c00
    a11 = s00 * s22 - s02 * s20
    a22 = s00 * s11 - s01 * s10
    a01 = -(s01 * s22 - s02 * s21)
    a02 = s01 * s12 - s02 * s11
    a12 = -(s00 * s12 - s02 * s10)
    d0, d1, d2 = d[:, 0], d[:, 1], d[:, 2]
    quad = (
        a00 * d0 * d0 + a11 * d1 * d1 + a22 * d2 * d2
        + 2.0 * (a01 * d0 * d1 + a02 * d0 * d2 + a12 * d1 * d2)
    )
    b = 0.125 * quad / det_safe + 0.5 * (np.log(det_safe) - 0.5 * (logdet + logdets[ids]))
    h = np.sqrt(np.maximum(1.0 - np.exp(-b), 0.0))
    out[: len(ids)] = np.where(bad, np.inf, h)


def _best_match_py(
    mean, cov, logdet,
    a_means, a_covs, a_logdets, a_ids,
    b_means, b_covs, b_logdets, b_ids,
    det_min,
):
    """Closest candidate in each of two sets: (idx_a, dist_a, idx_b, dist_b).

    Index is the position within the ids array, -1 with distance +inf when
    the set is empty or entirely unmergeable.
    """
    bi_a, bd_a = -1, np.inf
    if len(a_ids):
        dist = np.empty(len(a_ids))
        _hellinger_scan_py(mean, cov, logdet, a_means, a_covs, a_logdets, a_ids, det_min, dist)
        k = int(dist.argmin())
        if dist[k] < np.inf:
            bi_a, bd_a = k, float(dist[k])
    bi_b, bd_b = -1, np.inf
    if len(b_ids):
        dist = np.empty(len(b_ids))
        _hellinger_scan_py(mean, cov, logdet, b_means, b_covs, b_logdets, b_ids, det_min, dist)
        k = int(dist.argmin())
        if dist[k] < np.inf:
            bi_b, bd_b = k, float(dist[k])
    return bi_a, bd_a, bi_b, bd_b


if HAVE_NUMBA:

    @njit(cache=True, fastmath=False)
    def _hd_pair_nb(mean, cov, logdet, means, covs, logdets, j, det_min):
        s00 = 0.5 * (cov[0, 0] + covs[j, 0, 0])
        s01 = 0.5 * (cov[0, 1] + covs[j, 0, 1])
        s02 = 0.5 * (cov[0, 2] + covs[j, 0, 2])
        s10 = 0.5 * (cov[1, 0] + covs[j, 1, 0])
        s11 = 0.5 * (cov[1, 1] + covs[j, 1, 1])
        s12 = 0.5 * (cov[1, 2] + covs[j, 1, 2])
        s20 = 0.5 * (cov[2, 0] + covs[j, 2, 0])
        s21 = 0.5 * (cov[2, 1] + covs[j, 2, 1])
        s22 = 0.5 * (cov[2, 2] + covs[j, 2, 2])
        c00 = s11 * s22 - s12 * s21
        c01 = s10 * s22 - s12 * s20
        c02 = s10 * s21 - s11 * s20
        det = s00 * c00 - s01 * c01 + s02 * c02
        if not (det > det_min):
            return np.inf
        a00 = c00
        a11 = s00 * s22 - s02 * s20
        a22 = s00 * s11 - s01 * s10
        a01 = -(s01 * s22 - s02 * s21)
        a02 = s01 * s12 - s02 * s11
        a12 = -(s00 * s12 - s02 * s10)
        d0 = mean[0] - means[j, 0]
        d1 = mean[1] - means[j, 1]
        d2 = mean[2] - means[j, 2]
        quad = (
            a00 * d0 * d0 + a11 * d1 * d1 + a22 * d2 * d2
            + 2.0 * (a01 * d0 * d1 + a02 * d0 * d2 + a12 * d1 * d2)
        )
        b = 0.125 * quad / det + 0.5 * (np.log(det) - 0.5 * (logdet + logdets[j]))
        x = 1.0 - np.exp(-b)
        return np.sqrt(x) if x > 0.0 else 0.0

    @njit(cache=True, fastmath=False)
    def _hellinger_scan_nb(mean, cov, logdet, means, covs, logdets, ids, det_min, out):
        for k in range(ids.shape[0]):
            out[k] = _hd_pair_nb(mean, cov, logdet, means, covs, logdets, ids[k], det_min)

    @njit(cache=True, fastmath=False)
    def _best_match_nb(
        mean, cov, logdet,
        a_means, a_covs, a_logdets, a_ids,
        b_means, b_covs, b_logdets, b_ids,
        det_min,
    ):
        bi_a = -1
        bd_a = np.inf
        for k in range(a_ids.shape[0]):
            h = _hd_pair_nb(mean, cov, logdet, a_means, a_covs, a_logdets, a_ids[k], det_min)
            if h < bd_a:
                bd_a = h
                bi_a = k
        bi_b = -1
        bd_b = np.inf
        for k in range(b_ids.shape[0]):
            h = _hd_pair_nb(mean, cov, logdet, b_means, b_covs, b_logdets, b_ids[k], det_min)
            if h < bd_b:
                bd_b = h
                bi_b = k
        return bi_a, bd_a, bi_b, bd_b

    @njit(cache=True, fastmath=False)
    def _merge_moments_nb(w_a, mean_a, cov_a, w_b, mean_b, cov_b, out_mean, out_cov):
        # inputs are read into locals first so aliased outputs are safe;
        # operation order mirrors the numpy fallback exactly
        w = w_a + w_b
        k = w_a * w_b / (w * w)
        m0 = mean_a[0]; m1 = mean_a[1]; m2 = mean_a[2]
        n0 = mean_b[0]; n1 = mean_b[1]; n2 = mean_b[2]
        d0 = m0 - n0
        d1 = m1 - n1
        d2 = m2 - n2
        c00 = (w_a * cov_a[0, 0] + w_b * cov_b[0, 0]) / w + k * (d0 * d0)
        c01 = (w_a * cov_a[0, 1] + w_b * cov_b[0, 1]) / w + k * (d0 * d1)
        c02 = (w_a * cov_a[0, 2] + w_b * cov_b[0, 2]) / w + k * (d0 * d2)
        c10 = (w_a * cov_a[1, 0] + w_b * cov_b[1, 0]) / w + k * (d1 * d0)
        c11 = (w_a * cov_a[1, 1] + w_b * cov_b[1, 1]) / w + k * (d1 * d1)
        c12 = (w_a * cov_a[1, 2] + w_b * cov_b[1, 2]) / w + k * (d1 * d2)
        c20 = (w_a * cov_a[2, 0] + w_b * cov_b[2, 0]) / w + k * (d2 * d0)
        c21 = (w_a * cov_a[2, 1] + w_b * cov_b[2, 1]) / w + k * (d2 * d1)
        c22 = (w_a * cov_a[2, 2] + w_b * cov_b[2, 2]) / w + k * (d2 * d2)
        out_mean[0] = (w_a * m0 + w_b * n0) / w
        out_mean[1] = (w_a * m1 + w_b * n1) / w
        out_mean[2] = (w_a * m2 + w_b * n2) / w
        out_cov[0, 0] = 0.5 * (c00 + c00)
        out_cov[0, 1] = 0.5 * (c01 + c10)
        out_cov[0, 2] = 0.5 * (c02 + c20)
        out_cov[1, 0] = 0.5 * (c10 + c01)
        out_cov[1, 1] = 0.5 * (c11 + c11)
        out_cov[1, 2] = 0.5 * (c12 + c21)
        out_cov[2, 0] = 0.5 * (c20 + c02)
        out_cov[2, 1] = 0.5 * (c21 + c12)
        out_cov[2, 2] = 0.5 * (c22 + c22)

    hellinger_scan = _hellinger_scan_nb
    best_match = _best_match_nb
    merge_moments_into = _merge_moments_nb
else:
    hellinger_scan = _hellinger_scan_py
    best_match = _best_match_py
    merge_moments_into = _merge_moments_py
