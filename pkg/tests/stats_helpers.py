"""Goodness-of-fit helpers shared by the statistical tests."""

import numpy as np
from scipy import stats


def _merge_bins(observed, expected, min_expected=5.0):
    """Merges adjacent bins until every expected count reaches ``min_expected``."""
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp:
            obs[-1] += o_acc
            exp[-1] += e_acc
        else:
            obs.append(o_acc)
            exp.append(e_acc)
    return np.array(obs), np.array(exp)


def chisquare_pmf(samples, pmf, lo=None, hi=None):
    """Chi-square p-value of integer samples against a pmf callable.

    Values outside ``[lo, hi]`` are pooled into the two edge bins, with the
    pmf's tail mass assigned accordingly.
    """
    samples = np.rint(np.asarray(samples, dtype=float)).astype(np.int64).reshape(-1)
    lo = int(samples.min()) if lo is None else lo
    hi = int(samples.max()) if hi is None else hi
    k = np.arange(lo, hi + 1)
    probs = np.asarray(pmf(k), dtype=float)
    clipped = np.clip(samples, lo, hi)
    observed = np.bincount(clipped - lo, minlength=len(k)).astype(float)
    tail = max(0.0, 1.0 - probs.sum())
    # put the missing tail mass at the side where the clipped samples landed
    below = np.mean(samples < lo)
    above = np.mean(samples > hi)
    if below + above > 0:
        probs[0] += tail * below / (below + above)
        probs[-1] += tail * above / (below + above)
    else:
        probs[-1] += tail
    expected = probs / probs.sum() * samples.size
    obs, exp = _merge_bins(observed, expected)
    return stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue


def two_sample_chisquare(a, b):
    """Chi-square homogeneity p-value for two integer samples."""
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    lo = int(min(a.min(), b.min()))
    hi = int(max(a.max(), b.max()))
    ca = np.bincount(a - lo, minlength=hi - lo + 1).astype(float)
    cb = np.bincount(b - lo, minlength=hi - lo + 1).astype(float)
    # merge sparse bins on the pooled counts
    keep_a, keep_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if acc_a + acc_b >= 20:
            keep_a.append(acc_a)
            keep_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if keep_a:
            keep_a[-1] += acc_a
            keep_b[-1] += acc_b
        else:
            keep_a.append(acc_a)
            keep_b.append(acc_b)
    if len(keep_a) < 2:
        return 1.0
    table = np.array([keep_a, keep_b])
    return stats.chi2_contingency(table, correction=False)[1]


def skewness_standard_error(samples):
    """Large-sample standard error of the sample skewness under a symmetric law."""
    x = np.asarray(samples, dtype=float)
    c = x - x.mean()
    m2, m4, m6 = (np.mean(c**k) for k in (2, 4, 6))
    return float(np.sqrt((m6 / m2**3 - 6 * m4 / m2**2 + 9) / x.size))
