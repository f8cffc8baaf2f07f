"""Independent reference implementations used only to check the library.

Everything here is deliberately written the slow, obvious way (enumeration,
Monte Carlo, exact fractions, finite differences) and never calls the code
paths it validates.
"""

from fractions import Fraction

import numpy as np

from polysense.model import stick_beta_params


def mc_stick_oracle(counts, alpha, n_samples, rng):
    """Monte-Carlo estimates of E[log p(z=k)] and E[p(z=k)] under the stick posterior.

    The sticks are independent Betas under the factorized posterior, so every
    expectation is estimated from its own component draws; 1 - beta is drawn
    directly from Beta(b, a) to keep the log tail exact.
    """
    counts = np.asarray(counts, dtype=np.float64)
    t = len(counts)
    a, b = stick_beta_params(counts, alpha)
    e_log_beta = np.empty(t)
    e_log_rest = np.empty(t)
    e_beta = np.empty(t)
    for k in range(t):
        beta = rng.beta(a[k], b[k], size=n_samples)
        rest = rng.beta(b[k], a[k], size=n_samples)
        e_log_beta[k] = np.log(np.maximum(beta, 1e-320)).mean()
        e_log_rest[k] = np.log(np.maximum(rest, 1e-320)).mean()
        e_beta[k] = beta.mean()
    prefix = np.concatenate([[0.0], np.cumsum(e_log_rest)[:-1]])
    mc_log = prefix + e_log_beta
    mc_log[-1] = prefix[-1]
    prefix_prod = np.concatenate([[1.0], np.cumprod(1.0 - e_beta)[:-1]])
    mc_prob = e_beta * prefix_prod
    mc_prob[-1] = prefix_prod[-1]
    return mc_log, mc_prob


def ari_pair_counting(pred, gold):
    """Adjusted Rand Index by direct enumeration of element pairs, in exact arithmetic."""
    n = len(pred)
    n11 = same_pred = same_gold = 0
    for i in range(n):
        for j in range(i + 1, n):
            sp = pred[i] == pred[j]
            sg = gold[i] == gold[j]
            n11 += sp and sg
            same_pred += sp
            same_gold += sg
    total = Fraction(n * (n - 1), 2)
    expected = Fraction(same_pred * same_gold) / total
    maximum = Fraction(same_pred + same_gold, 2)
    if maximum == expected:
        return 1.0
    return float((n11 - expected) / (maximum - expected))


def all_partitions(n):
    """Every partition of n elements as a canonical (restricted-growth) label tuple."""
    out = []

    def rec(prefix, next_label):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for v in range(next_label + 1):
            rec(prefix + [v], max(next_label, v + 1))

    rec([0], 1)
    return out


def negsamp_objective(centers, weights, eps, ctx_en, ctx_fg, ids, labels, langs, clamp=30.0):
    """Value of the weighted negative-sampling objective, written independently.

    sum_k 1[w_k > eps] w_k sum_p log sigmoid(+/- clamp(centers_k . ctx_p))
    """
    total = 0.0
    for k in range(centers.shape[0]):
        if weights[k] <= eps:
            continue
        for p, y in enumerate(ids):
            if y < 0:
                continue
            row = ctx_en[y] if langs[p] == 0 else ctx_fg[y]
            dot = float(np.clip(np.dot(centers[k], row), -clamp, clamp))
            sign = 1.0 if labels[p] > 0.5 else -1.0
            total += weights[k] * float(np.log(1.0 / (1.0 + np.exp(-sign * dot))))
    return total


def finite_difference_gradients(objective, arrays, h=1e-5):
    """Central finite differences of ``objective()`` with respect to every array given."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up = objective()
            arr[idx] = old - h
            down = objective()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads
