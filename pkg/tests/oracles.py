"""Independent reference computations used as test oracles.

Nothing here imports hierfl; each function recomputes a quantity from its
textbook definition with plain Python loops or a different numerical route.
"""

import math

import numpy as np


def pearson(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / n
    vx = sum((x - mx) ** 2 for x in xs) / n
    vy = sum((y - my) ** 2 for y in ys) / n
    if vx == 0 or vy == 0:
        return 0.0
    return cov / math.sqrt(vx * vy)


def smape_loop(F, A):
    total = 0.0
    for f, a in zip(F, A):
        den = abs(f) + abs(a)
        total += 0.0 if den == 0 else 2 * abs(f - a) / den
    return total / len(F)


def smape_new_loop(F, A):
    total = 0.0
    for f, a in zip(F, A):
        den = abs(f) + abs(a)
        total += 0.0 if den == 0 else abs(f - a) / den
    return total / len(F)


def contribution_direct(increments, j):
    others = [v for k, v in increments.items() if k != j]
    return sum(others) / (len(increments) - 1)


def least_squares(X, y):
    """Ordinary least squares with an intercept via numpy's SVD solver."""
    X = np.asarray(X, dtype=float)
    design = np.column_stack([X, np.ones(len(X))])
    coef, *_ = np.linalg.lstsq(design, np.asarray(y, dtype=float), rcond=None)
    return coef[:-1], coef[-1]


def half_mse(w, b, X, y, l2=0.0):
    r = X @ w + b - y
    return 0.5 * float(np.mean(r * r)) + 0.5 * l2 * float(w @ w)


def central_difference(w, b, X, y, l2=0.0, step=1e-5):
    """Numerical gradient of :func:`half_mse` over (weights, bias)."""
    theta = np.append(np.asarray(w, dtype=float), float(b))
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        up = theta.copy()
        down = theta.copy()
        up[k] += step
        down[k] -= step
        grad[k] = (half_mse(up[:-1], up[-1], X, y, l2) - half_mse(down[:-1], down[-1], X, y, l2)) / (2 * step)
    return grad


def gradient_descent(X, y, lr, steps, l2=0.0):
    """Centralized full-batch descent on raw (unstandardized) columns."""
    w = np.zeros(X.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(steps):
        r = X @ w + b - y
        w = w - lr * (X.T @ r / n + l2 * w)
        b = b - lr * r.mean()
    return w, b


def scripted_cohort(members, r_data, r_model, horizontal):
    """Scoring pipeline written out step by step from the defining formulas.

    ``members``: list of dicts with id, X (rows of feature lists), Y, local, global_, n.
    """
    n_total = sum(m["n"] for m in members)
    quality, inc = {}, {}
    for m in members:
        cols = list(zip(*m["X"]))
        if len(cols) == 1:
            corr = pearson(cols[0], m["Y"])
        else:
            corr = sum(abs(pearson(c, m["Y"])) for c in cols) / len(cols)
        quality[m["id"]] = corr * (m["n"] / n_total) if horizontal else corr
        acc_l = 1 - smape_new_loop(m["local"], m["A"])
        acc_g = 1 - smape_new_loop(m["global_"], m["A"])
        inc[m["id"]] = acc_g - acc_l
    ids = sorted(quality)
    contrib = {j: sum(inc[i] for i in ids if i != j) / (len(ids) - 1) for j in ids}
    q = {k: max(0.0, v) for k, v in quality.items()}
    c = {k: max(0.0, v) for k, v in contrib.items()}
    qs, cs = sum(q.values()), sum(c.values())
    out = {}
    for k in ids:
        qn = q[k] / qs if qs > 0 else 1 / len(ids)
        cn = c[k] / cs if cs > 0 else 1 / len(ids)
        out[k] = {
            "quality": quality[k],
            "contribution": contrib[k],
            "increment": inc[k],
            "quality_norm": qn,
            "contribution_norm": cn,
            "r_quality": r_data * qn,
            "r_contribution": r_model * cn,
        }
    return out
