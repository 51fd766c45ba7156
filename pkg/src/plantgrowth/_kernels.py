"""Hot numeric kernels.

Every function here is written in the numpy subset numba understands and is
wrapped with :func:`plantgrowth._accel.kernel`, so it runs compiled when numba
is enabled and as ordinary numpy code otherwise. Kernels whose loop form would
be needlessly slow in plain Python also have a vectorised ``*_np`` twin that
the dispatchers in the public modules pick when acceleration is off.
"""
from __future__ import annotations

import numpy as np

from ._accel import kernel


@kernel
def _sigmoid_pair(z):
    # (s, 1 - s) from exp(-|z|): no overflow, no cancellation in either tail
    e = np.exp(-abs(z))
    if z >= 0:
        return 1.0 / (1.0 + e), e / (1.0 + e)
    return e / (1.0 + e), 1.0 / (1.0 + e)


@kernel
def logistic_eval(t, cc_max, k, t0):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = cc_max * _sigmoid_pair(k * (t[i] - t0))[0]
    return out


@kernel
def logistic_jacobian(t, cc_max, k, t0):
    """Model values and d(model)/d(cc_max, k, t0), shape (n,) and (n, 3)."""
    n = t.shape[0]
    f = np.empty(n)
    jac = np.empty((n, 3))
    for i in range(n):
        dt = t[i] - t0
        s, sm = _sigmoid_pair(k * dt)
        ds = s * sm
        f[i] = cc_max * s
        jac[i, 0] = s
        jac[i, 1] = cc_max * ds * dt
        jac[i, 2] = -cc_max * ds * k
    return f, jac


@kernel
def _project(p, lower, upper):
    out = p.copy()
    for j in range(p.shape[0]):
        if out[j] < lower[j]:
            out[j] = lower[j]
        elif out[j] > upper[j]:
            out[j] = upper[j]
    return out


@kernel
def _active_set(p, g, lower, upper):
    """Parameters pinned at a bound whose descent direction points outward."""
    active = np.zeros(p.shape[0], dtype=np.bool_)
    for j in range(p.shape[0]):
        if p[j] <= lower[j] and g[j] > 0.0:
            active[j] = True
        elif p[j] >= upper[j] and g[j] < 0.0:
            active[j] = True
    return active


@kernel
def _projected_grad_norm(g, active):
    acc = 0.0
    for j in range(g.shape[0]):
        if not active[j]:
            acc += g[j] * g[j]
    return np.sqrt(acc)


@kernel
def lm_logistic(t, y, p0, lower, upper, max_iter, gtol, xtol, lam0):
    """Bounded Levenberg-Marquardt fit of the three-parameter logistic.

    Returns ``(params, rss, iterations, converged, rss_history)``. Only
    accepted steps are recorded in ``rss_history`` (first entry is the start).
    """
    p = _project(p0, lower, upper)
    f, jac = logistic_jacobian(t, p[0], p[1], p[2])
    r = f - y
    rss = np.dot(r, r)
    lam = lam0
    history = np.empty(max_iter + 1)
    history[0] = rss
    n_hist = 1
    converged = False
    it = 0
    while it < max_iter:
        g = jac.T @ r
        active = _active_set(p, g, lower, upper)
        if _projected_grad_norm(g, active) < gtol:
            converged = True
            break
        a = jac.T @ jac
        rhs = -g
        for j in range(3):
            if active[j]:
                # freeze pinned parameters: delta_j = 0
                a[j, :] = 0.0
                a[:, j] = 0.0
                a[j, j] = 1.0
                rhs[j] = 0.0
        it += 1
        accepted = False
        while True:
            m = a.copy()
            for j in range(3):
                m[j, j] += lam * max(a[j, j], 1e-12)
            delta = np.linalg.solve(m, rhs)
            p_new = _project(p + delta, lower, upper)
            step = p_new - p
            if np.sqrt(np.dot(step, step)) < xtol:
                converged = True
                break
            f_new, jac_new = logistic_jacobian(t, p_new[0], p_new[1], p_new[2])
            r_new = f_new - y
            rss_new = np.dot(r_new, r_new)
            if rss_new < rss:
                p = p_new
                jac = jac_new
                r = r_new
                rss = rss_new
                lam = max(lam * 0.1, 1e-15)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e20:
                break
        if converged:
            break
        if accepted:
            history[n_hist] = rss
            n_hist += 1
        else:
            break
    return p, rss, it, converged, history[:n_hist]


@kernel
def knn_predict(train_x, train_y, query, n_neighbors):
    """Mean target of the ``n_neighbors`` nearest rows (Euclidean), per query."""
    n = train_x.shape[0]
    kk = min(n_neighbors, n)
    out = np.empty(query.shape[0])
    d2 = np.empty(n)
    for q in range(query.shape[0]):
        for i in range(n):
            acc = 0.0
            for j in range(train_x.shape[1]):
                diff = train_x[i, j] - query[q, j]
                acc += diff * diff
            d2[i] = acc
        order = np.argsort(d2, kind="mergesort")
        total = 0.0
        for i in range(kk):
            total += train_y[order[i]]
        out[q] = total / kk
    return out


def knn_predict_np(train_x, train_y, query, n_neighbors):
    kk = min(n_neighbors, train_x.shape[0])
    d2 = ((query[:, None, :] - train_x[None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=1, kind="stable")[:, :kk]
    return train_y[order].mean(axis=1)


@kernel
def svr_sgd(x, y, order, epsilon, c, epochs, lr):
    """Linear epsilon-insensitive regression by per-sample subgradient steps.

    Minimises ``0.5*|w|^2 / (c*n) + mean_i max(0, |y_i - w.x_i - b| - epsilon)``
    visiting rows in the order given by ``order`` (shape ``(epochs, n)``).
    """
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    reg = 1.0 / (c * n)
    for e in range(epochs):
        for idx in range(n):
            i = order[e, idx]
            pred = b
            for j in range(d):
                pred += w[j] * x[i, j]
            resid = y[i] - pred
            s = 0.0
            if resid > epsilon:
                s = 1.0
            elif resid < -epsilon:
                s = -1.0
            for j in range(d):
                w[j] -= lr * (reg * w[j] - s * x[i, j])
            b += lr * s
    return w, b


@kernel
def gae(rewards, values, dones, last_value, gamma, lam):
    """Generalised advantage estimates and returns for one rollout buffer.

    ``dones[i]`` marks that step ``i`` ended its episode; ``values`` holds the
    value estimate of each step's observation and ``last_value`` that of the
    observation following the final step.
    """
    n = rewards.shape[0]
    adv = np.empty(n)
    running = 0.0
    for i in range(n - 1, -1, -1):
        if i == n - 1:
            next_value = last_value
        else:
            next_value = values[i + 1]
        nonterminal = 1.0 - dones[i]
        delta = rewards[i] + gamma * next_value * nonterminal - values[i]
        running = delta + gamma * lam * nonterminal * running
        adv[i] = running
    return adv, adv + values
