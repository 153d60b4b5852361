"""Independent brute-force oracles used only by the tests.

These deliberately avoid the library's solution paths: ridge is solved by
plain gradient descent, the SVR dual by projected gradient with a tiny
step size.
"""

import numpy as np


def ridge_gradient(X, y, b0, beta, lam):
    r = y - b0 - X @ beta
    return np.concatenate([[-2.0 * r.sum()], -2.0 * X.T @ r + 2.0 * lam * beta])


def ridge_objective(X, y, b0, beta, lam):
    r = y - b0 - X @ beta
    return float(r @ r + lam * beta @ beta)


def gradient_descent_ridge(X, y, lam, grad_tol=1e-10, max_iter=2_000_000):
    """Plain gradient descent on ||y - b0 - X beta||^2 + lam ||beta||^2."""
    n, p = X.shape
    aug = np.hstack([np.ones((n, 1)), X])
    lip = 2.0 * (np.linalg.norm(aug, 2) ** 2 + lam)
    step = 1.0 / lip
    theta = np.zeros(p + 1)
    for _ in range(max_iter):
        g = ridge_gradient(X, y, theta[0], theta[1:], lam)
        if np.linalg.norm(g) < grad_tol:
            break
        theta = theta - step * g
    else:
        raise AssertionError("ridge gradient descent failed to converge")
    return theta[0], theta[1:]


def project_box_hyperplane(v, c, u):
    """Exact projection onto {0 <= a <= c, u.a = 0} by bisection on theta."""
    lo = -(c + np.abs(v).max())
    hi = c + np.abs(v).max()

    def h(theta):
        return float(u @ np.clip(v - theta * u, 0.0, c))

    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi) * u, 0.0, c)


def projected_gradient_svr_dual(K, y, c, epsilon, n_iter=20_000):
    """Projected gradient on the 2l-variable SVR dual; returns (a, objective)."""
    l = len(y)
    u = np.concatenate([np.ones(l), -np.ones(l)])
    p = np.concatenate([epsilon - y, epsilon + y])

    def grad(a):
        beta = a[:l] - a[l:]
        kb = K @ beta
        return np.concatenate([kb, -kb]) + p

    def objective(a):
        beta = a[:l] - a[l:]
        return float(0.5 * beta @ K @ beta + p @ a)

    lip = 2.0 * np.linalg.eigvalsh(K).max() + 1e-9
    step = 1.0 / lip
    a = project_box_hyperplane(np.zeros(2 * l), c, u)
    for _ in range(n_iter):
        a = project_box_hyperplane(a - step * grad(a), c, u)
    return a, objective(a)
