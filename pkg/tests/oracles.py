"""Independent reference implementations used only by the tests."""
import mpmath as mp
import numpy as np

mp.mp.dps = 60


def global_coefficients(nu, sigma, z, x):
    """Time value of a slice from the global ``c1 exp(-Kz/s) + c2 exp(Kz/s)`` recursion.

    Left coefficients run upward from ``L`` and right ones downward from ``U``
    with the half-sum weights ``(1 +- s_next/s)/2``; the pair of scale factors
    then enforces continuity and the unit slope jump at ``x``.  Returns a
    function of ``K`` computed in extended precision.
    """
    nu = [mp.mpf(float(v)) for v in nu]
    sg = [mp.mpf(float(s)) for s in sigma]
    z = mp.mpf(float(z))
    x = mp.mpf(float(x))
    n = len(sg)
    L, U = nu[0], nu[-1]

    left = [None] * n
    left[0] = (-mp.exp(z * L / sg[0]), mp.exp(-z * L / sg[0]))
    for j in range(n - 1):
        c1, c2 = left[j]
        k, s, s1 = nu[j + 1], sg[j], sg[j + 1]
        e_m, e_p = c1 * mp.exp(-z * k / s), c2 * mp.exp(z * k / s)
        r = s1 / s
        n1 = ((1 + r) * e_m + (1 - r) * e_p) / 2
        n2 = ((1 - r) * e_m + (1 + r) * e_p) / 2
        left[j + 1] = (n1 * mp.exp(z * k / s1), n2 * mp.exp(-z * k / s1))

    right = [None] * n
    right[-1] = (mp.exp(z * U / sg[-1]), -mp.exp(-z * U / sg[-1]))
    for j in range(n - 2, -1, -1):
        c1, c2 = right[j + 1]
        k, s, s1 = nu[j + 1], sg[j], sg[j + 1]
        e_m, e_p = c1 * mp.exp(-z * k / s1), c2 * mp.exp(z * k / s1)
        r = s / s1
        n1 = ((1 + r) * e_m + (1 - r) * e_p) / 2
        n2 = ((1 - r) * e_m + (1 + r) * e_p) / 2
        right[j] = (n1 * mp.exp(z * k / s), n2 * mp.exp(-z * k / s))

    def seg(K):
        for j in range(n):
            if K < nu[j + 1]:
                return j
        return n - 1

    def ev(coef, K):
        j = seg(K)
        c1, c2 = coef[j]
        e_m, e_p = c1 * mp.exp(-K * z / sg[j]), c2 * mp.exp(K * z / sg[j])
        return e_m + e_p, (e_p - e_m) * z / sg[j]

    v1, d1 = ev(left, x)
    v2, d2 = ev(right, x)
    lam1 = v2 / (d1 * v2 - d2 * v1)
    lam2 = lam1 * v1 / v2

    def V(K):
        K = mp.mpf(float(K))
        if K < x:
            v, d = ev(left, K)
            return lam1 * v, lam1 * d
        v, d = ev(right, K)
        return lam2 * v, lam2 * d

    return V


def oracle_time_value(nu, sigma, z, x, K):
    V = global_coefficients(nu, sigma, z, x)
    out = [V(k) for k in np.atleast_1d(K)]
    return np.array([float(v) for v, _ in out]), np.array([float(d) for _, d in out])


def dense_fd_solution(nodes, a2_cell, tstar, source):
    """Reference solve of ``(a2/2)u'' - u/t* = -phi/t*`` by a dense linear system."""
    n = len(nodes)
    A = np.zeros((n, n))
    b = np.zeros(n)
    A[0, 0] = A[-1, -1] = 1.0
    b[0], b[-1] = source[0], source[-1]
    for k in range(1, n - 1):
        hl, hr = nodes[k] - nodes[k - 1], nodes[k + 1] - nodes[k]
        w = (hl / a2_cell[k - 1] + hr / a2_cell[k]) / tstar
        A[k, k - 1] = 1 / hl
        A[k, k + 1] = 1 / hr
        A[k, k] = -(1 / hl + 1 / hr + w)
        b[k] = -w * source[k]
    return np.linalg.solve(A, b)
