"""Independent reference implementations used only by the tests."""
import numpy as np


def ybus_by_hand(n, branches):
    """Admittance matrix built from per-branch two-port stamps, written out longhand."""
    Y = np.zeros((n, n), dtype=complex)
    for i, j, r, x, b in branches:
        z = complex(r, x)
        y = 1 / z
        Y[i, i] = Y[i, i] + y + 1j * b / 2
        Y[j, j] = Y[j, j] + y + 1j * b / 2
        Y[i, j] = Y[i, j] - y
        Y[j, i] = Y[j, i] - y
    return Y


def gauss_seidel(Y, kinds, p_spec, q_spec, v_set, tol=1e-13, max_iter=500_000):
    """Plain Gauss-Seidel power flow. kinds: 'slack' | 'pv' | 'pq' per bus."""
    n = len(kinds)
    V = np.array([v_set[k] if kinds[k] != "pq" else 1.0 for k in range(n)], dtype=complex)
    for it in range(max_iter):
        worst = 0.0
        for k in range(n):
            if kinds[k] == "slack":
                continue
            sigma = Y[k] @ V - Y[k, k] * V[k]
            q = q_spec[k]
            if kinds[k] == "pv":
                q = -np.imag(np.conj(V[k]) * (Y[k] @ V))
            vk = (complex(p_spec[k], -q) / np.conj(V[k]) - sigma) / Y[k, k]
            if kinds[k] == "pv":
                vk = v_set[k] * vk / abs(vk)
            worst = max(worst, abs(vk - V[k]))
            V[k] = vk
        if worst < tol:
            return V, it + 1
    raise RuntimeError("Gauss-Seidel did not converge")


def pf_by_perturbation(A, eps=1e-7):
    """|d lambda_i / d a_kk| by central differences, eigenvalues matched by proximity."""
    lam0 = np.linalg.eigvals(A)
    n = A.shape[0]
    out = np.zeros((n, n))
    for k in range(n):
        Ap, Am = A.copy(), A.copy()
        Ap[k, k] += eps
        Am[k, k] -= eps
        lp, lm = np.linalg.eigvals(Ap), np.linalg.eigvals(Am)
        for i, l0 in enumerate(lam0):
            dp = lp[np.argmin(abs(lp - l0))]
            dm = lm[np.argmin(abs(lm - l0))]
            out[k, i] = abs((dp - dm) / (2 * eps))
    return lam0, out
