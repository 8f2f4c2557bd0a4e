"""Independent reference computations used by the tests.

Nothing here calls the combining code under test.
"""

import numpy as np


def herm(x):
    return np.conj(np.swapaxes(x, -1, -2))


def two_ap_team_optimum(hhat, C, noise_to_power, iters=20000, tol=1e-14):
    """Block-coordinate descent for the two-AP team MSE problem.

    AP 1 sees its own estimates only; AP 2 sees both. The frozen samples
    define a product empirical measure: AP 1 averages over all AP-2 samples.
    AP 2's policy is ``B_2^{-1} G_2 c`` with a coefficient matrix ``c`` chosen
    per sample of the information it shares with AP 1, AP 1's policy is a free
    N x K matrix per sample. Each step is an exact minimisation of the
    quadratic objective over one block.

    Returns ``(objective, v1, c, iterations)`` with the objective summed over UEs.
    """
    t, _, k, n = hhat.shape
    eye_n, eye_k = np.eye(n), np.eye(k)
    G1, G2 = np.swapaxes(hhat[:, 0], -1, -2), np.swapaxes(hhat[:, 1], -1, -2)
    W1 = C[0].sum(axis=0) + noise_to_power * eye_n
    W2 = C[1].sum(axis=0) + noise_to_power * eye_n
    B1 = G1 @ herm(G1) + W1
    B2 = G2 @ herm(G2) + W2
    A2 = np.linalg.solve(B2, G2)
    L2 = herm(G2) @ A2
    Lbar = L2.mean(axis=0)
    quad = (herm(L2) @ L2 + herm(A2) @ W2 @ A2).mean(axis=0)

    def objective(v1, c):
        r = herm(G1) @ v1 - eye_k
        val = (np.sum(np.abs(r) ** 2, axis=(1, 2))
               + 2 * np.real(np.trace(herm(r) @ Lbar @ c, axis1=1, axis2=2))
               + np.real(np.trace(herm(c) @ quad @ c, axis1=1, axis2=2))
               + np.real(np.trace(herm(v1) @ W1 @ v1, axis1=1, axis2=2)))
        return val.mean()

    c = np.zeros((t, k, k), dtype=complex)
    v1 = np.linalg.solve(B1, G1)
    prev = objective(v1, c)
    for it in range(1, iters + 1):
        u1 = herm(G1) @ v1
        c = np.linalg.lstsq(quad, np.swapaxes(Lbar @ (eye_k - u1), 0, 1).reshape(k, -1), rcond=None)[0]
        c = np.swapaxes(c.reshape(k, t, k), 0, 1)
        v1 = np.linalg.solve(B1, G1 @ (eye_k - Lbar @ c))
        cur = objective(v1, c)
        if abs(prev - cur) <= tol * abs(cur):
            break
        prev = cur
    return cur, v1, c, it, objective


def expected_effective_gain_scalar(q, a):
    """E{x / (x + a)} for x ~ Exp(mean q): the scalar mean of Lambda."""
    from scipy.special import exp1

    z = a / q
    return 1.0 - z * np.exp(z) * exp1(z)
