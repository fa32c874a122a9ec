#!/usr/bin/env python3
"""Full-batch gradient descent on the MF objective for a tiny fully observed matrix.

    L(U, V) = sum_(u,i) (U_u . V_i - R_ui)^2 + lam * (|U|_F^2 + |V|_F^2)

Runs plain GD from several random starts until the gradient vanishes and prints the lowest
final loss. The unit test for batch pretraining compares its converged loss against this.
"""
import numpy as np

R = np.array([[5.0, 3.0, 1.0],
              [4.0, 2.0, 1.0],
              [1.0, 1.0, 5.0]])
d, lam, lr = 2, 0.01, 0.005


def loss(U, V):
    return ((U.T @ V - R) ** 2).sum() + lam * ((U ** 2).sum() + (V ** 2).sum())


best = None
for seed in range(5):
    rng = np.random.default_rng(seed)
    U = rng.uniform(-0.5, 0.5, (d, 3))
    V = rng.uniform(-0.5, 0.5, (d, 3))
    for _ in range(400000):
        E = U.T @ V - R
        gU = 2 * (V @ E.T) + 2 * lam * U
        gV = 2 * (U @ E) + 2 * lam * V
        U -= lr * gU
        V -= lr * gV
        if max(abs(gU).max(), abs(gV).max()) < 1e-12:
            break
    val = loss(U, V)
    best = val if best is None else min(best, val)
    print(f"start {seed}: loss {val:.10f}")
print(f"oracle loss {best:.10f}")
