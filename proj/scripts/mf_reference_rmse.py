#!/usr/bin/env python3
"""Reference matrix-factorization run for the held-out RMSE check.

Holds out every rating with (user_id * 31 + item_id) % 10 == 0, fits a plain per-rating
SGD factorization (no biases, d=16, lr=0.01, per-rating L2 of 0.05, 30 epochs) on the rest
and prints the held-out RMSE. The pretraining test requires the library's default
configuration to stay within 5% of this value.
"""
import sys
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else "data/ml-100k/u.data"
data = np.loadtxt(path, dtype=np.int64)
users, uinv = np.unique(data[:, 0], return_inverse=True)
items, iinv = np.unique(data[:, 1], return_inverse=True)
ratings = data[:, 2].astype(float)
held = (data[:, 0] * 31 + data[:, 1]) % 10 == 0
train = np.flatnonzero(~held)
test = np.flatnonzero(held)

d, lr, reg, epochs = 16, 0.01, 0.05, 30
rng = np.random.default_rng(0)
P = rng.uniform(-0.1, 0.1, (len(users), d))
Q = rng.uniform(-0.1, 0.1, (len(items), d))
for epoch in range(epochs):
    for k in rng.permutation(train):
        u, i, r = uinv[k], iinv[k], ratings[k]
        pu = P[u].copy()
        e = pu @ Q[i] - r
        P[u] -= lr * (e * Q[i] + reg * pu)
        Q[i] -= lr * (e * pu + reg * Q[i])
pred = np.einsum("kd,kd->k", P[uinv[test]], Q[iinv[test]])
rmse = np.sqrt(np.mean((pred - ratings[test]) ** 2))
print(f"held-out ratings {len(test)}  reference RMSE {rmse:.6f}")
