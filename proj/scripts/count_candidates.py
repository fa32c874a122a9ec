#!/usr/bin/env python3
"""Standalone counts over a MovieLens ratings file, used to freeze expected test values.

Prints users, items, ratings, mean rating, density, and the number of users with more
than --min-ratings ratings together with the per-split test-set size.
"""
import argparse
import math
from collections import Counter

ap = argparse.ArgumentParser()
ap.add_argument("path")
ap.add_argument("--sep", default="\t")
ap.add_argument("--min-ratings", type=int, default=100)
ap.add_argument("--test-fraction", type=float, default=0.1)
args = ap.parse_args()

per_user = Counter()
items = set()
total = 0
count = 0
with open(args.path) as f:
    for line in f:
        if not line.strip():
            continue
        u, i, r, _ = line.rstrip("\n").split(args.sep)
        per_user[u] += 1
        items.add(i)
        total += int(r)
        count += 1

m, n = len(per_user), len(items)
candidates = sum(1 for c in per_user.values() if c > args.min_ratings)
print(f"users={m} items={n} ratings={count}")
print(f"mean={total / count:.6f} density={count / (m * n):.10f}")
print(f"candidates={candidates} test_users={math.ceil(args.test_fraction * candidates)}")
