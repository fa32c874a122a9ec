#!/usr/bin/env python3
"""Reference paired t-test values from scipy for the statistics unit tests."""
from scipy import stats

# Cushny & Peebles sleep data (extra hours of sleep under two drugs, same 10 patients).
drug1 = [0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0]
drug2 = [1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4]
r = stats.ttest_rel(drug1, drug2)
print(f"sleep: t={r.statistic:.10f} p={r.pvalue:.10e}")

for t, df in [(0.0, 9), (1.0, 9), (-2.5, 4), (3.0, 1), (0.7, 30)]:
    print(f"cdf t={t} df={df}: {stats.t.cdf(t, df):.15f}")
