"""Regenerates welch_reference.csv with scipy's Welch t-test."""

import numpy as np
from scipy import stats

rng = np.random.default_rng(20240101)
rows = []
for i in range(100):
    na, nb = rng.integers(2, 16, size=2)
    shift = rng.choice([0.0, 0.1, 0.5, 2.0])
    sa, sb = rng.uniform(0.05, 3.0, size=2)
    a = rng.normal(0.0, sa, size=na).round(6)
    b = rng.normal(shift, sb, size=nb).round(6)
    res = stats.ttest_ind(a, b, equal_var=False)
    rows.append((a, b, res.statistic, res.pvalue))

with open("welch_reference.csv", "w") as f:
    f.write("a,b,t,p\n")
    for a, b, t, p in rows:
        f.write("{},{},{:.17g},{:.17g}\n".format(
            " ".join(f"{x:.6f}" for x in a), " ".join(f"{x:.6f}" for x in b), t, p))
