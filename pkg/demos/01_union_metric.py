"""The exploitation probability of a weakness, checked three ways.

A weakness is exploited in the next 30 days if at least one of its CVEs is.
With independent per-CVE scores that is one minus the chance that none is.
This script compares the library value with a brute-force enumeration and a
Monte Carlo simulation, then shows why the product is taken in log space.

Run: python3 demos/01_union_metric.py
"""
from __future__ import annotations

import math

from pecwe.metric import pecwe_from_scores
from pecwe.oracles import pecwe_bruteforce_oracle, pecwe_montecarlo_oracle

# A small weakness: five CVEs with typical EPSS scores.
scores = [0.00043, 0.0123, 0.2, 0.051, 0.97565]
exact = pecwe_from_scores(scores)
brute = pecwe_bruteforce_oracle(scores)
estimate, se = pecwe_montecarlo_oracle(scores, trials=10 ** 6, seed=1)
print(f"library     {exact:.12f}")
print(f"enumeration {brute:.12f}  (all 2^5 outcomes)")
print(f"simulation  {estimate:.6f} +/- {se:.6f}  (10^6 trials)")

# CVEs without a score count as probability 0 and change nothing at all.
assert pecwe_from_scores(scores + [0.0] * 1000) == exact

# A large weakness: 25,000 CVEs at 0.001 each. The naive product of
# (1 - p) loses digits as it shrinks; the log-space sum keeps them.
big = [0.001] * 25_000
naive = 1.0
for p in big:
    naive *= 1.0 - p
print()
print(f"log space   1 - P(none) = {pecwe_from_scores(big)!r}")
print(f"reference   {-math.expm1(25_000 * math.log1p(-0.001))!r}")
print(f"naive       {1.0 - naive!r}")
