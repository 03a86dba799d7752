"""The integer-valued cousin of the continuous model.

On a binary tree of height n, each leaf draws an integer from mu0 and each
internal node computes (left + right - 1)_+.  The root law is mu0 pushed
through n exact convolution-and-clip steps; no sampling is needed, the pmf
recursion is closed.

The classical criterion separating pinned initial laws compares
sum x 2^x mu0(x) with sum 2^x mu0(x); equality is the critical case.  The
law (4/5) delta_0 + (1/5) delta_2 hits equality exactly: 1.6 = 1.6.
"""
import numpy as np

from yulepaint import painting, rngtools
from yulepaint.painting import DiscretePmf

critical = DiscretePmf.from_dict({0: 0.8, 2: 0.2})
cg = painting.cegm_criterion(critical)
print(f"criterion sums for (4/5, 1/5) on {{0, 2}}: "
      f"weighted {cg.weighted_sum} vs plain {cg.plain_sum} -> {cg.decision}")

print()
print("rescaled mean 2^{-n} E[X_n] under exact iteration (-> free energy):")
for pmf, label in [(critical, "critical"),
                   (DiscretePmf.from_dict({2: 1.0}), "pinned (all mass at 2)"),
                   (DiscretePmf.from_dict({0: 0.95, 2: 0.05}), "unpinned")]:
    vals = [painting.discrete_parking_iterate(pmf, n).mean() / 2 ** n
            for n in range(0, 13, 3)]
    print(f"  {label:24s} " + "  ".join(f"{v:.5f}" for v in vals))

print()
print("sampled tree roots vs the exact pmf (n = 6, 20000 replicas):")
rng = rngtools.master_stream(31)
sample = painting.discrete_parking_sample(critical, 6, 20_000, rng)
exact = painting.discrete_parking_iterate(critical, 6)
for k in range(6):
    freq = float(np.mean(sample.values == k))
    print(f"  P(X = {k}): exact {exact.probs[k]:.5f}, sampled {freq:.5f}")
