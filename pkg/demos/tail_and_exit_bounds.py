"""Exit probabilities against their analytic tail bounds.

Simulated paths should leave a ball of radius r within a short time window
no more often than the tail bound for the kernel allows.  The table below
compares the empirical exit frequency with the bound for a diffusion and
for a compound jump process over a range of radii.  The second part prints
the geometric-series certificate behind the bound: the summed ball-to-ball
transition masses and the certified remainder.
"""

import numpy as np

from freedyn import (
    BrownianKernel,
    Domain,
    GaussianProfile,
    KawasakiKernel,
    RngStream,
    check_summability,
    exit_probability,
)

domain = Domain.fullspace((-20.0,), (20.0,))
eps = 0.25
n_paths = 8000

kernels = [
    ("diffusion", BrownianKernel(domain)),
    ("jump, gaussian profile", KawasakiKernel(domain,
                                              GaussianProfile(1, 1.0, 0.5))),
]

print("exit from B(0, r) before time %.2f, %d paths each" % (eps, n_paths))
print("%-24s %6s %12s %12s %12s" % ("kernel", "r", "empirical", "bound",
                                    "slack"))
for name, kernel in kernels:
    for i, r in enumerate((0.5, 1.0, 2.0, 3.0)):
        est, se, bound = exit_probability(kernel, np.array([0.0]), r, eps,
                                          n_paths, eps / 200.0,
                                          RngStream(23).child(i))
        print("%-24s %6.1f %12.4f %12.4f %12.4f"
              % (name, r, est, min(bound, 1.0), min(bound, 1.0) - est))

print()
rep = check_summability(BrownianKernel(domain), alpha=1.0, m=1,
                        epsilon=0.1, delta=1.0)
print("series certificate, diffusion, ball-growth exponent 1:")
print("  converges:", rep.converges)
print("  partial sum: %.12f" % rep.partial_sums[-1])
print("  remainder bound: %.3e" % rep.remainder_bound)
