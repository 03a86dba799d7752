"""Tour of the phase plane.

The model's initial law is a two-parameter mixture: an atom at zero with
weight p plus an exponential tail with rate lam.  The flow conserves
H = p/lam + log(lam), and the curve p = lam - lam*log(lam) (for lam >= 1)
separates initial laws whose mean grows like e^t (pinned, below the curve)
from those collapsing to the atom (unpinned, above it).

This script classifies a coarse grid, follows one trajectory from each
phase, and shows the conserved quantity holding to machine precision.
"""
import math

import numpy as np

from yulepaint import dynamics
from yulepaint.dynamics import PhasePoint, classify_phase, integrate_dynamics

print("phase classification on a coarse grid")
print(f"{'lam':>6} {'p':>6}  phase")
for lam in (0.5, 1.0, 1.5, 2.0, 2.5):
    for p in (0.1, 0.4, 0.7):
        phase = classify_phase(PhasePoint(p, lam))
        print(f"{lam:6.2f} {p:6.2f}  {phase.value}")

print()
print("one trajectory per phase, t in [0, 30]")
for label, (p0, lam0) in [("pinned", (0.2, 0.8)),
                          ("critical", (0.0, math.e)),
                          ("unpinned", (0.9, 2.0))]:
    traj = integrate_dynamics(PhasePoint(p0, lam0), 30.0)
    p_end, lam_end, rho_end = traj.eval(30.0)
    drift = float(np.max(np.abs(traj.h_error)))
    print(f"  {label:9s} start ({p0}, {lam0:.3f}) "
          f"-> end p={p_end:.6f} lam={lam_end:.6f} rho={rho_end:.3e}; "
          f"conserved-quantity drift {drift:.1e}")

# in the unpinned phase lam plateaus at the positive root of
# H*x - x*log(x) = 1; check it against the trajectory endpoint
pt = PhasePoint(0.9, 2.0)
H = dynamics.conserved_H(pt)
root = dynamics.equilibrium_lambda(H)
lam_end = integrate_dynamics(pt, 60.0).eval(60.0)[1]
print()
print(f"unpinned plateau: root {root:.8f}, lam(60) = {lam_end:.8f}")
