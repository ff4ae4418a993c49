"""The jump relation of the single-layer normal-derivative integral.

Evaluating the layer integral at interior offsets x - h n and letting
h -> 0+ does NOT converge to the on-boundary integral: a free term phi(x,t)
appears. This jump is what turns the layer representation into a
second-kind equation (coefficient one on the density), and the marching
solver is built on it. Here phi = 1 on a static unit circle: the offset
integrals converge to 1 + the principal-value integral at rate O(h).
"""

import numpy as np

from fptdensity import FlowMap, MovingDomain, circle, zero_field
from fptdensity.volterra import jump_relation_probe

domain = MovingDomain(boundary=circle(1.0), marker=(0.0, 0.0),
                      flow=FlowMap(zero_field()), horizon=0.5)
sl = domain.boundary_at(0.5, 64)
x, n = sl.nodes[0], sl.normals[0]

offsets = (1e-2, 1e-3, 1e-4)
vals, target = jump_relation_probe(domain, x, n, 0.5, offsets)

print(f"target  1 + int int K = {target:.8f}\n")
print(f"{'h':>8} {'offset integral':>16} {'gap to target':>14}")
gaps = np.abs(vals - target)
for h, v, gap in zip(offsets, vals, gaps):
    print(f"{h:8.0e} {v:16.8f} {gap:14.2e}")
print(f"\ngap shrink factors: {gaps[0] / gaps[1]:.1f}x, {gaps[1] / gaps[2]:.1f}x "
      f"(each 10x in h should shrink the gap by >= 3x)")
