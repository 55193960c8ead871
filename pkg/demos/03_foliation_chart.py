"""Straightening the stable foliation of Y(x, y) = (-x, x^2).

Y vanishes on the y-axis G.  Orbits fall onto G along the parabolas
y + x^2 / 2 = const, so the chart (x, y) -> (x, y + x^2 / 2) sends each
leaf to a horizontal line.  We rebuild that chart from the stable-manifold
graphs of the translated family X(x, mu) = Y(mu0 + mu e_y + x).

Run: python3 demos/03_foliation_chart.py
"""

import numpy as np

from stabman.field import polynomial_from_terms
from stabman.foliation import (
    ball_sample,
    build_chart,
    c1_deviation,
    eval_chart,
    overlap_defect,
    straightening_residual,
)

Y = polynomial_from_terms([{"out": 0, "exps": [1, 0], "coef": -1.0},
                           {"out": 1, "exps": [2, 0], "coef": 1.0}], 2, 2)
G = np.array([[0.0], [1.0]])

chart = build_chart(Y, G, mu0=[0.0, 0.0])
d = chart.describe()
print("chart at the origin:", {k: d[k] for k in ("M_F", "gamma", "lambda", "c_FG", "K_A", "R")})

P = ball_sample(chart, chart.R, 100, seed=0)
X = eval_chart(chart, P)
exact = np.column_stack([P[:, 0], P[:, 1] + P[:, 0] ** 2 / 2])
print(f"max |chart - closed form| on 100 points: {np.abs(X - exact).max():.2e}")

back = eval_chart(chart, X, "inverse", check=False)
print(f"round trip error: {np.abs(back - P).max():.2e}")

rep = straightening_residual(chart, [[-0.05], [0.0], [0.05]], n_slice=5, decay_window=(0, 8))
print("slices flow to their base points:", rep.as_dict())

for eps in (0.5, 0.1, 0.02):
    d = c1_deviation(chart, eps, n_points=32)
    print(f"C1 distance to the identity on the {eps} R-ball: {d.deviation:.4f}")

other = build_chart(Y, G, mu0=[0.0, 0.1])
Q = ball_sample(other, 0.1, 30, seed=1)
Q = Q[np.linalg.norm(Q, axis=1) <= chart.R]
print(f"overlap defect between the charts at y=0 and y=0.1: "
      f"{np.abs(overlap_defect(chart, other, Q)).max():.1e}")
