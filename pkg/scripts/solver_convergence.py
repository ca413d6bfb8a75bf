#!/usr/bin/env python3
"""Refinement study of the classical solver on the power-variance model."""
import math

import numpy as np

from subdiff import ScaledLaplacian, SolverConfig, solve_classical

H = 0.7
op = ScaledLaplacian(lambda t: H * t ** (2.0 * H - 1.0))
width = 4.0 * (16.0 / 99.0)  # fixed across the ladder

print(f"{'n':>5} {'h':>10} {'sup error':>12} {'order':>7}")
prev = None
for n in (100, 200, 400, 800):
    cfg = SolverConfig(t_max=1.0, n_t=n, x_min=-8.0, x_max=8.0, n_x=n,
                       init_width=width)
    gd = solve_classical(op, cfg)
    ref = np.exp(-gd.x_grid**2 / 2.0) / math.sqrt(2.0 * math.pi)
    err = float(np.abs(gd.values[-1] - ref).max())
    order = f"{math.log2(prev / err):7.3f}" if prev else "      -"
    print(f"{n:5d} {16.0 / (n - 1):10.5f} {err:12.3e} {order}")
    prev = err
