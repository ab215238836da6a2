"""Temporal hp mode: the degree drops as the step shrinks.

With r_m = max(0, ceil(r0 + sigma log(k_m / k0))) the distance between the
last time node and the extrapolated blow-up time decays exponentially in the
square root of the number of temporal degrees of freedom.

    python demos/hp_mode.py
"""
import numpy as np

from dgblowup import AdaptConfig, AdaptiveSolver, preset


def main():
    problem = preset("quadratic_gaussian")
    xs, ys = [], []
    print(f"{'ttol':>8} {'steps':>6} {'dofs':>6} {'degrees':>12} {'|T_inf - t_N|':>14}")
    for ttol in (1e-3, 1e-4, 1e-5):
        cfg = AdaptConfig(ttol=ttol, stol_plus=1e-6, p=8, r0=3, sigma=0.47, k0=0.01)
        result = AdaptiveSolver(problem, cfg).run()
        gap = abs(result.blowup.T_inf - result.t_N)
        degrees = sorted({rec.r for rec in result.records}, reverse=True)
        print(f"{ttol:8.0e} {len(result.records):6d} {result.temporal_dofs:6d} {str(degrees):>12} {gap:14.3e}")
        xs.append(np.sqrt(result.temporal_dofs))
        ys.append(np.log(gap))
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = np.array(ys) - (slope * np.array(xs) + intercept)
    r2 = 1 - resid @ resid / np.sum((ys - np.mean(ys)) ** 2)
    print(f"log gap ~ {slope:.3f} sqrt(dofs) + {intercept:.2f}   (R^2 = {r2:.4f})")


if __name__ == "__main__":
    main()
