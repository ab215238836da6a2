"""Temporal convergence of dG(r) and reliability of the conditional bound.

On u_t - u_xx = u + g with exact solution exp(-t) sin(pi x) the sup-norm
error decays like k^(r+1) and the end-of-slab error like k^(2r+1). The
second part marches 50 steps with the estimator constant calibrated on the
elliptic suite and compares the bound with the true reconstruction error.

    python demos/linear_rates.py
"""
import numpy as np

from dgblowup import verify


def main():
    ks = verify.DG_STEPS
    for r in range(4):
        sup_err, nodal_err = verify.dg_errors(r, ks)
        print(f"r = {r}: sup order {verify.fit_order(ks, sup_err):5.2f}   "
              f"nodal order {verify.fit_order(ks, nodal_err):5.2f}   errors {np.array2string(sup_err, precision=2)}")
    res = verify.check_bound_reliability()
    print(f"C_inf = {res.measured['C_inf']:.4f}; worst error / bound over 50 steps = "
          f"{res.measured['max_error_over_bound']:.3f}")


if __name__ == "__main__":
    main()
