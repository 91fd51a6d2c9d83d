"""Compare reduced-model eigenvalues with the one-period propagator over a range of couplings."""
import argparse
import warnings

import numpy as np
from scipy.optimize import linear_sum_assignment

from qdelim import tls
from qdelim.errors import RegimeWarning
from qdelim.lindblad import floquet_exponents, monodromy


def slow_mode_error(p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        red = tls.strong_reduction(p)
    lr = np.linalg.eigvals(red.generator)
    lm = floquet_exponents(monodromy(tls.strong_model(p)), 2 * np.pi / p.w1, lr.size)
    r, c = linear_sum_assignment(np.abs(lr[:, None] - lm[None, :]))
    return float(max(abs(lr[i] - lm[j]) / abs(lm[j]) for i, j in zip(r, c) if abs(lm[j]) > 1e-12))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--eps", type=float, nargs="+", default=[0.05, 0.02, 0.01])
    parser.add_argument("--w2", type=float, default=20.0)
    parser.add_argument("--delta", type=float, default=0.5)
    args = parser.parse_args(argv)
    print("eps,max_rel_error,ratio_to_eps")
    for eps in args.eps:
        err = slow_mode_error(tls.QddStrongParams(eps, 1.0, args.w2, args.delta, 0.8, 0.2))
        print(f"{eps!r},{err!r},{err / eps!r}")


if __name__ == "__main__":
    main()
