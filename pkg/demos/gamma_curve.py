"""Plus-norm of the pair (p, u_t p) against the Haagerup value, as t varies.

Run: python3 demos/gamma_curve.py
"""
import numpy as np

from opsym.cli import gamma_pair
from opsym.opspace import full_algebra
from opsym.symnorm import elementary_es, haagerup_upper, plus_norm


def main():
    M2 = full_algebra(2)
    print("%6s %10s %10s %10s" % ("t", "lower", "upper", "haagerup"))
    for t in np.linspace(0.05, 0.95, 7):
        a, b = gamma_pair(t)
        iv = plus_norm([(a, b)], truncation=2, restarts=2)
        h = haagerup_upper(elementary_es(M2, a, b)).value
        print("%6.3f %10.6f %10.6f %10.6f" % (t, iv.lower, iv.upper, h))


if __name__ == "__main__":
    main()
