"""Decide positivity of a kernel on a finite set and replay the refutation.

Run: python3 demos/kernel_refutation.py
"""
import numpy as np

from opsym import cones
from opsym import fnspace as fs
from opsym import matcore as mc


def main():
    K = fs.KernelFunction(np.array([[1.0, 2.0], [2.0, 1.0]]))
    verdict = fs.is_positive_kernel(K)
    print("positive:", verdict.positive, "min eigenvalue:", verdict.min_eig)
    pair, mu, lam = fs.refutation_pair_from_kernel(K)
    u = fs.tensor_of_kernel(K)
    cert = cones.refutation_from_pair(u, pair)
    print("measure:", mu.to_json(), "integral operator eigenvalue:", lam)
    print("certificate value:", cert.witness.value, "replays:", cones.verify_refutation(u, cert.witness))

    rng = np.random.default_rng(0)
    G = fs.gram_kernel(mc.random_complex(rng, 2, 3, 2))
    print("gram kernel positive:", fs.is_positive_kernel(G).positive)


if __name__ == "__main__":
    main()
