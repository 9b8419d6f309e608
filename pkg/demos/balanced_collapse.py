"""An element that vanishes in the balanced seminorm but not in the symmetrisation norm.

Run: python3 demos/balanced_collapse.py
"""
from opsym.opspace import builtin_space
from opsym.symnorm import sym_norm
from opsym.tro import balanced_example, balanced_seminorm, tro_collapse_check


def main():
    ex = balanced_example()
    b = balanced_seminorm(ex["balanced"], ex["ctx"], restarts=4)
    s = sym_norm(ex["unbalanced"], restarts=4)
    print("balanced   [%.4f, %.4f]  upper route %s, dim J %d"
          % (b.lower, b.upper, b.info["upper_route"], b.info["dim_J"]))
    print("unbalanced [%.4f, %.4f]" % (s.lower, s.upper))
    for M, S in (("C2", "M2"), ("R2", "C"), ("M2", "M2")):
        rep = tro_collapse_check(builtin_space(M), builtin_space(S), samples=20)
        print("collapse %s over %s: passed=%s" % (M, S, rep.passed))


if __name__ == "__main__":
    main()
