"""Acceptance criteria, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed with
capture disabled) or directly as ``python3 tests/test_acceptance.py``.
"""
import json
import time

import numpy as np
import pytest

from opsym import cli
from opsym import cones
from opsym import cpmaps as cp
from opsym import dualops as do
from opsym import fnspace as fs
from opsym import matcore as mc
from opsym import opspace as osp
from opsym import symnorm as sn
from opsym import trilinear as tl
from opsym import tro
from opsym.errors import WitnessUnavailable

M2 = osp.full_algebra(2)
C = osp.scalars()


def report(capsys, name, ok, detail):
    with capsys.disabled():
        print("\n%s %s: %s" % ("PASS" if ok else "FAIL", name, detail))
    assert ok, detail


def gamma_oracle(t, grid=2000):
    """Rank-one reduction: sup over unit xi, eta of (|B xi| |A^* eta| + |<B xi, A^* eta>|) / 2.

    ``A = p`` and ``B = u_t p``; brute force over a grid of real unit vectors.
    """
    p = np.diag([1.0, 0.0])
    s = np.sqrt(1 - t * t)
    A, B = p, np.array([[t, s], [s, -t]]) @ p
    ang = np.linspace(0, np.pi, grid)
    vecs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    Bx = vecs @ B.T
    Ay = vecs @ A
    nb = np.linalg.norm(Bx, axis=1)[:, None]
    na = np.linalg.norm(Ay, axis=1)[None, :]
    return float(np.max((nb * na + np.abs(Bx @ Ay.T)) / 2))


def test_norm_gap(capsys):
    ts = [0.05, 0.1, 0.2]
    oracle = {t: gamma_oracle(t) for t in ts}
    t0 = time.monotonic()
    rep = cli.cmd_gamma_curve(ts, cli.RunConfig(truncation=4))
    elapsed = time.monotonic() - t0
    problems = []
    for s in rep["summary"]:
        t = s["t"]
        if abs(s["lower"] - oracle[t]) > 1e-3:
            problems.append("t=%g lower %.6f vs oracle %.6f" % (t, s["lower"], oracle[t]))
        if not (s["upper_certified"] and s["upper"] < 1):
            problems.append("t=%g upper %.6f not certified below 1" % (t, s["upper"]))
        if abs(s["haagerup"] - 1) > 1e-9:
            problems.append("t=%g haagerup %.9f" % (t, s["haagerup"]))
    for r in rep["rows"]:
        if abs(r["lower"] - oracle[r["t"]]) > 1e-3:
            problems.append("t=%g k=%d lower %.6f" % (r["t"], r["k"], r["lower"]))
    ks = sorted({r["k"] for r in rep["rows"]})
    if ks != [1, 2, 3, 4]:
        problems.append("levels %s" % ks)
    if elapsed > 60:
        problems.append("runtime %.1fs" % elapsed)
    detail = "; ".join(problems) or "lower = (1+t)/2 at k=1..4, upper < 1, haagerup 1 (%.1fs)" % elapsed
    report(capsys, "norm gap", not problems, detail)


def test_sandwich(capsys):
    rng = np.random.default_rng(2024)
    done, violations, skipped = 0, [], 0
    while done < 200:
        y, x = mc.random_complex(rng, 2, 2), mc.random_complex(rng, 2, 2)
        try:
            sn.find_polarised_witness(M2, C, x, y)
        except WitnessUnavailable:
            skipped += 1
            continue
        u = sn.elementary_es(M2, y, x)
        iv = sn.sym_norm(u, restarts=2, truncation=2, seed=done)
        cross = mc.op_norm(y) * mc.op_norm(x)
        h = sn.haagerup_upper(u).value
        if iv.lower < cross / 4 - 1e-6 or iv.lower > h + 1e-9:
            violations.append((done, iv.lower, cross, h))
        done += 1
    detail = "%d tensors, %d violations, %d skipped without witness" % (done, len(violations), skipped)
    report(capsys, "sandwich", not violations, detail)


def test_kernel_equivalence(capsys):
    rng = np.random.default_rng(7)
    t0 = time.monotonic()
    agree, total, bad = 0, 500, []
    for t in range(total):
        omega = 1 + t % 4
        n = 1 + (t // 4) % 2
        K = fs.random_hermitian_kernel(rng, omega, n, positive=(t % 2 == 0))
        u = fs.tensor_of_kernel(K)
        if fs.is_positive_kernel(K).positive:
            ok = cones.refute_positive(u, seed=t).is_undecided
        else:
            pair, _, lam = fs.refutation_pair_from_kernel(K)
            cert = cones.refutation_from_pair(u, pair)
            ok = cert.is_refuted and cert.witness.value <= -1e-9 and cones.verify_refutation(u, cert.witness)
        if ok:
            agree += 1
        else:
            bad.append(t)
    elapsed = time.monotonic() - t0
    ok = agree == total and elapsed <= 120
    report(capsys, "kernel equivalence", ok, "%d/%d agree in %.1fs%s" % (agree, total, elapsed,
                                                                         "" if not bad else ", bad %s" % bad[:5]))


def test_choi_duality(capsys):
    rng = np.random.default_rng(11)
    worst_trip, disagree, total = 0.0, 0, 100
    for t in range(total):
        n_in, n_out = 2 + t % 2, 2 + (t // 2) % 2
        E = osp.full_algebra(n_in)
        kind = t % 3
        if kind == 0:
            phi = cp.random_cp_map(n_in, n_out, rng)
        elif kind == 1:
            # CP minus a multiple of a transpose-like map: sometimes CP, sometimes not
            base = cp.random_cp_map(n_in, n_out, rng)
            V = mc.random_contraction(rng, n_in, n_out)
            tr = cp.map_from_callable(E, lambda x, V=V: mc.adjoint(V) @ x.T @ V)
            phi = cp.LinMap(E, base.images - float(rng.uniform(0, 3)) * tr.images)
        else:
            phi = cp.random_linmap(E, (n_out, n_out), rng)
        back = cp.map_of_functional(cp.functional_of_map(phi))
        worst_trip = max(worst_trip, float(np.max(np.abs(back.images - phi.images))))
        if cp.is_completely_positive(phi, "sphi")[0] != cp.is_completely_positive(phi, "choi")[0]:
            disagree += 1
    ok = worst_trip <= 1e-12 and disagree == 0
    report(capsys, "choi duality", ok, "round trip %.1e, %d/%d CP verdicts disagree" % (worst_trip, disagree, total))


def test_gns_factorisation(capsys):
    rng = np.random.default_rng(5)
    t0 = time.monotonic()
    bad = []
    for t in range(100):
        k, h = 1 + t % 3, 1 + (t // 3) % 3
        r = 1 + (t // 9) % 3
        E, S = osp.rect_space(k, h), osp.full_algebra(r)
        K = 1 + t % 3
        phi0 = cp.sample_cc_map(E, (K, h), 1 + t % 2, rng)
        psi0 = cp.sample_ucp(S, K, -(-K // r), rng).as_linmap()
        theta = tl.form_from_pair(E, S, phi0.images, psi0.images)
        fac = tl.gns_factorise(theta)
        res, unit = fac.residual(), fac.unit_defect()
        choi = mc.min_eig(cp.choi_matrix(fac.psi)) if fac.K_dim else 0.0
        ti = tl.cb_interval(theta, restarts=2, seed=t)
        pc = cp.cb_norm(fac.phi, restarts=2, seed=t)
        inside = ti.lower - 1e-4 <= pc.lower ** 2 <= ti.upper + 1e-4
        if res > 1e-8 or unit > 1e-10 or choi < -1e-9 or not inside:
            bad.append((t, res, unit, choi, pc.lower ** 2, ti.lower, ti.upper))
    elapsed = time.monotonic() - t0
    ok = not bad and elapsed <= 120
    report(capsys, "gns factorisation", ok, "100 planted forms, %d failures in %.1fs%s"
           % (len(bad), elapsed, "" if not bad else ", first %s" % (bad[0],)))


@pytest.mark.parametrize("M_name,S_name", [("C2", "M2"), ("R2", "C"), ("M2", "M2")])
def test_tro_collapse(capsys, M_name, S_name):
    M, S = osp.builtin_space(M_name), osp.builtin_space(S_name)
    rep = tro.tro_collapse_check(M, S, samples=100, seed=0)
    detail = ("100 samples, excess %.1e, identity gap %.1e, psd min %.1e, synthesis residual %.1e"
              % (rep.max_admissible_excess, rep.max_identity_gap, rep.positive_to_psd_min_eig,
                 rep.psd_to_positive_residual))
    report(capsys, "tro collapse (%s, %s)" % (M_name, S_name), rep.passed, detail)


def test_balanced_collapse(capsys):
    t0 = time.monotonic()
    a = cli.render(cli.cmd_balanced_demo(cli.RunConfig()), "json")
    elapsed = time.monotonic() - t0
    b = cli.render(cli.cmd_balanced_demo(cli.RunConfig()), "json")
    rep = json.loads(a)
    ok = (rep["balanced"]["upper"] == 0.0 and rep["unbalanced"]["lower"] >= 0.25 - 1e-6 and a == b
          and elapsed <= 5)
    detail = "balanced upper %.3g, unbalanced lower %.4f, deterministic %s, %.2fs" % (
        rep["balanced"]["upper"], rep["unbalanced"]["lower"], a == b, elapsed)
    report(capsys, "balanced collapse", ok, detail)


@pytest.mark.parametrize("name,expected", [("D2", True), ("D3", True), ("M3x2", True), ("M4x2", True),
                                           ("C2", False), ("C3", False), ("M2", False)])
def test_dimension_obstructions(capsys, name, expected):
    rep = cli.cmd_dims(cli.RunConfig(), builtin=name)
    got = rep["not_operator_system"]
    report(capsys, "dimension obstruction %s" % name, got is expected,
           "verdict %s (expected %s), dim %d, products %d" % (got, expected, rep["dim"], rep["dim_products"]))


@pytest.mark.parametrize("name", ["C", "R2", "C2"])
def test_dual_pairing(capsys, name):
    E = osp.builtin_space(name)
    worst = do.positivity_transfer(E, samples=100, seed=0)
    rank = mc.rank(do.pairing_matrix(E))
    ok = worst >= -1e-9 and rank == E.dim ** 2
    report(capsys, "dual pairing %s" % name, ok, "min eig %.1e over 100 positives, pairing rank %d/%d"
           % (worst, rank, E.dim ** 2))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
