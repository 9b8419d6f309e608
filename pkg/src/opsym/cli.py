"""Command-line runner: ``opsym <subcommand> [flags]``.

Every subcommand builds a report dictionary that embeds the toolkit version
and a hash of the run configuration; ``--out json`` prints it as sorted JSON,
``--out csv`` prints a flat table.  Equal configurations give byte-identical
output as long as ``--budget-ms`` does not cut a run short.
"""
import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from . import matcore as mc
from .errors import BadRange, OpsymError, ParseError


@dataclass
class RunConfig:
    seed: int = 0
    restarts: int = 4
    truncation: int = 4
    tol: float = 1e-9
    out: str = "json"
    budget_ms: int = 0

    def config_hash(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def header(self):
        return {"version": __version__, "config_hash": self.config_hash(), "config": asdict(self)}


class Budget:
    """Wall-clock allowance; ``0`` means unlimited."""

    def __init__(self, ms):
        self.ms = int(ms or 0)
        self.start = time.monotonic()

    def expired(self):
        return self.ms > 0 and (time.monotonic() - self.start) * 1000.0 > self.ms


def load_json(path):
    """Read a JSON file; syntax errors become :class:`ParseError` with line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError("cannot read %s: %s" % (path, exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("%s: line %d column %d: %s" % (path, exc.lineno, exc.colno, exc.msg)) from exc


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


# --- gamma curve ----------------------------------------------------------------

def gamma_pair(t):
    """``(p, u_t p)`` with ``p = E_11`` and the reflection ``u_t = [[t, s], [s, -t]]``, ``s = sqrt(1 - t^2)``."""
    s = np.sqrt(1 - t * t)
    p = np.diag([1.0, 0.0]).astype(complex)
    u = np.array([[t, s], [s, -t]], dtype=complex)
    return p, u @ p


def cmd_gamma_curve(ts, cfg):
    """``plus_norm`` of ``(p, u_t p)`` per ``t`` and level, next to the Haagerup value.

    :raises BadRange: unless every ``t`` lies in ``(0, 1)``
    """
    from .opspace import full_algebra
    from .symnorm import elementary_es, haagerup_upper, plus_norm

    ts = [float(t) for t in ts]
    for t in ts:
        if not 0 < t < 1:
            raise BadRange("t must lie in (0, 1), got %r" % t)
    budget = Budget(cfg.budget_ms)
    rows, summary = [], []
    truncated = False
    M2 = full_algebra(2)
    for t in ts:
        if budget.expired():
            truncated = True
            break
        a, b = gamma_pair(t)
        iv = plus_norm([(a, b)], truncation=cfg.truncation, restarts=cfg.restarts, seed=cfg.seed)
        for k, val in enumerate(iv.info["per_k"], start=1):
            rows.append({"t": t, "k": k, "lower": float(val), "estimate": float(val)})
        h = haagerup_upper(elementary_es(M2, a, b)).value
        summary.append({"t": t, "lower": iv.lower, "upper": iv.upper, "upper_certified": iv.upper_certified,
                        "haagerup": float(h), "gap": bool(iv.upper_certified and iv.upper < 1 - 1e-3)})
    rep = cfg.header()
    rep.update({"command": "gamma-curve", "rows": rows, "summary": summary, "truncated": truncated})
    return rep


# --- kernels --------------------------------------------------------------------

def cmd_kernel_check(path, cfg, witness_path=None):
    """PSD verdict for a kernel file; a refutation witness is written on failure."""
    from .cones import refutation_from_pair
    from .fnspace import is_positive_kernel, kernel_from_json, refutation_pair_from_kernel, tensor_of_kernel

    K = kernel_from_json(load_json(path))
    verdict = is_positive_kernel(K, cfg.tol)
    rep = cfg.header()
    rep.update({"command": "kernel-check", "kernel": os.path.basename(path), "positive": verdict.positive,
                "min_eig": verdict.min_eig})
    if not verdict.positive:
        pair, mu, lam = refutation_pair_from_kernel(K, cfg.tol)
        u = tensor_of_kernel(K)
        cert = refutation_from_pair(u, pair, cfg.tol)
        rep["witness_value"] = cert.witness.value if cert.is_refuted else None
        rep["integral_eigenvalue"] = lam
        rep["measure"] = mu.to_json()
        if witness_path:
            _write_json(witness_path, {"tensor": u.to_json(), "certificate": cert.to_json(),
                                       "measure": mu.to_json()})
            rep["witness_file"] = os.path.basename(witness_path)
    return rep


def replay_refutation(obj):
    """Re-verify a witness file written by ``kernel-check``; returns ``(ok, value)``."""
    from .cones import refutation_witness_from_json, verify_refutation
    from .symnorm import tensor_from_json

    u = tensor_from_json(obj["tensor"])
    w = refutation_witness_from_json(obj["certificate"]["witness"], u.E, u.S)
    return verify_refutation(u, w), w.value


# --- dimension obstructions ---------------------------------------------------------

DIMS_BUILTINS = ("D2", "D3", "C2", "C3", "M2", "M3x2", "M4x2")


def cmd_dims(cfg, builtin=None, path=None):
    """Dimension obstruction for ``X ⊗_s X^*``.

    A built-in name ``X`` is read as the first factor, so the tested space is
    ``E = X^*`` (``dim span(E^* E) < (dim E)^2`` flags a non-system).  A space
    file is tested literally as ``E``.
    """
    from .cones import dimension_report
    from .opspace import adjoint_space, builtin_space, space_from_json
    from .tro import TroSpace, is_tro, tro_collapse_check

    if (builtin is None) == (path is None):
        raise ParseError("give exactly one of a built-in name or a space file")
    if builtin is not None:
        X = builtin_space(builtin)
        E = adjoint_space(X)
        label = builtin
    else:
        E = space_from_json(load_json(path))
        label = os.path.basename(path)
    rep = cfg.header()
    rep.update({"command": "dims", "input": label})
    rep.update({k: v for k, v in dimension_report(E).items() if k != "space"})
    ok, _ = is_tro(E)
    if ok and TroSpace(E).left.dim == 1:
        from .opspace import scalars
        chk = tro_collapse_check(E, scalars(), samples=20, seed=cfg.seed)
        rep["tro_collapse"] = {"passed": chk.passed, "samples": chk.samples}
    return rep


# --- GNS ----------------------------------------------------------------------------

def cmd_gns(path, cfg, outdir=None):
    """Factorise a trilinear form file and write ``phi.json``, ``psi.json`` and ``gram.json``."""
    from .cpmaps import cb_norm
    from .trilinear import cb_interval, form_from_json, gns_factorise

    theta = form_from_json(load_json(path))
    fac = gns_factorise(theta)
    rep = cfg.header()
    rep.update({"command": "gns", "K_dim": fac.K_dim, "residual": fac.residual(), "unit_defect": fac.unit_defect()})
    if fac.K_dim > 0:
        ti = cb_interval(theta, restarts=cfg.restarts, seed=cfg.seed)
        pi = cb_norm(fac.phi, restarts=cfg.restarts, seed=cfg.seed)
        rep["theta_cb"] = ti.to_json()
        rep["phi_cb"] = pi.to_json()
        rep["cb_identity_ok"] = bool(pi.lower ** 2 <= ti.upper + 1e-4 and ti.lower <= pi.upper ** 2 + 1e-4)
    else:
        rep["cb_identity_ok"] = True
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        _write_json(os.path.join(outdir, "phi.json"), fac.phi.to_json())
        _write_json(os.path.join(outdir, "psi.json"), fac.psi.to_json())
        _write_json(os.path.join(outdir, "gram.json"), mc.matrix_to_json(fac.gram))
        rep["files"] = ["phi.json", "psi.json", "gram.json"]
    return rep


# --- norms --------------------------------------------------------------------------

def cmd_norms(path, cfg):
    """Symmetrisation interval and Haagerup upper bound of a tensor file."""
    from .symnorm import haagerup_upper, sym_norm, tensor_from_json

    u = tensor_from_json(load_json(path))
    iv = sym_norm(u, restarts=cfg.restarts, truncation=cfg.truncation, seed=cfg.seed)
    h = haagerup_upper(u)
    rep = cfg.header()
    rep.update({"command": "norms", "n": u.n, "sym": iv.to_json(), "haagerup_upper": float(h.value)})
    return rep


# --- TRO collapse -------------------------------------------------------------------

def cmd_tro_verify(cfg, M_name="C2", S_name="M2", samples=100):
    from .opspace import builtin_space
    from .tro import tro_collapse_check

    M = builtin_space(M_name)
    S = builtin_space(S_name)
    chk = tro_collapse_check(M, S, samples=samples, seed=cfg.seed)
    rep = cfg.header()
    rep.update({"command": "tro-verify", "M": M_name, "S": S_name})
    rep.update(chk.to_json())
    return rep


# --- duals --------------------------------------------------------------------------

def cmd_dual_check(cfg, spaces=("C", "R2", "C2"), samples=100):
    from .dualops import dual_space, iota_gap_search, pairing_matrix, positivity_transfer
    from .opspace import builtin_space

    budget = Budget(cfg.budget_ms)
    results = []
    truncated = False
    for name in spaces:
        if budget.expired():
            truncated = True
            break
        E = builtin_space(name)
        D = dual_space(E)
        P = pairing_matrix(E)
        W = np.zeros((1, 1, E.dim), dtype=complex)
        W[0, 0, 0] = 1
        f0 = D.norm(W, restarts=cfg.restarts, seed=cfg.seed)
        transfer = positivity_transfer(E, samples=samples, seed=cfg.seed)
        entry = {"space": name, "dim": E.dim, "pairing_rank": mc.rank(P), "pairing_full_rank": mc.rank(P) == E.dim ** 2,
                 "dual_basis_defect": float(np.max(np.abs(D.pairing_matrix() - np.eye(E.dim)))),
                 "f0_norm": f0.to_json(), "transfer_min_eig": transfer,
                 "transfer_ok": transfer >= -cfg.tol}
        if E.k == 1 and E.dim == E.h and E.dim > 1:
            g = iota_gap_search(E, samples=4, seed=cfg.seed, restarts=cfg.restarts)
            entry["iota_gap"] = {"sym_upper": g.sym_interval.upper, "iota_norm": g.iota_norm, "gap": g.gap}
        results.append(entry)
    rep = cfg.header()
    rep.update({"command": "dual-check", "spaces": results, "truncated": truncated})
    return rep


# --- balanced example ---------------------------------------------------------------

def cmd_balanced_demo(cfg):
    from .symnorm import sym_norm
    from .tro import balanced_example, balanced_seminorm

    ex = balanced_example()
    b = balanced_seminorm(ex["balanced"], ex["ctx"], restarts=cfg.restarts, seed=cfg.seed)
    s = sym_norm(ex["unbalanced"], restarts=cfg.restarts, truncation=cfg.truncation, seed=cfg.seed)
    rep = cfg.header()
    rep.update({"command": "balanced-demo", "balanced": b.to_json(), "unbalanced": s.to_json(),
                "collapse": bool(b.upper <= 1e-9 and s.lower >= 0.25 - 1e-6)})
    return rep


# --- output -------------------------------------------------------------------------

def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], "%s.%s" % (prefix, k) if prefix else str(k))
    elif isinstance(obj, list) and obj and all(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            yield from _flatten(v, "%s.%d" % (prefix, i))
    else:
        yield prefix, obj


def render(report, fmt):
    """Serialise a report; gamma-curve CSV uses the columns ``t, k, lower, estimate``."""
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if report.get("command") == "gamma-curve":
        w.writerow(["t", "k", "lower", "estimate"])
        for r in report["rows"]:
            w.writerow([repr(r["t"]), r["k"], repr(r["lower"]), repr(r["estimate"])])
    else:
        w.writerow(["key", "value"])
        for k, v in _flatten(report):
            w.writerow([k, repr(v) if isinstance(v, float) else json.dumps(v) if isinstance(v, list) else v])
    return buf.getvalue()


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--restarts", type=int, default=4, help="optimiser restarts")
    common.add_argument("--truncation", type=int, default=4, help="largest multiplicity level k")
    common.add_argument("--tol", type=float, default=1e-9, help="positivity tolerance")
    common.add_argument("--out", choices=["json", "csv"], default="json", help="report format")
    common.add_argument("--budget-ms", type=int, default=0, help="wall-clock budget, 0 for none")
    common.add_argument("--output", default=None, help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(prog="opsym", description="Symmetrised operator-space experiments")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gamma-curve", parents=[common], help="plus-norm curve of (p, u_t p)")
    p.add_argument("--t", type=float, nargs="*", default=[], help="values of t in (0, 1)")

    p = sub.add_parser("kernel-check", parents=[common], help="PSD verdict for a kernel file")
    p.add_argument("kernel")
    p.add_argument("--witness", default=None, help="where to write a refutation witness")

    p = sub.add_parser("dims", parents=[common], help="dimension obstruction report")
    p.add_argument("--builtin", default=None, help="one of %s" % ", ".join(DIMS_BUILTINS))
    p.add_argument("space", nargs="?", default=None, help="space JSON file")

    p = sub.add_parser("gns", parents=[common], help="factorise a positive trilinear form")
    p.add_argument("form")
    p.add_argument("--outdir", default=None)

    p = sub.add_parser("norms", parents=[common], help="symmetrisation and Haagerup norms of a tensor file")
    p.add_argument("tensor")

    p = sub.add_parser("tro-verify", parents=[common], help="collapse check for a TRO and a module system")
    p.add_argument("--M", default="C2")
    p.add_argument("--S", default="M2")
    p.add_argument("--samples", type=int, default=100)

    p = sub.add_parser("dual-check", parents=[common], help="dual pairing checks")
    p.add_argument("--spaces", nargs="*", default=["C", "R2", "C2"])
    p.add_argument("--samples", type=int, default=100)

    sub.add_parser("balanced-demo", parents=[common], help="balanced versus unbalanced norm of y* (x) x")
    return parser


def run(args):
    cfg = RunConfig(args.seed, args.restarts, args.truncation, args.tol, args.out, args.budget_ms)
    c = args.command
    if c == "gamma-curve":
        return cmd_gamma_curve(args.t, cfg)
    if c == "kernel-check":
        return cmd_kernel_check(args.kernel, cfg, args.witness)
    if c == "dims":
        return cmd_dims(cfg, builtin=args.builtin, path=args.space)
    if c == "gns":
        return cmd_gns(args.form, cfg, args.outdir)
    if c == "norms":
        return cmd_norms(args.tensor, cfg)
    if c == "tro-verify":
        return cmd_tro_verify(cfg, args.M, args.S, args.samples)
    if c == "dual-check":
        return cmd_dual_check(cfg, tuple(args.spaces), args.samples)
    return cmd_balanced_demo(cfg)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        report = run(args)
    except OpsymError as exc:
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 2
    text = render(report, args.out)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0
