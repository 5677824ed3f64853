"""Command-line entry point: ``trifr <subcommand> ...``.

Exit codes: 0 success, 1 a check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from trifr import __version__
from trifr.correction import (
    CorrectionStabilityError,
    conservation_residual,
    correction_field,
    correction_matrix,
)
from trifr.operators import OperatorError, build_modal_operators, nodal_operators, sbp_residual, symmetry_ops
from trifr.polybasis import from_barycentric, solution_points
from trifr.qfamily import (
    CLOSED_FORM_LIMITS,
    FAMILY_SIZE,
    K4_PRINTED_FORMS,
    TABLE_K6,
    QFamilyError,
    QParams,
    constraint_residual,
    q_matrix,
    stability_limit,
    stability_limit_eig,
    stability_verdict,
)
from trifr import sd as sdmod
from trifr import solver


class UsageError(Exception):
    pass


def fmt(x) -> str:
    # shortest string that round-trips exactly
    return repr(float(x))


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _ints(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _range(text: str) -> np.ndarray:
    a, b, s = (float(v) for v in text.split(":"))
    n = int(round((b - a) / s)) + 1
    return a + s * np.arange(n)


def _out(args, name) -> Path | None:
    if name is None:
        return None
    p = Path(name)
    if args.out_dir and not p.is_absolute():
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        p = Path(args.out_dir) / p
    return p


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _params(k, q):
    try:
        return QParams(k, q)
    except QFamilyError as exc:
        raise UsageError(str(exc)) from exc


# {{{ subcommands

def cmd_operators(args):
    modal = build_modal_operators(args.k)
    ops = modal if args.frame == "modal" else nodal_operators(modal, solution_points(args.k))
    print(f"k={args.k} frame={ops.frame} sbp_residual={fmt(sbp_residual(ops))}")
    if args.out_dir:
        for name in ("M", "Dx", "Dy", "L", "W", "N"):
            path = _out(args, f"{name}_k{args.k}_{ops.frame}.csv")
            np.savetxt(path, getattr(ops, name), delimiter=",", fmt="%.17g")
    return 0


def _verify_lines(ks, q, scale):
    lines = []

    def add(check, k, params, value, tol):
        verdict = "PASS" if value < tol else "FAIL"
        lines.append((check, k, params, value, tol, verdict))

    for k in ks:
        modal = build_modal_operators(k)
        nodal = nodal_operators(modal, solution_points(k))
        add("sbp_modal", k, "", sbp_residual(modal), 1e-11 * scale)
        add("sbp_nodal", k, "", sbp_residual(nodal), 1e-11 * scale)
        if k not in FAMILY_SIZE:
            continue
        qv = q if q is not None else (0.0,) * FAMILY_SIZE[k]
        params = _params(k, qv)
        Q = q_matrix(params)
        label = ";".join(fmt(v) for v in qv)
        add("q_constraints", k, label, constraint_residual(Q, modal, symmetry_ops(k)), 1e-11 * scale)
        verdict = stability_verdict(Q, modal)
        if verdict == "stable":
            lines.append(("positive_definite", k, label, 0.0, 0.0, "PASS"))
            add("conservation", k, label, conservation_residual(modal, Q), 1e-11 * scale)
        else:
            lines.append(("positive_definite", k, label, float("nan"), 0.0,
                          "MARGINAL" if verdict == "marginal" else "FAIL"))
    return lines


def cmd_verify(args):
    ks = _ints(args.k)
    q = _floats(args.q) if args.q else None
    if q is not None:
        for k in ks:
            _params(k, q)
    lines = _verify_lines(ks, q, args.tolerance_scale)
    header = ("check", "k", "params", "residual", "tolerance", "verdict")
    meta = f"# trifr {__version__} config {hashlib.sha1(repr((ks, q)).encode()).hexdigest()[:12]}"
    for ln in lines:
        print(",".join(fmt(v) if isinstance(v, float) else str(v) for v in ln))
    path = _out(args, args.report)
    if path:
        with open(path, "w") as fh:
            fh.write(meta + "\n")
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for ln in lines:
                w.writerow([fmt(v) if isinstance(v, float) else v for v in ln])
    failed = [ln for ln in lines if ln[-1] != "PASS"]
    if failed:
        print("first failure: " + ",".join(str(v) for v in failed[0]), file=sys.stderr)
        return 1
    return 0


def cmd_stability_limit(args):
    c = stability_limit(args.k)
    print(f"k={args.k} c_min={fmt(c)} eigen_oracle={fmt(stability_limit_eig(args.k))}")
    if args.k in CLOSED_FORM_LIMITS:
        print(f"closed_form={fmt(CLOSED_FORM_LIMITS[args.k])}")
    if args.k == 4:
        for label, v in K4_PRINTED_FORMS.items():
            print(f"printed {label} = {fmt(v)}")
    if args.k == 6:
        print(f"tabulated={fmt(TABLE_K6)}")
    return 0


def table1_rows():
    rows = []
    for k in range(1, 7):
        c = stability_limit(k)
        ref = CLOSED_FORM_LIMITS.get(k)
        closed = ref if ref is not None else TABLE_K6
        rows.append((k, c, "" if ref is None else ref, abs(c - closed) / abs(closed)))
    return rows


def cmd_table1(args):
    rows = table1_rows()
    header = ("k", "c_min_numeric", "c_min_closed_form", "rel_error")
    path = _out(args, args.out or "table1.csv")
    _write_csv(path, header, rows)
    for r in rows:
        print(",".join(fmt(v) if isinstance(v, float) else str(v) for v in r))
    return 0


def cmd_q(args):
    params = _params(args.k, _floats(args.q))
    Q = q_matrix(params).Q
    ops = build_modal_operators(args.k)
    print(f"k={args.k} verdict={stability_verdict(Q, ops)} "
          f"constraint_residual={fmt(constraint_residual(Q, ops, symmetry_ops(args.k)))}")
    if args.dump:
        np.savetxt(_out(args, args.dump), Q, delimiter=",", fmt="%.17g")
    return 0


def triangle_grid(n: int) -> np.ndarray:
    lam = [(i / (n - 1), j / (n - 1), 1 - (i + j) / (n - 1))
           for i in range(n) for j in range(n - i)]
    return from_barycentric(np.array(lam))


def cmd_correction(args):
    ops = build_modal_operators(args.k)
    Q = q_matrix(_params(args.k, _floats(args.q))).Q if args.q else None
    try:
        C = correction_matrix(ops, Q)
    except CorrectionStabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"k={args.k} conservation_residual={fmt(conservation_residual(ops, Q))}")
    if args.field:
        if not 0 <= args.flux_point < ops.n_flux:
            raise UsageError(f"flux point must be in 0..{ops.n_flux - 1}")
        pts = triangle_grid(args.grid)
        vals = correction_field(ops, C, args.flux_point, pts)
        rows = [(float(x), float(y), float(v)) for (x, y), v in zip(pts, vals)]
        path = _out(args, args.out or f"correction_k{args.k}_fp{args.flux_point}.csv")
        _write_csv(path, ("x", "y", "div_h"), rows)
    return 0


def cmd_sd(args):
    if args.dim == 1:
        roots = sdmod.sd1d_root_search(args.k)
        if not roots:
            print(f"k={args.k}: NO SOLUTION")
            return 0
        for z in roots:
            r = sdmod.sd1d_solve_q(args.k, z)
            q0 = Fraction(r.q[0]).limit_denominator(1000)
            zs = ", ".join(f"{v:.6f}" for v in z)
            print(f"z = {zs}, q0 = {q0}, {'STABLE' if r.stable else 'UNSTABLE'}")
        return 0

    if args.k == 1:
        grid = [()]
        orbit = "centroid"
    else:
        orbit = args.orbit
        g = _range(args.z_grid) if args.z_grid else np.arange(0.05, 0.46, 0.05)
        if orbit in ("020", "001"):
            grid = [(a, b) for a in g for b in g if a != b]
        else:
            grid = [(z,) for z in g]
    rep = sdmod.sd_tri_search(args.k, orbit, grid)
    print(rep.verdict)
    if args.out:
        width = max(len(r[0]) for r in rep.rows) if rep.rows else 0
        header = [f"z{i + 1}" for i in range(width)] + ["min_residual"]
        _write_csv(_out(args, args.out), header,
                   [tuple(float(v) for v in r[0]) + (float(r[1]),) for r in rep.rows])
    return 0 if rep.best is not None else 1


def _write_run_outputs(args, res: solver.RunResult):
    prefix = res.config.out_prefix or "run"
    if res.config.equation == "euler":
        _write_csv(_out(args, f"{prefix}_errors.csv"), ("t", "E1", "E2"),
                   [(t, e[0], e[1]) for t, e in zip(res.times, res.errors)])
    _write_csv(_out(args, f"{prefix}_energy.csv"), ("t", "energy"),
               list(zip(res.times, res.energy)))
    from trifr.polybasis import BasisSet, vandermonde, volume_quadrature
    rule = volume_quadrature(23)
    I = vandermonde(BasisSet(res.config.k), rule.points) @ np.linalg.inv(res.disc.ops.V)
    xq = res.disc.mesh.map(rule.points).reshape(-1, 2)
    vals = (res.u[:, 0] @ I.T).ravel()
    _write_csv(_out(args, f"{prefix}_field.csv"), ("x", "y", "rho"),
               [(float(x), float(y), float(v)) for (x, y), v in zip(xq, vals)])


def cmd_run(args):
    cfg = solver.load_config(args.config)
    res = solver.run_case(cfg)
    _write_run_outputs(args, res)
    last = res.errors[-1]
    msg = f"t={fmt(res.times[-1])} energy={fmt(res.energy[-1])}"
    if last is not None:
        msg += f" E1={fmt(last[0])} E2={fmt(last[1])}"
    print(msg)
    return 0


def cmd_convergence(args):
    base = solver.load_config(args.config)
    nxs = _ints(args.nx)
    rows = []
    for n in nxs:
        cfg = solver.CaseConfig(**{**base.__dict__, "n_x": n})
        res = solver.run_case(cfg, record_every=10**9)
        e1, e2 = res.errors[-1]
        rows.append((n, e1, e2))
        print(f"n_x={n} E1={fmt(e1)} E2={fmt(e2)}")
    o1, m1 = solver.convergence_order([r[1] for r in rows], nxs)
    o2, m2 = solver.convergence_order([r[2] for r in rows], nxs)
    print(f"order E1={fmt(o1)} E2={fmt(o2)}" + ("" if m1 and m2 else " (non-monotone)"))
    if args.report:
        _write_csv(_out(args, args.report), ("n_x", "E1", "E2"),
                   rows + [("order", o1, o2)])
    return 0

# }}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trifr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance-scale", type=float, default=1.0)
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("operators", help="dump the operator bundle")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--frame", choices=("modal", "nodal"), default="modal")
    s.set_defaults(func=cmd_operators)

    s = sub.add_parser("verify", help="run the verification suite")
    s.add_argument("--k", default="1-4")
    s.add_argument("--q", default=None)
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("stability-limit")
    s.add_argument("--k", type=int, required=True, choices=range(1, 7))
    s.set_defaults(func=cmd_stability_limit)

    s = sub.add_parser("table1", help="stability limits for k = 1..6")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_table1)

    s = sub.add_parser("q")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--q", required=True)
    s.add_argument("--dump", default=None)
    s.set_defaults(func=cmd_q)

    s = sub.add_parser("correction")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--q", default=None)
    s.add_argument("--field", action="store_true")
    s.add_argument("--flux-point", type=int, default=0)
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_correction)

    s = sub.add_parser("sd")
    s.add_argument("--dim", type=int, choices=(1, 2), required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--orbit", default="collocated", choices=("collocated", "020", "001"))
    s.add_argument("--z-grid", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sd)

    s = sub.add_parser("run")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("convergence")
    s.add_argument("--config", required=True)
    s.add_argument("--nx", default="10,15,20")
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except (UsageError, OperatorError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
