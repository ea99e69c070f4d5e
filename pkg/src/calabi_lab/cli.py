"""Command-line front end: ``calabi-lab <command> ...``.

Exit codes: 0 success, 2 a certificate or check failed, 1 runtime or
validation error, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_ERROR, EXIT_FAILED, EXIT_USAGE = 0, 1, 2, 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        return complex(*x)
    if isinstance(x, str):
        return complex(x.replace(" ", "").replace("i", "j"))
    return complex(x)


def _coeffs(text: str) -> list:
    """Polynomial coefficients (constant term first) from JSON; pairs are [re, im]."""
    data = json.loads(text)
    if not isinstance(data, list):
        data = [data]
    return [_complex(c) for c in data]


# --------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    from .meshio import dump_json
    from .pipeline import RunConfig, run_construction, write_run

    config = RunConfig.from_json(json.loads(Path(args.config).read_text()))
    t0 = time.perf_counter()
    result = run_construction(config)
    elapsed = time.perf_counter() - t0
    out = Path(args.out) if args.out else Path(args.config).with_suffix("")
    write_run(result, out, timing={"run_construction_s": elapsed})
    print(f"config {config.config_hash()[:16]}  stages 0..{config.J}  {elapsed:.1f} s  -> {out}")
    for s in result.stages[1:]:
        marks = " ".join(f"{k}:{'ok' if c['passed'] else 'FAIL'}" for k, c in s.certificates.items())
        print(f"  stage {s.j}: eps={s.eps:.4g}  {marks}")
    if "cauchy" in result.summary:
        c = result.summary["cauchy"]
        print("  cauchy ratios " + ", ".join(f"{r:.3g}" for r in c["ratios"]) + f"  sum {c['sum']:.3g}")
    if args.print_summary:
        print(dump_json(result.summary))
    passed = all(s.passed for s in result.stages[1:])
    return EXIT_OK if passed else EXIT_FAILED


def cmd_cantor(args) -> int:
    from .cantor import build_cantor_tree, rectangle

    x0, x1, y0, y1 = args.root
    tree = build_cantor_tree(rectangle(x0, x1, y0, y1), args.gamma, args.depth, inset=args.inset)
    bound = tree.max_diameter(0) * ((1 - args.gamma) / 2) ** args.depth
    print("level  pieces  overlaps  max_diameter")
    ok = True
    for i in range(1, args.depth + 1):
        n, ov, dm = len(tree.level(i)), tree.pairwise_overlaps(i), tree.max_diameter(i)
        ok = ok and n == 4**i and ov == 0
        print(f"{i:5d}  {n:6d}  {ov:8d}  {dm:.6g}")
    print(f"diameter bound sqrt(2) w ((1-gamma)/2)^depth = {bound:.6g}")
    if args.svg:
        Path(args.svg).write_text(tree.to_svg(args.level or args.depth))
    if args.json:
        from .meshio import dump_json

        dump_json(tree.to_json(max_level=args.json_levels), args.json)
    return EXIT_OK if ok else EXIT_FAILED


def _rh_inputs(args):
    from .complexgrid import ComplexPolynomial
    from .riemann_hilbert import FiberDiscFamily

    f = ComplexPolynomial(_coeffs(args.f))
    center = ComplexPolynomial(_coeffs(args.center)) if args.center else f
    coefs = [ComplexPolynomial(_coeffs(json.dumps(a))) for a in json.loads(args.fiber)]
    return f, FiberDiscFamily.make(center, coefs)


def cmd_rh_solve(args) -> int:
    from .meshio import dump_json
    from .riemann_hilbert import rh_solve_disc

    f, family = _rh_inputs(args)
    failed = False
    try:
        res = rh_solve_disc(f, family, args.r, args.eps, N_max=args.n_max)
    except RuntimeError as exc:
        res, failed = exc.best, True
        print(f"no N <= {args.n_max} passed; best attempt shown", file=sys.stderr)
    doc = {
        "f": f.to_json(),
        "family": family.to_json(),
        "F": res.F.to_json(),
        "N": res.N,
        "r_prime": res.r_prime,
        "eps": args.eps,
        "certificate": res.certificate.to_json(),
    }
    text = dump_json(doc, args.out)
    if not args.out:
        print(text)
    else:
        print(f"N={res.N} r'={res.r_prime:.6g} passed={res.certificate.passed} -> {args.out}")
    return EXIT_FAILED if failed or not res.certificate.passed else EXIT_OK


def cmd_rh_verify(args) -> int:
    from .complexgrid import ComplexPolynomial
    from .meshio import dump_json
    from .riemann_hilbert import FiberDiscFamily, rh_verify

    doc = json.loads(Path(args.input).read_text())
    cert = rh_verify(ComplexPolynomial.from_json(doc["F"]), ComplexPolynomial.from_json(doc["f"]),
                     FiberDiscFamily.from_json(doc["family"]), float(doc["r_prime"]),
                     float(args.eps if args.eps is not None else doc["eps"]),
                     n_boundary=args.n_boundary, n_radii=args.n_radii)
    print(dump_json(cert.to_json()))
    return EXIT_OK if cert.passed else EXIT_FAILED


_FIELDS = {
    "quadratic": lambda x: np.sum(x * x, axis=-1),
    "saddle": lambda x: x[..., 0] ** 2 + x[..., 1] ** 2 - x[..., 2] ** 2,
    "cylinder": lambda x: x[..., 0] ** 2 + x[..., 1] ** 2,
    "plane": lambda x: x[..., 0],
}


def cmd_convexity(args) -> int:
    from .convexity import VERDICTS, ScalarField3, check_minimal_psh, icosphere, mean_convexity, torus_mesh

    if args.mesh:
        if args.mesh == "sphere":
            v, f = icosphere(args.level, args.radius)
        else:
            v, f = torus_mesh(args.radius, args.minor)
        m, k = mean_convexity(v, f)
        print(f"mesh {args.mesh}: min mean curvature {m:.6g} at vertex {k}")
        return EXIT_OK if m > 0 else EXIT_FAILED
    phi = ScalarField3(_FIELDS[args.phi], box=((-2, 2),) * 3)
    rng = np.random.default_rng(args.seed)
    pts = rng.uniform(-1.5, 1.5, size=(args.samples, 3))
    rep = check_minimal_psh(phi, pts, tol=args.tol)
    print(f"phi={args.phi}: min(l1+l2)={rep.min_value:.6g} verdict={rep.verdict} (n={rep.n_samples}, tol={rep.tolerance:g})")
    return EXIT_FAILED if rep.verdict == VERDICTS[2] else EXIT_OK


def _surface(name: str, h: float):
    from .complexgrid import annulus, disc
    from .weierstrass import WeierstrassData

    if name == "enneper":
        return WeierstrassData(lambda z: np.ones_like(z), lambda z: z, tag="enneper"), disc(1.0, h), 0.0
    if name == "catenoid":
        return WeierstrassData(lambda z: 1 / z**2, lambda z: z, tag="catenoid"), annulus(0.5, 1.5, h), 1.0
    raise ValueError(f"unknown surface {name!r}")


def cmd_weier_integrate(args) -> int:
    from .meshio import write_ply
    from .weierstrass import conformality_residual, harmonic_residual, integrate_triple, triple_from_fg

    data, dom, base = _surface(args.surface, args.h)
    triple = triple_from_fg(data, None, dom)
    imm = integrate_triple(triple, dom.nearest_vertex(base))
    print(f"{args.surface}: {dom.n_vertices} vertices, conformality {conformality_residual(triple.phi):.3e}, "
          f"harmonic residual {harmonic_residual(imm):.3e}")
    if args.ply:
        write_ply(args.ply, imm.positions(), dom.triangles, vertex_scalars={"lambda": imm.metric_density})
    return EXIT_OK


def cmd_weier_flux(args) -> int:
    from .complexgrid import PathInDomain
    from .weierstrass import flux, triple_from_fg

    data, dom, _ = _surface(args.surface, args.h)
    triple = triple_from_fg(data, None, dom)
    loop = PathInDomain.circle(0.0, args.radius, args.n)
    val = flux(triple, loop).value
    print("flux " + " ".join(f"{x:.10g}" for x in val))
    return EXIT_OK


def cmd_nadir_schedule(args) -> int:
    from .nadirashvili import make_schedule

    s = make_schedule(args.r1, args.rho1, args.eps1, args.J)
    rows = min(s.J, args.rows)
    print(f"{'j':>8}  {'r_j':>14}  {'rho_j':>14}  {'eps_j':>12}")
    for j in range(1, rows + 1):
        r, rho, eps = s.at(j)
        print(f"{j:8d}  {r:14.9f}  {rho:14.9f}  {eps:12.6g}")
    if rows < s.J:
        r, rho, eps = s.at(s.J)
        print(f"{'...':>8}\n{s.J:8d}  {r:14.9f}  {rho:14.9f}  {eps:12.6g}")
    print(f"r_inf = {s.r_inf:.12f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "r", "rho", "eps"])
            for j in range(s.J):
                w.writerow([j + 1, repr(float(s.r[j])), repr(float(s.rho[j])), repr(float(s.eps[j]))])
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="calabi-lab", description="Desk-scale laboratory for conformal minimal surfaces.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="staged construction with certificates")
    r.add_argument("--config", required=True, help="JSON run configuration")
    r.add_argument("--out", help="output directory (default: config path without suffix)")
    r.add_argument("--print-summary", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("cantor", help="iterated quad-split Cantor tree")
    c.add_argument("--gamma", type=float, default=0.2)
    c.add_argument("--depth", type=int, default=4)
    c.add_argument("--inset", type=float, default=0.02)
    c.add_argument("--root", type=float, nargs=4, default=(0.0, 1.0, 0.0, 1.0), metavar=("X0", "X1", "Y0", "Y1"))
    c.add_argument("--svg", help="write the pieces of one level as SVG")
    c.add_argument("--level", type=int, help="level drawn in the SVG (default: depth)")
    c.add_argument("--json", help="write the tree as JSON")
    c.add_argument("--json-levels", type=int, default=4, help="levels included in the JSON")
    c.set_defaults(func=cmd_cantor)

    rh = sub.add_parser("rh", help="approximate Riemann-Hilbert problem on the disc")
    rsub = rh.add_subparsers(dest="action", required=True, parser_class=_Parser)
    s = rsub.add_parser("solve")
    s.add_argument("--f", required=True, help="JSON coefficients of f, constant term first")
    s.add_argument("--center", help="fiber centre polynomial (default: f)")
    s.add_argument("--fiber", default="[[0.5]]", help="JSON list of coefficient lists of a_1..a_K")
    s.add_argument("--r", type=float, default=0.5)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--n-max", type=int, default=256)
    s.add_argument("--out", help="result JSON")
    s.set_defaults(func=cmd_rh_solve)
    v = rsub.add_parser("verify")
    v.add_argument("--input", required=True, help="JSON written by 'rh solve'")
    v.add_argument("--eps", type=float)
    v.add_argument("--n-boundary", type=int, default=256)
    v.add_argument("--n-radii", type=int, default=32)
    v.set_defaults(func=cmd_rh_verify)

    cv = sub.add_parser("convexity", help="minimal plurisubharmonicity and mean convexity")
    csub = cv.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ck = csub.add_parser("check")
    ck.add_argument("--phi", choices=sorted(_FIELDS), default="quadratic")
    ck.add_argument("--samples", type=int, default=200)
    ck.add_argument("--seed", type=int, default=0)
    ck.add_argument("--tol", type=float, default=1e-3, help="verdict tolerance (finite-difference Hessians)")
    ck.add_argument("--mesh", choices=("sphere", "torus"), help="check a mesh instead of a field")
    ck.add_argument("--level", type=int, default=5, help="icosphere subdivision level")
    ck.add_argument("--radius", type=float, default=2.0)
    ck.add_argument("--minor", type=float, default=0.5, help="torus minor radius")
    ck.set_defaults(func=cmd_convexity)

    w = sub.add_parser("weier", help="Weierstrass representation")
    wsub = w.add_subparsers(dest="action", required=True, parser_class=_Parser)
    wi = wsub.add_parser("integrate")
    wi.add_argument("--surface", choices=("enneper", "catenoid"), default="enneper")
    wi.add_argument("--h", type=float, default=0.05)
    wi.add_argument("--ply", help="write the immersed mesh")
    wi.set_defaults(func=cmd_weier_integrate)
    wf = wsub.add_parser("flux")
    wf.add_argument("--surface", choices=("enneper", "catenoid"), default="catenoid")
    wf.add_argument("--h", type=float, default=0.1)
    wf.add_argument("--radius", type=float, default=1.0)
    wf.add_argument("--n", type=int, default=1024)
    wf.set_defaults(func=cmd_weier_flux)

    n = sub.add_parser("nadir", help="Nadirashvili schedule")
    nsub = n.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ns = nsub.add_parser("schedule")
    ns.add_argument("--r1", type=float, default=1.0)
    ns.add_argument("--rho1", type=float, default=1.0)
    ns.add_argument("--eps1", type=float, default=0.1)
    ns.add_argument("-J", type=int, default=10)
    ns.add_argument("--rows", type=int, default=50, help="rows printed (the last row is always shown)")
    ns.add_argument("--csv", help="write the full schedule")
    ns.set_defaults(func=cmd_nadir_schedule)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return int(args.func(args))
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
