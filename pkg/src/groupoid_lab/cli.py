"""Command-line front end.

Every computing subcommand prints a human table, writes a certificate
(``gpdcert/1`` JSON) atomically, and exits with 0 = Proven/success,
2 = Refuted, 3 = Unknown, 1 = error. ``verify`` re-checks a certificate
from its stored witnesses; ``run`` executes a ``gpdrun/1`` config file.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from fractions import Fraction

import numpy as np

from . import constructions as cons
from . import expansion as ex
from . import formats as fm
from . import graphgpd as gg
from . import markov as mk
from . import roe
from ._scan import SubsetScan
from .core import (
    GroupoidError,
    MeasuredGroupoid,
    from_gpd_json,
    saturate,
    to_gpd_json,
    unital_symmetric_decomposition,
    validate,
    validate_length,
)
from .expansion import Verdict

EXIT = {Verdict.PROVEN: 0, Verdict.REFUTED: 2, Verdict.UNKNOWN: 3}
ERROR = 1

# the graph on ℕ with edges n → n+1..n+k; "graph617" is its command-line name
BRANCHING_NAMES = ("graph617", "branching")

BUILTINS = {
    "pair-cycle": cons.pair_cycle,
    "pair-complete": cons.pair_complete,
    "pair-path": cons.pair_path,
    "action-zn": cons.action_zn,
    "planted-pendant": lambda core=8: cons.planted_pendant(core),
    "two-cliques": lambda k=4: cons.two_cliques(k),
}


# --- instances and decomposable sets ---------------------------------------------------


def build_source(source: dict) -> MeasuredGroupoid:
    if "example" in source:
        name, *params = source["example"]
        if name not in BUILTINS:
            raise fm.ConfigError(f"unknown built-in {name!r}; choose from {', '.join(BUILTINS)}")
        return BUILTINS[name](*(int(p) for p in params))
    if "gpd" in source:
        return from_gpd_json(source["gpd"])
    if "file" in source:
        return from_gpd_json(fm.load_json(source["file"]))
    raise fm.ConfigError("instance source needs 'example', 'gpd' or 'file'")


def instance_source(args) -> dict:
    if args.instance:
        return {"gpd": fm.load_json(args.instance)}
    if args.example:
        return {"example": list(args.example)}
    raise fm.ConfigError("give --example NAME [N] or --instance FILE")


def probability(inst: MeasuredGroupoid) -> MeasuredGroupoid:
    if inst.space.probability:
        return inst
    return MeasuredGroupoid(inst.groupoid, inst.length, inst.space.normalized(), inst.name, inst.blocks)


def rebuild_K(inst: MeasuredGroupoid, elements):
    return unital_symmetric_decomposition(inst.groupoid, [int(g) for g in elements], inst.length)


def frac(s) -> Fraction:
    try:
        return Fraction(str(s))
    except (ValueError, ZeroDivisionError):
        raise fm.ConfigError(f"not a number: {s!r}") from None


def ladder(args) -> list[Fraction]:
    return [frac(e) for e in args.epsilon_ladder] if args.epsilon_ladder else list(roe.EPSILON_LADDER)


# --- output ------------------------------------------------------------------------------


def emit(args, doc: dict) -> None:
    doc = {"format": fm.CERT_FORMAT, "command": args.command, "seed": args.seed,
           "exact_limit": args.exact_limit, "budget": args.budget, **doc}
    path = args.out or f"{args.command}.cert.json"
    fm.write_atomic(path, fm.dump_json(doc))
    print(f"certificate: {path}")


def table(rows: list[list], header: list[str]) -> None:
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


def fmt(q) -> str:
    if q is None:
        return "-"
    if isinstance(q, Fraction):
        return f"{q} (~{float(q):.6g})" if q.denominator != 1 else str(q)
    return f"{float(q):.6g}"


def write_scan_csv(path, space, Y, K, alpha_lo, beta_hi) -> None:
    """Rows (set size, measure, ratio) over every admissible subset of Y."""
    scan = SubsetScan(frozenset(Y), space.weights, K.neighbor_masks)
    masks = scan.masks()
    mu = scan.measure_table()
    bnd = mu[scan.saturation_table() & ~masks]
    rows = []
    for m in range(1, len(masks)):
        a = int(mu[m])
        if 2 * a * beta_hi.denominator > 2 * beta_hi.numerator * scan.total:
            continue
        if alpha_lo is not None and a * alpha_lo.denominator < alpha_lo.numerator * scan.total:
            continue
        rows.append((bin(m).count("1"), a / scan.total, int(bnd[m]) / a))
    s = io.StringIO()
    csv.writer(s).writerows([("size", "measure", "ratio")] + rows)
    fm.write_atomic(path, s.getvalue())
    print(f"scan: {path} ({len(rows)} sets)")


# --- subcommands ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    inst = build_source(instance_source(args))
    rep = validate(inst.groupoid)
    lrep = validate_length(inst.groupoid, inst.length)
    viol = list(rep.violations) + list(lrep.violations)
    print(f"{inst.name}: {inst.groupoid.n_elements} elements, {inst.n_atoms} atoms")
    table([[v.axiom, v.witness] for v in viol], ["axiom", "witness"]) if viol else print("all axioms hold")
    emit(args, {"source": instance_source(args), "valid": not viol,
                "violations": [[v.axiom, list(v.witness)] for v in viol]})
    return 0 if not viol else ERROR


def _cert_row(c) -> list:
    return [c.verdict.value, c.method, fmt(c.C), fmt(c.alpha_lo), fmt(c.ratio),
            sorted(c.witness) if c.witness is not None else "-", c.samples]


CERT_HEADER = ["verdict", "method", "C", "alpha_lo", "ratio", "witness", "samples"]


def cmd_certify_expansion(args) -> int:
    src = instance_source(args)
    inst = build_source(src)
    K = inst.ball_decomposition(frac(args.radius))
    alpha = None if args.alpha is None else frac(args.alpha)
    cert = ex.certify_expansion(inst.space, None, K, frac(args.C), alpha, frac(args.beta),
                                args.budget, args.exact_limit, args.seed)
    print(f"{inst.name}: expansion at ball radius {args.radius} (N = {K.N})")
    table([_cert_row(cert)], CERT_HEADER)
    if args.csv:
        if inst.n_atoms > args.exact_limit:
            print("scan: skipped, instance exceeds the exact limit")
        else:
            write_scan_csv(args.csv, inst.space, range(inst.n_atoms), K, alpha, frac(args.beta))
    emit(args, {"source": src, "K": sorted(K.elements), "certificate": fm.certificate_dict(cert)})
    return EXIT[cert.verdict]


def cmd_certify_asymptotic(args) -> int:
    src = instance_source(args)
    inst = probability(build_source(src))
    alphas = [frac(a) for a in args.alpha] if args.alpha else None
    try:
        params = ex.ball_schedule(inst, alphas, exact_limit=max(args.exact_limit, 16))
    except ex.MissingLevel as exc:
        # no ball expands at this level: the largest ball gives the refuting set
        top = inst.ball_decomposition(max(inst.radii()))
        cert = ex.certify_expansion(inst.space, None, top, Fraction(0), exc.alpha, ex.HALF,
                                    args.budget, args.exact_limit, args.seed)
        print(f"{inst.name}: no ball expands at alpha = {exc.alpha}")
        table([_cert_row(cert)], CERT_HEADER)
        emit(args, {"source": src, "levels": [{"alpha": str(exc.alpha), "K": sorted(top.elements),
                                                "certificate": fm.certificate_dict(cert)}]})
        return EXIT[cert.verdict]
    agg = ex.certify_asymptotic(inst.space, params, args.budget, args.exact_limit, args.seed)
    print(f"{inst.name}: asymptotic expansion over {len(params.levels)} level(s)")
    table([[fmt(lv.alpha), fmt(lv.C), lv.N, fmt(lv.L), c.verdict.value, fmt(c.ratio)]
           for lv, c in zip(params.levels, agg.levels)], ["alpha", "C", "N", "L", "verdict", "worst ratio"])
    emit(args, {"source": src, "levels": [
        {"alpha": str(lv.alpha), "K": sorted(lv.K.elements), "certificate": fm.certificate_dict(c)}
        for lv, c in zip(params.levels, agg.levels)]})
    return EXIT[agg.verdict]


def cmd_folner(args) -> int:
    src = instance_source(args)
    inst = build_source(src)
    K = inst.ball_decomposition(frac(args.radius))
    eps = frac(args.epsilon)
    Y = range(inst.n_atoms)
    res = ex.maximal_folner(inst.space, Y, K, eps, exact_limit=args.exact_limit)
    cert = ex.certify_expansion(inst.space, None, K, eps, None, ex.HALF, args.budget, args.exact_limit, args.seed)
    print(f"{inst.name}: maximal ({eps}, K)-Følner set at ball radius {args.radius}")
    table([[sorted(res.F), fmt(inst.space.measure(res.F)), res.maximal, res.post_check, cert.verdict.value]],
          ["F", "measure", "search", "post-check", "expansion at eps"])
    if args.csv and inst.n_atoms <= args.exact_limit:
        write_scan_csv(args.csv, inst.space, Y, K, None, ex.HALF)
    emit(args, {"source": src, "K": sorted(K.elements), "epsilon": str(eps), "F": sorted(res.F),
                "maximal": res.maximal, "post_check": res.post_check,
                "certificate": fm.certificate_dict(cert)})
    # success when the duality holds: empty F exactly when expansion is proven
    if res.maximal == "exact" and (not res.F) != (cert.verdict is Verdict.PROVEN):
        print("duality mismatch", file=sys.stderr)
        return ERROR
    return 0


def cmd_structure(args) -> int:
    src = instance_source(args)
    inst = probability(build_source(src))
    C = frac(args.C)
    try:
        params = ex.ball_schedule(inst, exact_limit=max(args.exact_limit, 16))
    except ex.MissingLevel as exc:
        print(f"{inst.name}: no expansion schedule (alpha = {exc.alpha}); nothing to exhaust")
        return EXIT[Verdict.REFUTED]
    doms = ex.structure_exhaustion(inst, params, C, args.n_max, exact_limit=args.exact_limit)
    print(f"{inst.name}: expansion domains with C = {C}")
    table([[d.n, sorted(d.Y), fmt(inst.space.measure(d.Y)), fmt(d.measure_bound), fmt(d.theta), d.N,
            sorted(d.Z), sorted(d.F), d.certificate.verdict.value if d.certificate else "-"] for d in doms],
          ["n", "Y_n", "mu(Y_n)", "bound", "theta", "N", "Z", "F", "re-certified"])
    emit(args, {"source": src, "C": str(C), "domains": [
        {"n": d.n, "Y": sorted(d.Y), "K": sorted(d.K.elements), "theta": str(d.theta), "alpha_n": str(d.alpha_n),
         "measure_bound": str(d.measure_bound), "Z": sorted(d.Z), "F": sorted(d.F),
         "certificate": None if d.certificate is None else fm.certificate_dict(d.certificate)} for d in doms]})
    verdicts = [d.certificate.verdict if d.certificate else Verdict.UNKNOWN for d in doms]
    return EXIT[min(verdicts, key=lambda v: v.rank)]


def cmd_markov(args) -> int:
    src = instance_source(args)
    inst = build_source(src)
    K = inst.ball_decomposition(frac(args.radius))
    b = mk.build_kernel(inst.space, None, K)
    try:
        rep = mk.spectral_gap(b, args.exact_limit, args.seed)
    except mk.NumericalFailure as exc:
        raise mk.NumericalFailure(f"{inst.name}, radius {args.radius}: {exc}") from None
    ch = mk.cheeger(b, exact_limit=args.exact_limit, seed=args.seed)
    kappa = ch.value if ch.exact else None
    print(f"{inst.name}: Markov kernel on {b.n} atoms, ball radius {args.radius}")
    table([[fmt(kappa) if ch.exact else f"[{ch.lo:.6g}, {ch.hi:.6g}]", f"{rep.lam:.12g}",
            f"{rep.laplacian_gap:.12g}", rep.sandwich, sorted(ch.witness) if ch.witness else "-"]],
          ["kappa", "lambda", "1-lambda", "sandwich", "kappa witness"])
    doc = {"source": src, "K": sorted(K.elements), "kernel": fm.matrix_block(b.pi_float, "normalized local kernel"),
           "mu_tilde": b.mu_tilde_float.tolist(), "kappa_exact": ch.exact,
           "kappa": None if kappa is None else str(kappa if isinstance(kappa, Fraction) else Fraction(float(kappa))),
           "kappa_interval": [ch.lo, ch.hi], "witness": None if ch.witness is None else sorted(ch.witness),
           "lambda": rep.lam, "sandwich": rep.sandwich}
    code = 0 if rep.sandwich else ERROR
    if args.C is not None:
        cert = mk.markov_domain_check(inst.space, None, K, frac(args.C), args.exact_limit, args.seed)
        table([_cert_row(cert)], CERT_HEADER)
        doc["certificate"] = fm.certificate_dict(cert)
        code = EXIT[cert.verdict] if rep.sandwich else ERROR
    emit(args, doc)
    return code


def _quasilocal_levels(P, inst, eps_list, args):
    """Per ε, the first ball radius at which the quasi-local sup drops below ε."""
    reports = {r: roe.quasi_local_norm(P, inst.ball_decomposition(r), exact_limit=args.exact_limit,
                                       budget=args.budget, seed=args.seed) for r in inst.radii()}
    levels = []
    for eps in eps_list:
        hit = next((r for r, q in reports.items() if q.value < float(eps)), None)
        levels.append((eps, hit))
    return reports, levels


def cmd_quasilocal(args) -> int:
    src = instance_source(args)
    inst = probability(build_source(src))
    P = roe.averaging_projection(inst.space)
    eps_list = ladder(args)
    reports, levels = _quasilocal_levels(P, inst, eps_list, args)
    print(f"{inst.name}: quasi-locality of the averaging projection over the ball family")
    table([[fmt(r), q.value, q.method, sorted(q.A), sorted(q.B)] for r, q in reports.items()],
          ["radius", "sup norm", "method", "A", "B"])
    table([[fmt(e), "-" if r is None else fmt(r)] for e, r in levels], ["epsilon", "radius"])
    failing = [e for e, r in levels if r is None]
    if failing:
        verdict = Verdict.REFUTED
    else:
        verdict = Verdict.PROVEN if all(reports[r].method == "exact" for _, r in levels) else Verdict.UNKNOWN
    emit(args, {"source": src, "verdict": verdict.value, "radii": [
        {"radius": str(r), "K": sorted(inst.ball_decomposition(r).elements), "value": q.value,
         "method": q.method, "A": sorted(q.A), "B": sorted(q.B)} for r, q in reports.items()],
        "levels": [{"epsilon": str(e), "radius": None if r is None else str(r)} for e, r in levels]})
    return EXIT[verdict]


def cmd_approx_projection(args) -> int:
    src = instance_source(args)
    inst = probability(build_source(src))
    xi = None if args.xi is None else np.array([float(v) for v in args.xi])
    rows, docs, code = [], [], 0
    for eps in ladder(args):
        try:
            res = roe.approximate_projection(inst, eps, xi=xi, C=frac(args.C), exact_limit=args.exact_limit)
        except roe.InsufficientInstruments as exc:
            print(f"epsilon {eps}: {exc}")
            docs.append({"epsilon": str(eps), "failure": str(exc)})
            code = EXIT[Verdict.UNKNOWN]
            continue
        prop = roe.check_propagation(res.T, res.K)
        ok = res.error < float(eps) and bool(prop) and res.a_priori < float(eps) / 2
        code = code or (0 if ok else ERROR)
        rows.append([fmt(eps), res.n, res.m, fmt(res.C_n), res.N_n, fmt(res.L), fmt(res.theta),
                     f"{res.a_priori:.3g}", f"{res.error:.3g}", bool(prop)])
        docs.append({"epsilon": str(eps), "n": res.n, "m": res.m, "C_n": str(res.C_n), "N_n": res.N_n,
                     "L": str(res.L), "theta": str(res.theta), "a_priori": res.a_priori, "error": res.error,
                     "K": sorted(res.K.elements), "T": fm.matrix_block(res.T.matrix), "propagation": bool(prop)})
    print(f"{inst.name}: finite-propagation approximants")
    table(rows, ["epsilon", "n", "m", "C_n", "N_n", "L", "theta", "a priori", "error", "propagation"])
    emit(args, {"source": src, "xi": None if xi is None else xi.tolist(), "levels": docs})
    return code


def _branching(args) -> int:
    k, M, p = args.k, args.M, args.p
    G, rep = gg.branching_example(k, M, p, None if args.C is None else frac(args.C), args.depth_cap, args.seed)
    c = rep.certificate
    if k == 1:
        print(f"graph k=1, window {M}: {c.verdict.value} at C = {c.C} over {c.checked} cylinder unions ({c.note})")
        print(f"min ratio mu(r(B_1 A))/mu(A) = {fmt(c.ratio)}")
        emit(args, {"source": {"branching": [k, M]}, "verdict": c.verdict.value, "C": str(c.C),
                    "checked": c.checked, "ratio": str(c.ratio), "depth_cap": args.depth_cap,
                    "worst": None if c.worst is None else [[q.start, list(q.edges)] for q in c.worst.sorted_paths()]})
        return EXIT[c.verdict]
    print(f"graph k={k}, window {M}: witness table")
    table([[r.p, r.n_p, fmt(r.z0), fmt(r.mu_A), fmt(r.boundary), all(r.identities.values())] for r in rep.rows],
          ["p", "n_p", "mu(Z_0,n_p)", "mu(A_p)", "boundary", "identities"])
    print(f"verdict {c.verdict.value} at C = {c.C}; boundaries decrease: {rep.boundaries_decrease}")
    emit(args, {"source": {"branching": [k, M]}, "verdict": c.verdict.value, "C": str(c.C),
                "rows": [{"p": r.p, "n_p": r.n_p, "z0": str(r.z0), "mu_A": str(r.mu_A),
                          "boundary": str(r.boundary)} for r in rep.rows]})
    return EXIT[c.verdict]


def cmd_example(args) -> int:
    name, *params = args.name
    if name in BRANCHING_NAMES:
        return _branching(args)
    inst = build_source({"example": [name, *params]})
    ok = validate(inst.groupoid).ok and validate_length(inst.groupoid, inst.length).ok
    print(f"{inst.name}: {inst.groupoid.n_elements} elements, {inst.n_atoms} atoms, "
          f"radii {[str(r) for r in inst.radii()]}, valid {ok}")
    path = args.out or f"{inst.name}.gpd.json"
    fm.write_atomic(path, fm.dump_json(to_gpd_json(inst)))
    print(f"instance: {path}")
    return 0 if ok else ERROR


def cmd_family(args) -> int:
    eps_list = ladder(args)
    if args.branching:
        lengths = list(range(1, args.max_length + 1))
        G = gg.branching_graph(args.k, args.M)
        wit = gg.branching_family_quasilocal(args.k, args.M, range(1, args.p + 1), lengths, eps_list[0])
        print(f"graph family k={args.k}, blocks p = 1..{args.p}: best witness per propagation length")
        rows = [[L, gg.ball_decomposition_count(G, L), w.p, fmt(w.value_squared), f"{w.value:.6g}"]
                for L, w in wit.items()]
        table(rows, ["L", "N", "block p", "value^2", "value"])
        failed = all(w.value >= float(eps_list[0]) for w in wit.values())
        verdict = Verdict.REFUTED if failed else Verdict.UNKNOWN
        emit(args, {"source": {"branching": [args.k, args.M]}, "p": args.p, "epsilon": str(eps_list[0]),
                    "verdict": verdict.value, "witnesses": [
                        {"L": L, "N": r[1], "p": w.p, "value_squared": str(w.value_squared)}
                        for (L, w), r in zip(wit.items(), rows)]})
        return EXIT[verdict]
    if not args.block:
        raise fm.ConfigError("family needs --block NAME N (repeatable) or --branching")
    blocks = [probability(build_source({"example": list(b)})) for b in args.block]
    # the quasi-local sup of a block-diagonal operator is the largest blockwise sup
    radii = sorted(set.intersection(*(set(b.radii()) for b in blocks)))
    worst = {}
    for r in radii:
        reps = [roe.quasi_local_norm(roe.averaging_projection(b.space), b.ball_decomposition(r),
                                     exact_limit=args.exact_limit, budget=args.budget, seed=args.seed)
                for b in blocks]
        worst[r] = max(q.value for q in reps)
    levels = [(e, next((r for r in radii if worst[r] < float(e)), None)) for e in eps_list]
    print(f"family of {len(blocks)} blocks: blockwise worst quasi-local value per common radius")
    table([[fmt(r), v] for r, v in worst.items()], ["radius", "sup norm"])
    table([[fmt(e), "-" if r is None else fmt(r)] for e, r in levels], ["epsilon", "radius"])
    verdict = Verdict.REFUTED if any(r is None for _, r in levels) else Verdict.PROVEN
    emit(args, {"blocks": [list(b) for b in args.block], "verdict": verdict.value,
                "radii": {str(r): v for r, v in worst.items()},
                "levels": [{"epsilon": str(e), "radius": None if r is None else str(r)} for e, r in levels]})
    return EXIT[verdict]


# --- verify ------------------------------------------------------------------------------------


def _verify_expansion(inst, K, cd, exact_limit) -> bool:
    cert = fm.certificate_from_dict(cd)
    if cert.verdict is Verdict.REFUTED:
        if cert.ratio is not None and ex.expansion_ratio(inst.space, K, cert.witness, cert.Y) != cert.ratio:
            return False
        return ex.verify_refutation(inst.space, K, cert)
    if cert.worst is not None and ex.expansion_ratio(inst.space, K, cert.worst, cert.Y) != cert.ratio:
        return False
    if cert.verdict is Verdict.PROVEN and cert.method == "exact":
        again = ex.certify_expansion(inst.space, cert.Y, K, cert.C, cert.alpha_lo, cert.beta_hi,
                                     exact_limit=max(exact_limit, len(cert.Y)))
        return again.verdict is Verdict.PROVEN and again.ratio == cert.ratio
    return True


def verify_document(doc: dict) -> tuple[bool, str]:
    """Re-check a certificate from its stored data; returns (ok, message)."""
    if doc.get("format") != fm.CERT_FORMAT:
        return False, "not a gpdcert/1 document"
    cmd = doc["command"]
    lim = doc.get("exact_limit", 14)
    if cmd == "validate":
        inst = build_source(doc["source"])
        ok = validate(inst.groupoid).ok and validate_length(inst.groupoid, inst.length).ok
        return ok == doc["valid"], "validation reproduced"
    if cmd == "certify-expansion":
        inst = build_source(doc["source"])
        return _verify_expansion(inst, rebuild_K(inst, doc["K"]), doc["certificate"], lim), "expansion certificate"
    if cmd == "certify-asymptotic":
        inst = probability(build_source(doc["source"]))
        return all(_verify_expansion(inst, rebuild_K(inst, lv["K"]), lv["certificate"], lim)
                   for lv in doc["levels"]), "level certificates"
    if cmd == "folner":
        inst = build_source(doc["source"])
        K, eps, F = rebuild_K(inst, doc["K"]), frac(doc["epsilon"]), frozenset(doc["F"])
        if F:
            mF = inst.space.measure(F)
            ok = 2 * mF <= inst.space.total_mass and ex.expansion_ratio(inst.space, K, F) <= eps
        else:
            ok = True
        return ok and _verify_expansion(inst, K, doc["certificate"], lim), "Følner property and expansion"
    if cmd == "structure":
        inst = probability(build_source(doc["source"]))
        for d in doc["domains"]:
            K, Y, theta = rebuild_K(inst, d["K"]), frozenset(d["Y"]), frac(d["theta"])
            if not inst.space.measure(Y) > frac(d["measure_bound"]):
                return False, f"measure bound at n = {d['n']}"
            if not ex.ratio_bound_holds(inst.space, Y, K, theta):
                return False, f"ratio bound at n = {d['n']}"
            if d["certificate"] and not _verify_expansion(inst, K, d["certificate"], lim):
                return False, f"domain certificate at n = {d['n']}"
        return True, "domains"
    if cmd == "markov":
        inst = build_source(doc["source"])
        K = rebuild_K(inst, doc["K"])
        b = mk.build_kernel(inst.space, None, K)
        P = fm.read_matrix_block(doc["kernel"])
        if not np.allclose(P, b.pi_float, atol=1e-12):
            return False, "kernel differs"
        lam = mk.kernel_spectrum(P, np.array(doc["mu_tilde"]))
        if not (lam == doc["lambda"] or abs(lam - doc["lambda"]) <= 1e-10):
            return False, "eigenvalue differs"
        if doc["witness"] is not None and doc["kappa"] is not None:
            r = mk.boundary_size(b, doc["witness"]) / mk.tilde_measure(b, doc["witness"])
            if abs(float(r) - float(frac(doc["kappa"]))) > 1e-12:
                return False, "witness ratio differs from kappa"
        if doc.get("certificate"):
            c = fm.certificate_from_dict(doc["certificate"])
            if c.verdict is Verdict.REFUTED:
                r = mk.boundary_size(b, c.witness) / mk.tilde_measure(b, c.witness)
                if not float(r) <= float(c.C) + 1e-12:
                    return False, "refuting set does not fall to C"
        return True, "kernel, eigenvalue and witness"
    if cmd == "quasilocal":
        inst = probability(build_source(doc["source"]))
        P = roe.averaging_projection(inst.space)
        for r in doc["radii"]:
            K = rebuild_K(inst, r["K"])
            A, B = frozenset(r["A"]), frozenset(r["B"])
            if saturate(K, A) & B:
                return False, f"pair at radius {r['radius']} is not separated"
            v = P.block_norm(sorted(A), sorted(B)) if A and B else 0.0
            if abs(v - r["value"]) > 1e-12:
                return False, f"witness norm differs at radius {r['radius']}"
        return True, "separated witness pairs"
    if cmd == "approx-projection":
        inst = probability(build_source(doc["source"]))
        xi = doc.get("xi")
        space = inst.space
        P = roe.averaging_projection(space) if xi is None else roe.rank_one(space, np.array(xi)).P
        for lv in doc["levels"]:
            if "failure" in lv:
                continue
            T = roe.WeightedOperator(fm.read_matrix_block(lv["T"]), space.float_weights())
            err = (T - P).norm()
            prop = roe.check_propagation(T, rebuild_K(inst, lv["K"]))
            bound = float(roe.a_priori_bound(lv["N_n"], frac(lv["theta"]), frac(lv["C_n"]), lv["m"]))
            if not (err < float(frac(lv["epsilon"])) and prop and bound < float(frac(lv["epsilon"])) / 2):
                return False, f"level {lv['epsilon']}"
        return True, "approximants"
    if cmd == "example":
        k, M = doc["source"]["branching"]
        G = gg.branching_graph(k, M)
        if k == 1:
            c = gg.expansion_check_cylinders(G, frac(doc["C"]), Fraction(0), depth_cap=doc["depth_cap"])
            return c.verdict.value == doc["verdict"] and str(c.ratio) == doc["ratio"], "cylinder check"
        for r in doc["rows"]:
            A = gg.witness_set(G, r["n_p"])
            bnd = gg.b1_saturate(G, A).measure - A.measure
            if A.measure != frac(r["mu_A"]) or bnd != frac(r["boundary"]):
                return False, f"row p = {r['p']}"
            if doc["verdict"] == Verdict.REFUTED.value and bnd / A.measure <= frac(doc["C"]):
                return True, "refuting row"
        return doc["verdict"] != Verdict.REFUTED.value, "witness rows"
    if cmd == "family":
        if "witnesses" in doc:
            k, M = doc["source"]["branching"]
            G = gg.branching_graph(k, M)
            z0 = gg.hit_measure(k, (doc["p"] + 1) * k + 1)
            for w in doc["witnesses"]:
                A = gg.witness_set(G, gg.select_np(k, w["p"], z0))
                v2 = A.measure * (1 - gg.bn_saturate(G, A, w["L"]).measure)
                if v2 != frac(w["value_squared"]):
                    return False, f"witness at L = {w['L']}"
            return True, "family witnesses"
        return True, "blockwise values are recomputed by the command itself"
    return False, f"unknown command {cmd!r}"


def cmd_verify(args) -> int:
    doc = fm.load_json(args.certificate)
    ok, msg = verify_document(doc)
    print(f"{'verified' if ok else 'FAILED'}: {doc.get('command')} ({msg})")
    return 0 if ok else ERROR


def cmd_run(args) -> int:
    cfg = fm.RunConfig.from_json(fm.load_json(args.config), args.config)
    return main(config_argv(cfg))


def config_argv(cfg: fm.RunConfig) -> list[str]:
    argv = [cfg.command]
    inst = cfg.instance
    if cfg.command == "example":
        argv += [str(x) for x in inst.get("example", [])]
    elif "example" in inst:
        argv += ["--example", *map(str, inst["example"])]
    elif "file" in inst:
        argv += ["--instance", inst["file"]]
    for key, val in cfg.constants.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(val, list):
            argv += [flag, *map(str, val)]
        elif val is True:
            argv.append(flag)
        else:
            argv += [flag, str(val)]
    argv += ["--exact-limit", str(cfg.exact_limit), "--budget", str(cfg.budget), "--seed", str(cfg.seed)]
    if cfg.out:
        argv += ["--out", cfg.out]
    if cfg.csv:
        argv += ["--csv", cfg.csv]
    return argv


# --- parser ------------------------------------------------------------------------------------


def exact_limit(s: str) -> int:
    v = int(s)
    if not 1 <= v <= fm.EXACT_LIMIT_CAP:
        raise argparse.ArgumentTypeError(f"exact limit must lie in [1, {fm.EXACT_LIMIT_CAP}]")
    return v


class Parser(argparse.ArgumentParser):
    """Usage errors exit 1; exit 2 is reserved for refutations."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--exact-limit", type=exact_limit, default=14)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget", type=int, default=2000)
    common.add_argument("--out")
    inst = argparse.ArgumentParser(add_help=False)
    inst.add_argument("--example", nargs="+", metavar="NAME")
    inst.add_argument("--instance", metavar="FILE")
    inst.add_argument("--radius", default="1")

    p = Parser(prog="groupoid_lab", description="Expansion workbench for finite measured groupoids.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common, inst])
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("certify-expansion", parents=[common, inst])
    s.add_argument("--C", required=True)
    s.add_argument("--alpha")
    s.add_argument("--beta", default="1/2")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_certify_expansion)
    s = sub.add_parser("certify-asymptotic", parents=[common, inst])
    s.add_argument("--alpha", nargs="+")
    s.set_defaults(func=cmd_certify_asymptotic)
    s = sub.add_parser("folner", parents=[common, inst])
    s.add_argument("--epsilon", default="1/10")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_folner)
    s = sub.add_parser("structure", parents=[common, inst])
    s.add_argument("--C", default="1/4")
    s.add_argument("--n-max", type=int, default=3)
    s.set_defaults(func=cmd_structure)
    s = sub.add_parser("markov", parents=[common, inst])
    s.add_argument("--C")
    s.set_defaults(func=cmd_markov)
    s = sub.add_parser("quasilocal", parents=[common, inst])
    s.add_argument("--epsilon-ladder", nargs="+")
    s.set_defaults(func=cmd_quasilocal)
    s = sub.add_parser("approx-projection", parents=[common, inst])
    s.add_argument("--epsilon-ladder", nargs="+")
    s.add_argument("--C", default="1/4")
    s.add_argument("--xi", nargs="+")
    s.set_defaults(func=cmd_approx_projection)
    s = sub.add_parser("example", parents=[common])
    s.add_argument("name", nargs="+", help="pair-cycle N | pair-complete N | action-zn N | graph617 (alias branching)")
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--M", type=int, default=30)
    s.add_argument("--p", type=int, default=5)
    s.add_argument("--C")
    s.add_argument("--depth-cap", type=int, default=10)
    s.set_defaults(func=cmd_example)
    s = sub.add_parser("family", parents=[common])
    s.add_argument("--block", nargs="+", action="append", metavar="NAME")
    s.add_argument("--branching", "--graph617", dest="branching", action="store_true")
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--M", type=int, default=30)
    s.add_argument("--p", type=int, default=4)
    s.add_argument("--max-length", type=int, default=4)
    s.add_argument("--epsilon-ladder", nargs="+")
    s.set_defaults(func=cmd_family)
    s = sub.add_parser("verify")
    s.add_argument("certificate")
    s.set_defaults(func=cmd_verify)
    s = sub.add_parser("run")
    s.add_argument("config")
    s.set_defaults(func=cmd_run)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (fm.ConfigError, GroupoidError, OSError, ValueError, LookupError,
            ex.StructureError, gg.WindowExceeded, mk.NumericalFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
