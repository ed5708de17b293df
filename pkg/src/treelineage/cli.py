"""Command-line frontend: gen | decompose | encode | compile | to-obdd |
to-ddnnf | prob | oracle-check | intricate | unfold | verify-respects | report.

JSON artifacts stream between subcommands over files or stdin/stdout ("-").
Verification failures exit 1 with a machine-readable diagnostic on stdout;
usage errors exit 2.  The report command writes a CSV of size/width metrics
across an instance family plus matplotlib figures next to it.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import fixtures
from .automaton import automaton_from_json, compile_query, run
from .circuit import (
    build_lineage_circuit,
    check_ddnnf,
    circuit_from_json,
    circuit_to_dot,
    circuit_to_json,
    truth_mask,
)
from .decomposition import (
    AnnotatedTreeEncoding,
    decompose_pathwidth,
    decompose_treewidth,
    decomposition_from_json,
    decomposition_to_json,
    encoding_from_json,
    encoding_to_json,
    tree_encode,
    validate_decomposition,
)
from .errors import TreelineageError
from .intricacy import is_intricate
from .model import (
    Instance,
    ProbabilityValuation,
    Signature,
    generate_instance,
    instance_from_json,
    instance_to_json,
    validate_instance,
)
from .obdd import (
    compile_to_obdd,
    compile_to_obdd_pathwidth,
    obdd_probability,
    obdd_to_dot,
    obdd_to_json,
)
from .probability import brute_force_probability, circuit_probability, ddnnf_probability
from .query import Expr, expression_to_ucq, parse_query, satisfaction_mask, validate_inversion_free
from .unfold import unfold, unfolding_to_json, verify_respects


def _read_json(path):
    if path == "-":
        return json.load(sys.stdin)
    with open(path) as fh:
        return json.load(fh)


def _write(doc, out, raw=False):
    text = doc if raw else json.dumps(doc, indent=2)
    if out in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _load_instance(path):
    doc = _read_json(path)
    inst, probs = instance_from_json(doc)
    validate_instance(inst)
    order = doc.get("domain_order")
    return inst, probs, order


def _query_arg(text):
    if text.startswith("@"):
        with open(text[1:]) as fh:
            text = fh.read().strip()
    return parse_query(fixtures.resolve_query_text(text))


def _decomposition_for(inst, args):
    if getattr(args, "decomposition", None):
        td = decomposition_from_json(_read_json(args.decomposition), path=False)
        validate_decomposition(inst, td)
        return td
    if getattr(args, "path", False):
        return decompose_pathwidth(inst)
    return decompose_treewidth(inst)


def _compile_pipeline(args, inst):
    td = _decomposition_for(inst, args)
    enc = tree_encode(inst, td)
    if getattr(args, "automaton", None):
        a = automaton_from_json(_read_json(args.automaton))
    else:
        a = compile_query(_query_arg(args.query), enc.k, cap_states=args.cap_states)
    return build_lineage_circuit(a, enc)


# --- subcommands ----------------------------------------------------------


def cmd_gen(args):
    sig = Signature.of(*[tuple(r) for r in json.loads(args.signature)]) if args.signature else None
    params = {}
    if sig is not None:
        params["signature"] = sig
    for name in ("n", "side", "left", "right", "facts", "width"):
        v = getattr(args, name, None)
        if v is not None:
            params[name] = v
    if args.family == "random":
        params["seed"] = args.seed
    inst = generate_instance(args.family, **params)
    _write(instance_to_json(inst), args.output)
    return 0


def cmd_decompose(args):
    inst, _, _ = _load_instance(args.instance)
    td = decompose_pathwidth(inst) if args.path else decompose_treewidth(inst)
    validate_decomposition(inst, td)
    _write(decomposition_to_json(td), args.output)
    return 0


def cmd_encode(args):
    inst, _, _ = _load_instance(args.instance)
    td = _decomposition_for(inst, args)
    enc = tree_encode(inst, td)
    _write(encoding_to_json(enc), args.output)
    return 0


def cmd_compile(args):
    inst, _, _ = _load_instance(args.instance)
    c, cd = _compile_pipeline(args, inst)
    if args.format == "dot":
        _write(circuit_to_dot(c), args.output, raw=True)
    else:
        _write(circuit_to_json(c, cd), args.output)
    return 0


def cmd_to_obdd(args):
    c, cd = circuit_from_json(_read_json(args.circuit))
    if cd is None:
        raise TreelineageError("circuit JSON carries no decomposition; re-run compile")
    compiler = compile_to_obdd_pathwidth if args.path else compile_to_obdd
    o = compiler(c, cd, strategy=args.strategy)
    if args.format == "dot":
        _write(obdd_to_dot(o), args.output, raw=True)
    else:
        _write(obdd_to_json(o), args.output)
    return 0


def cmd_to_ddnnf(args):
    inst, _, _ = _load_instance(args.instance)
    c, cd = _compile_pipeline(args, inst)
    report = check_ddnnf(c, check_determinism=len(c.facts()) <= args.determinism_cap)
    doc = circuit_to_json(c, cd)
    doc["ddnnf_report"] = {
        "negation_on_inputs": report.negation_on_inputs,
        "decomposable": report.decomposable,
        "deterministic": report.deterministic,
        "violations": [list(v) for v in report.violations],
    }
    _write(doc, args.output)
    ok = report.negation_on_inputs and report.decomposable and report.deterministic is not False
    return 0 if ok else 1


def cmd_prob(args):
    inst, probs, _ = _load_instance(args.instance)
    if args.probabilities:
        doc = _read_json(args.probabilities)
        probs = ProbabilityValuation({int(i): Fraction(p) for i, p in doc.items()})
    if args.uniform is not None:
        probs = ProbabilityValuation.uniform(inst, Fraction(args.uniform))
    if probs is None:
        probs = ProbabilityValuation.uniform(inst)
    probs.check_covers(inst)
    q = _query_arg(args.query)
    engines = ["brute", "circuit", "ddnnf", "obdd"] if args.engine == "all" else [args.engine]
    results = {}
    c = cd = None
    if set(engines) & {"circuit", "ddnnf", "obdd"}:
        c, cd = _compile_pipeline(args, inst)
    for engine in engines:
        if engine == "brute":
            value = brute_force_probability(q, inst, probs)
        elif engine == "circuit":
            value = circuit_probability(c, cd, probs)
        elif engine == "ddnnf":
            value = ddnnf_probability(c, probs)
        else:
            o = compile_to_obdd(c, cd)
            value = obdd_probability(o, probs)
        results[engine] = value
        _write({"probability": str(value), "engine": engine}, args.output)
    if len(set(results.values())) > 1:
        _write({"error": "engine disagreement", "results": {k: str(v) for k, v in results.items()}}, args.output)
        return 1
    return 0


def cmd_oracle_check(args):
    inst, _, _ = _load_instance(args.instance)
    if len(inst) > args.max_facts:
        raise TreelineageError(f"{len(inst)} facts exceeds --max-facts {args.max_facts}")
    q = _query_arg(args.query)
    c, _ = _compile_pipeline(args, inst)
    got = truth_mask(c)
    want = satisfaction_mask(q, inst)
    if got == want:
        _write({"ok": True, "valuations": 1 << len(inst)}, args.output)
        return 0
    diff = got ^ want
    v = (diff & -diff).bit_length() - 1
    _write(
        {"ok": False, "first_mismatch": sorted(i for i in range(len(inst)) if (v >> i) & 1)},
        args.output,
    )
    return 1


def cmd_intricate(args):
    q = _query_arg(args.query)
    verdict, witness = is_intricate(q, size_guard=args.size_guard)
    _write({"intricate": verdict, "witness": witness.to_json() if witness else None}, args.output)
    return 0


def _load_expression(path):
    return Expr.from_json(_read_json(path))


def cmd_unfold(args):
    inst, _, order = _load_instance(args.instance)
    expr = _load_expression(args.expression)
    unf = unfold(inst, expr, order)
    _write(unfolding_to_json(unf), args.output)
    return 0


def cmd_verify_respects(args):
    inst, _, order = _load_instance(args.instance)
    expr = _load_expression(args.expression)
    unf = unfold(inst, expr, order)
    try:
        verify_respects(inst, unf, expr=expr, cap=args.max_facts)
    except TreelineageError as e:
        _write({"ok": False, "valuation": sorted(getattr(e, "valuation", ()))}, args.output)
        return 1
    _write({"ok": True, "valuations": 1 << len(inst)}, args.output)
    return 0


def cmd_report(args):
    import csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    q = _query_arg(args.query)
    lo, hi = (int(x) for x in args.n_range.split(":"))
    rows = []
    for n in range(lo, hi + 1):
        inst = generate_instance(args.family, n=n)
        td = decompose_pathwidth(inst) if args.path else decompose_treewidth(inst)
        enc = tree_encode(inst, td)
        c, cd = build_lineage_circuit(compile_query(q, enc.k, cap_states=args.cap_states), enc)
        compiler = compile_to_obdd_pathwidth if args.path else compile_to_obdd
        o = compiler(c, cd)
        rows.append(
            {
                "n": n,
                "facts": len(inst),
                "decomposition_width": td.width,
                "circuit_size": len(c),
                "circuit_decomposition_width": cd.width,
                "obdd_width": o.width,
                "obdd_size": o.size,
            }
        )
    csv_path = os.path.join(args.out_dir, "report.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    ns = [r["n"] for r in rows]
    for metric, fname in (
        ("circuit_size", "circuit_size.png"),
        ("obdd_width", "obdd_width.png"),
        ("obdd_size", "obdd_size.png"),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(ns, [r[metric] for r in rows], marker="o")
        ax.set_xlabel("instance size n")
        ax.set_ylabel(metric.replace("_", " "))
        ax.set_title(f"{metric.replace('_', ' ')} on the {args.family} family")
        fig.tight_layout()
        fig.savefig(os.path.join(args.out_dir, fname), dpi=120)
        plt.close(fig)
    _write({"csv": csv_path, "rows": len(rows), "figures": 3}, args.output)
    return 0


# --- argument wiring --------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="treelineage", description=__doc__)
    p.add_argument("--seed", type=int, default=20240801, help="seed for any internal randomness")
    p.add_argument("--cap-states", type=int, default=10**6, help="automaton state-space cap")
    p.add_argument("--cap-width", type=int, default=5 * 10**6, help="message-passing table cap")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(fn=fn)
        sp.add_argument("-o", "--output", default="-")
        return sp

    sp = add("gen", cmd_gen, help="generate a deterministic instance family member")
    sp.add_argument("family", choices=["line", "grid", "tree", "complete_bipartite", "random"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--side", type=int)
    sp.add_argument("--left", type=int)
    sp.add_argument("--right", type=int)
    sp.add_argument("--facts", type=int)
    sp.add_argument("--width", type=int)
    sp.add_argument("--signature", help='JSON list like [["R",2]]')

    sp = add("decompose", cmd_decompose, help="tree or path decomposition of an instance")
    sp.add_argument("-i", "--instance", required=True)
    sp.add_argument("--path", action="store_true", help="path decomposition")

    sp = add("encode", cmd_encode, help="binarized one-fact-per-node tree encoding")
    sp.add_argument("-i", "--instance", required=True)
    sp.add_argument("--decomposition")
    sp.add_argument("--path", action="store_true")

    for name, fn, helptext in (
        ("compile", cmd_compile, "compile a query to a lineage circuit"),
        ("to-ddnnf", cmd_to_ddnnf, "compile and certify the d-DNNF conditions"),
    ):
        sp = add(name, fn, help=helptext)
        sp.add_argument("-q", "--query", help="query text, @file, or a named fixture")
        sp.add_argument("--automaton", help="user-supplied automaton JSON instead of a query")
        sp.add_argument("-i", "--instance", required=True)
        sp.add_argument("--decomposition")
        sp.add_argument("--path", action="store_true")
        sp.add_argument("--format", choices=["json", "dot"], default="json")
        if name == "to-ddnnf":
            sp.add_argument("--determinism-cap", type=int, default=20)

    sp = add("to-obdd", cmd_to_obdd, help="compile a circuit (with decomposition) to an OBDD")
    sp.add_argument("-c", "--circuit", required=True)
    sp.add_argument("--strategy", choices=["auto", "brute", "mp"], default="auto")
    sp.add_argument("--path", action="store_true", help="require a path-shaped decomposition")
    sp.add_argument("--format", choices=["json", "dot"], default="json")

    sp = add("prob", cmd_prob, help="query probability; --engine all cross-checks the four engines")
    sp.add_argument("-q", "--query", required=True)
    sp.add_argument("-i", "--instance", required=True)
    sp.add_argument("-p", "--probabilities", help="JSON map fact index -> rational string")
    sp.add_argument("--uniform", help='uniform probability such as "1/2"')
    sp.add_argument("--engine", choices=["brute", "circuit", "ddnnf", "obdd", "all"], default="all")
    sp.add_argument("--decomposition")
    sp.add_argument("--path", action="store_true")

    sp = add("oracle-check", cmd_oracle_check, help="exhaustive lineage verification against the oracle")
    sp.add_argument("-q", "--query", required=True)
    sp.add_argument("-i", "--instance", required=True)
    sp.add_argument("--decomposition")
    sp.add_argument("--path", action="store_true")
    sp.add_argument("--max-facts", type=int, default=20)

    sp = add("intricate", cmd_intricate, help="decide intricacy of a connected query")
    sp.add_argument("-q", "--query", required=True)
    sp.add_argument("--size-guard", type=int, default=4)

    sp = add("unfold", cmd_unfold, help="lineage-preserving unfolding of a ranked instance")
    sp.add_argument("-i", "--instance", required=True)
    sp.add_argument("-e", "--expression", required=True, help="inversion-free expression JSON")

    sp = add("verify-respects", cmd_verify_respects, help="exhaustive lineage-equality check of an unfolding")
    sp.add_argument("-i", "--instance", required=True)
    sp.add_argument("-e", "--expression", required=True)
    sp.add_argument("--max-facts", type=int, default=14)

    sp = add("report", cmd_report, help="CSV + figures of size/width metrics across a family")
    sp.add_argument("--family", default="line")
    sp.add_argument("--n-range", default="10:40", help="inclusive range lo:hi")
    sp.add_argument("-q", "--query", default="qp")
    sp.add_argument("--path", action="store_true", default=True)
    sp.add_argument("--out-dir", default="reports")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TreelineageError as e:
        _write({"error": type(e).__name__, "message": str(e)}, None)
        return 1


if __name__ == "__main__":
    sys.exit(main())
