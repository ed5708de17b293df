"""OBDDs and the bounded-treewidth circuit-to-OBDD compiler.

The compiler builds the OBDD level by level under the decomposition-derived
variable order: each level's nodes are equivalence classes of partial
valuations, children of the previous level merged whenever their restricted
functions coincide.  Dead variables keep their levels (pass-through nodes),
so the width is the honest per-level node count under a total order.

Two interchangeable equivalence tests back the merging step:

* ``brute``  -- bit-parallel comparison of the full restricted truth table,
  meant for small suffixes;
* ``mp``     -- the difference-circuit test: two constant-restricted copies
  of the circuit joined by a 5-gate XOR, checked for satisfiability by
  message passing over the doubled-and-patched tree decomposition.

The default ``auto`` strategy uses brute force once at most
``brute_threshold`` variables remain and message passing above that.
"""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass
from fractions import Fraction

from .circuit import (
    AND,
    CONST,
    INPUT,
    NOT,
    OR,
    Circuit,
    CircuitDecomposition,
    build_difference_circuit,
    evaluate_circuit_masks,
    input_bit_masks,
    propagate_constants,
    rewrite_fanin2,
)
from .errors import MissingInput, NotAPath
from .msgpass import DEFAULT_ENTRY_CAP, circuit_satisfiable


@dataclass(frozen=True)
class VariableOrder:
    order: tuple  # fact indices

    def position(self, fact):
        return self.order.index(fact)

    def __len__(self):
        return len(self.order)


def variable_order(c: Circuit, cd: CircuitDecomposition) -> VariableOrder:
    """In-order traversal of the decomposition, children sorted by subtree
    variable count (descending, ties by preorder); variables emitted at their
    shallowest bag."""
    depth = {cd.root: 0}
    pre = cd.preorder()
    pre_index = {n: i for i, n in enumerate(pre)}
    for n in pre:
        for ch in cd.children[n]:
            depth[ch] = depth[n] + 1
    facts_at = {n: [] for n in range(len(cd.bags))}
    for fact, gate in sorted(c.input_gates.items()):
        holders = [n for n in range(len(cd.bags)) if gate in cd.bags[n]]
        home = min(holders, key=lambda n: (depth[n], pre_index[n]))
        facts_at[home].append(fact)

    counts = {}
    for n in reversed(pre):
        counts[n] = len(facts_at[n]) + sum(counts[ch] for ch in cd.children[n])

    order = []

    def emit(n):
        kids = sorted(cd.children[n], key=lambda ch: (-counts[ch], pre_index[ch]))
        if kids:
            emit(kids[0])
        order.extend(sorted(facts_at[n]))
        for ch in kids[1:]:
            emit(ch)

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 2 * len(cd.bags) + 100))
    try:
        emit(cd.root)
    finally:
        sys.setrecursionlimit(old)
    return VariableOrder(tuple(order))


class Obdd:
    """Leveled quasi-reduced OBDD: level l nodes test order[l]; leaves sit at level n."""

    def __init__(self, order):
        self.order = tuple(order)
        self.levels = [[] for _ in range(len(order) + 1)]
        self.level_of = []
        self.lo = []
        self.hi = []
        self.value = []  # leaf value or None
        self.root = None

    def new_node(self, level, lo=None, hi=None, value=None):
        nid = len(self.level_of)
        self.level_of.append(level)
        self.lo.append(lo)
        self.hi.append(hi)
        self.value.append(value)
        self.levels[level].append(nid)
        return nid

    @property
    def size(self):
        return len(self.level_of)

    @property
    def width(self):
        return max(len(l) for l in self.levels)

    def structure(self):
        """Hashable full description, for node-for-node comparisons."""
        return (
            self.order,
            tuple(tuple(l) for l in self.levels),
            tuple(self.lo),
            tuple(self.hi),
            tuple(self.value),
            self.root,
        )

    def check_paths(self):
        """Every root-leaf path tests each variable exactly once, in order."""
        n = len(self.order)
        for nid in range(self.size):
            lvl = self.level_of[nid]
            if lvl < n:
                assert self.value[nid] is None
                for child in (self.lo[nid], self.hi[nid]):
                    assert self.level_of[child] == lvl + 1
            else:
                assert self.value[nid] in (0, 1)
        return True


def evaluate_obdd(o: Obdd, valuation) -> bool:
    node = o.root
    for fact in o.order:
        if fact not in valuation:
            raise MissingInput(f"no value for fact #{fact}")
        node = o.hi[node] if valuation[fact] else o.lo[node]
    return bool(o.value[node])


def obdd_probability(o: Obdd, pi) -> Fraction:
    """Pr[o = 1] under independent fact probabilities (bottom-up weighted sum)."""
    vals = {}
    for nid in o.levels[len(o.order)]:
        vals[nid] = Fraction(o.value[nid])
    for level in range(len(o.order) - 1, -1, -1):
        p = pi[o.order[level]]
        for nid in o.levels[level]:
            vals[nid] = (1 - p) * vals[o.lo[nid]] + p * vals[o.hi[nid]]
    return vals[o.root]


# --- the level-by-level compiler ---------------------------------------------


def _cse(c: Circuit) -> Circuit:
    """Merge structurally identical gates; fold complementary AND/OR literals."""
    out = Circuit()
    rep = {}
    seen = {}
    for g in range(len(c)):
        kind = c.kinds[g]
        ins = tuple(rep[i] for i in c.inputs_of[g])
        if kind == AND and len(ins) == 2:
            a, b = ins
            if (out.kinds[b] == NOT and out.inputs_of[b] == (a,)) or (
                out.kinds[a] == NOT and out.inputs_of[a] == (b,)
            ):
                rep[g] = seen.setdefault((CONST, (), False), out.const(False))
                continue
        if kind == OR and len(ins) == 2:
            a, b = ins
            if (out.kinds[b] == NOT and out.inputs_of[b] == (a,)) or (
                out.kinds[a] == NOT and out.inputs_of[a] == (b,)
            ):
                rep[g] = seen.setdefault((CONST, (), True), out.const(True))
                continue
        key = (kind, ins, c.payload[g] if kind in (INPUT, CONST) else None)
        if key in seen:
            rep[g] = seen[key]
        else:
            rep[g] = out.add(kind, ins, c.payload[g])
            seen[key] = rep[g]
    out.output = rep[c.output]
    return out


class _Equivalence:
    """Equivalence oracle over partial valuations of a fixed circuit."""

    def __init__(self, circuit, cd, order, strategy, brute_threshold, seed, cap_entries):
        self.c = circuit
        self.cd = cd
        self.order = order
        self.strategy = strategy
        self.brute_threshold = brute_threshold
        self.cap_entries = cap_entries
        self.pos = {f: i for i, f in enumerate(order)}
        rng = random.Random(seed)
        # one batch of 64 completions per level, shared by all classes there
        self.completions = [
            [rng.getrandbits(64) for _ in order] for _ in range(len(order) + 1)
        ]

    def use_brute(self, level):
        if self.strategy == "brute":
            return True
        if self.strategy == "mp":
            return False
        return len(self.order) - level <= self.brute_threshold

    def residual(self, rep):
        """Constant-propagated restriction of the circuit under ``rep``."""
        restricted = Circuit()
        mapping = {}
        for g in range(len(self.c)):
            kind = self.c.kinds[g]
            if kind == INPUT and self.c.payload[g] in rep:
                mapping[g] = restricted.const(rep[self.c.payload[g]])
            elif kind == INPUT:
                mapping[g] = restricted.add(INPUT, (), self.c.payload[g])
            elif kind == CONST:
                mapping[g] = restricted.const(self.c.payload[g])
            else:
                mapping[g] = restricted.add(kind, tuple(mapping[i] for i in self.c.inputs_of[g]))
        restricted.output = mapping[self.c.output]
        folded, _, known = propagate_constants(restricted, None)
        if known is not None:
            folded = Circuit()
            folded.output = folded.const(known)
        return folded

    def residual_key(self, residual):
        return (
            tuple(residual.kinds),
            tuple(residual.inputs_of),
            tuple(p if k in (INPUT, CONST) else None for k, p in zip(residual.kinds, residual.payload)),
            residual.output,
        )

    def brute_mask(self, residual, level):
        rest = self.order[level:]
        bits = input_bit_masks(len(rest))
        masks = {f: bits[i] for i, f in enumerate(rest)}
        return evaluate_circuit_masks(residual, masks, 1 << len(rest))

    def fingerprint(self, residual, level):
        rest = self.order[level:]
        comp = self.completions[level]
        masks = {f: comp[self.pos[f]] for f in rest}
        return evaluate_circuit_masks(residual, masks, 64)

    def equivalent_mp(self, rep_a, rep_b):
        """The difference-circuit test: restrictions differ iff the XOR is satisfiable."""
        diff, dd = build_difference_circuit(self.c, self.cd, rep_a, rep_b)
        folded, fd, known = propagate_constants(diff, dd)
        if known is not None:
            return not known
        merged, _, known2 = propagate_constants(_cse(folded), None)
        if known2 is not None:
            return not known2
        return not circuit_satisfiable(folded, fd, self.cap_entries)


def compile_to_obdd(
    c: Circuit,
    cd: CircuitDecomposition,
    strategy: str = "auto",
    brute_threshold: int = 16,
    seed: int = 20240801,
    cap_entries=None,
) -> Obdd:
    """OBDD equivalent to ``c`` under the order derived from ``cd``.

    Nodes at each level are pairwise non-equivalent; levels of variables the
    function ignores are kept as pass-through levels.
    """
    order = variable_order(c, cd)
    work, work_cd = rewrite_fanin2(c, cd)
    eq = _Equivalence(
        work,
        work_cd,
        order.order,
        strategy,
        brute_threshold,
        seed,
        cap_entries if cap_entries is not None else DEFAULT_ENTRY_CAP,
    )
    o = Obdd(order.order)
    n = len(order.order)

    root_residual = eq.residual({})
    o.root = o.new_node(0)
    reps = {o.root: {}}
    residuals = {o.root: root_residual}

    for level in range(n):
        var = order.order[level]
        next_level = level + 1
        by_structure = {}
        by_mask = {}
        buckets = {}
        new_reps, new_residuals = {}, {}
        brute = eq.use_brute(next_level)
        for parent in o.levels[level]:
            for bit in (0, 1):
                rep = dict(reps[parent])
                rep[var] = bit
                residual, _, known = propagate_constants_with_const(residuals[parent], var, bit)
                if known is not None:
                    residual = Circuit()
                    residual.output = residual.const(known)
                target = None
                skey = eq.residual_key(residual)
                if skey in by_structure:
                    target = by_structure[skey]
                elif brute:
                    mask = eq.brute_mask(residual, next_level)
                    target = by_mask.get(mask)
                    if target is None:
                        target = o.new_node(next_level)
                        by_mask[mask] = target
                        by_structure[skey] = target
                        new_reps[target] = rep
                        new_residuals[target] = residual
                else:
                    fp = eq.fingerprint(residual, next_level)
                    for cand in buckets.get(fp, ()):
                        if eq.equivalent_mp(new_reps[cand], rep):
                            target = cand
                            break
                    if target is None:
                        target = o.new_node(next_level)
                        buckets.setdefault(fp, []).append(target)
                        by_structure[skey] = target
                        new_reps[target] = rep
                        new_residuals[target] = residual
                if bit:
                    o.hi[parent] = target
                else:
                    o.lo[parent] = target
        reps, residuals = new_reps, new_residuals

    # the last level's classes are constants: convert to leaves
    for nid in o.levels[n]:
        res = residuals[nid]
        if res.kinds[res.output] == CONST:
            o.value[nid] = 1 if res.payload[res.output] else 0
        else:
            o.value[nid] = 1 if evaluate_circuit_masks(res, {}, 1) & 1 else 0
    return o


def propagate_constants_with_const(c: Circuit, fact, bit):
    """Restrict one input of an already-folded circuit and re-fold."""
    restricted = Circuit()
    mapping = {}
    for g in range(len(c)):
        kind = c.kinds[g]
        if kind == INPUT and c.payload[g] == fact:
            mapping[g] = restricted.const(bit)
        elif kind == INPUT:
            mapping[g] = restricted.add(INPUT, (), c.payload[g])
        elif kind == CONST:
            mapping[g] = restricted.const(c.payload[g])
        else:
            mapping[g] = restricted.add(kind, tuple(mapping[i] for i in c.inputs_of[g]))
    restricted.output = mapping[c.output]
    return propagate_constants(restricted, None)


def compile_to_obdd_pathwidth(c: Circuit, pd: CircuitDecomposition, **kwargs) -> Obdd:
    """Same compiler, restricted to path-shaped circuit decompositions.

    Caterpillar decompositions (paths with side leaves, the shape produced by
    encoding-driven construction on path-decomposed instances) are first
    flattened to genuine paths.
    """
    from .circuit import to_path_decomposition

    if not pd.is_path():
        pd = to_path_decomposition(pd)
    return compile_to_obdd(c, pd, **kwargs)


# --- JSON and DOT ------------------------------------------------------------


def obdd_to_json(o: Obdd) -> dict:
    nodes = []
    for nid in range(o.size):
        if o.value[nid] is None:
            nodes.append({"id": nid, "level": o.level_of[nid], "lo": o.lo[nid], "hi": o.hi[nid]})
        else:
            nodes.append({"id": nid, "level": o.level_of[nid], "value": o.value[nid]})
    return {
        "order": list(o.order),
        "root": o.root,
        "nodes": nodes,
        "width": o.width,
        "size": o.size,
    }


def obdd_from_json(doc: dict) -> Obdd:
    o = Obdd(tuple(doc["order"]))
    for nd in sorted(doc["nodes"], key=lambda n: n["id"]):
        o.new_node(nd["level"], nd.get("lo"), nd.get("hi"), nd.get("value"))
    o.root = doc["root"]
    return o


def obdd_to_dot(o: Obdd) -> str:
    lines = ["digraph obdd {"]
    for nid in range(o.size):
        if o.value[nid] is None:
            lines.append(f'  n{nid} [label="x{o.order[o.level_of[nid]]}", shape=circle];')
            lines.append(f"  n{nid} -> n{o.lo[nid]} [style=dashed];")
            lines.append(f"  n{nid} -> n{o.hi[nid]};")
        else:
            lines.append(f'  n{nid} [label="{o.value[nid]}", shape=box];')
    lines.append("}")
    return "\n".join(lines)
