"""Boolean lineage circuits and their tree decompositions.

``build_lineage_circuit`` runs a deterministic tree automaton symbolically
over a tree encoding, producing one gate family per encoding node:

  g_i / g_ni     -- the annotation input of a fact node and its negation,
  g[qL,qR]       -- AND of child state gates,
  g[qL,qR,i/ni]  -- the same conjoined with the annotation branch,
  g[q]           -- OR over all branches reaching state q,
  g0             -- OR over accepting root states.

Because the automaton is deterministic, exactly one state gate per node is
true under any valuation, which makes the circuit a d-DNNF; a tree
decomposition of the circuit is built alongside by following the encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .decomposition import TreeDecomposition, TreeEncoding
from .errors import (
    AlphabetMismatch,
    InvalidDecomposition,
    MissingInput,
    TooManyInputsForDeterminismCheck,
)

INPUT, CONST, NOT, AND, OR = "input", "const", "not", "and", "or"


class Circuit:
    """DAG of gates in topological creation order."""

    def __init__(self):
        self.kinds: list[str] = []
        self.inputs_of: list[tuple] = []
        self.payload: list = []  # fact index for inputs, bool for constants
        self.output: int | None = None
        self.input_gates: dict = {}  # fact index -> gate id
        self.names: dict = {}
        self.ddnnf_certified = False

    def __len__(self):
        return len(self.kinds)

    def add(self, kind, inputs=(), payload=None, name=None) -> int:
        gid = len(self.kinds)
        self.kinds.append(kind)
        self.inputs_of.append(tuple(inputs))
        self.payload.append(payload)
        if kind == INPUT:
            self.input_gates[payload] = gid
        if name:
            self.names[gid] = name
        return gid

    # folding constructors: constants disappear eagerly, nothing else is merged

    def const(self, value, name=None) -> int:
        return self.add(CONST, (), bool(value), name)

    def negation(self, g, name=None) -> int:
        if self.kinds[g] == CONST:
            return self.const(not self.payload[g], name)
        return self.add(NOT, (g,), None, name)

    def conj(self, gates, name=None) -> int:
        kept = []
        for g in dict.fromkeys(gates):
            if self.kinds[g] == CONST:
                if not self.payload[g]:
                    return self.const(False, name)
            else:
                kept.append(g)
        if not kept:
            return self.const(True, name)
        if len(kept) == 1:
            return kept[0]
        return self.add(AND, kept, None, name)

    def disj(self, gates, name=None) -> int:
        kept = []
        for g in dict.fromkeys(gates):
            if self.kinds[g] == CONST:
                if self.payload[g]:
                    return self.const(True, name)
            else:
                kept.append(g)
        if not kept:
            return self.const(False, name)
        if len(kept) == 1:
            return kept[0]
        return self.add(OR, kept, None, name)

    def facts(self):
        return sorted(self.input_gates)

    def max_fanin(self):
        return max((len(ins) for ins in self.inputs_of), default=0)


class CircuitDecomposition(TreeDecomposition):
    """A tree decomposition of the circuit DAG viewed as an undirected graph."""


def validate_circuit_decomposition(c: Circuit, cd: CircuitDecomposition) -> None:
    n_bags = len(cd.bags)
    parent = cd.parent_map()
    for g in range(len(c)):
        holders = [i for i in range(n_bags) if g in cd.bags[i]]
        if not holders:
            raise InvalidDecomposition(f"gate {g} occurs in no bag")
        holder_set = set(holders)
        tops = [h for h in holders if parent[h] is None or parent[h] not in holder_set]
        if len(tops) != 1:
            raise InvalidDecomposition(f"occurrences of gate {g} are disconnected")
        for i in c.inputs_of[g]:
            if not any(g in b and i in b for b in cd.bags):
                raise InvalidDecomposition(f"edge {i}->{g} not covered by any bag")
    actual = cd.max_bag() - 1
    if actual != cd.width:
        raise InvalidDecomposition(f"declared width {cd.width}, actual {actual}")


def build_lineage_circuit(a, enc: TreeEncoding):
    """(Circuit, CircuitDecomposition) computing run(a, enc + annotation).

    For every valuation of the fact inputs the circuit output equals the
    automaton's acceptance of the correspondingly annotated encoding.  The
    decomposition follows the encoding tree; its width depends only on the
    automaton and the encoding width, never on the instance size.
    """
    if getattr(a, "k", None) is not None and a.k != enc.k:
        raise AlphabetMismatch(f"automaton width {a.k} != encoding width {enc.k}")
    c = Circuit()
    ach: dict = {}  # encoding node -> {state: gate id}
    bags: dict = {}
    for n in enc.postorder():
        node = enc.nodes[n]
        first_new = len(c)
        bucket: dict = {}
        ann_gates = ()
        if node.fact is not None:
            g_i = c.add(INPUT, (), node.fact_index, name=f"g_i@{n}")
            g_ni = c.negation(g_i, name=f"g_ni@{n}")
            ann_gates = ((True, g_i), (False, g_ni))
        else:
            ann_gates = ((False, None),)
        if not node.children:
            for kept, branch_gate in ann_gates:
                q = a.leaf_state(enc.label(n, kept))
                gate = branch_gate if branch_gate is not None else c.const(True, name=f"g_leaf@{n}")
                bucket.setdefault(q, []).append(gate)
        else:
            left, right = node.children
            for ql, gl in ach[left].items():
                for qr, gr in ach[right].items():
                    g_pair = c.conj((gl, gr), name=f"g_pair@{n}")
                    for kept, branch_gate in ann_gates:
                        q = a.binary_state(enc.label(n, kept), ql, qr)
                        if branch_gate is None:
                            bucket.setdefault(q, []).append(g_pair)
                        else:
                            g_b = c.conj((g_pair, branch_gate), name=f"g_branch@{n}")
                            bucket.setdefault(q, []).append(g_b)
        ach[n] = {
            q: c.disj(gates, name=f"g[q{si}]@{n}")
            for si, (q, gates) in enumerate(bucket.items())
        }
        bag = set(range(first_new, len(c))) | set(ach[n].values())
        for child in node.children:
            bag |= set(ach[child].values())
        bags[n] = bag

    root_states = ach[enc.root]
    out = c.disj(
        [g for q, g in root_states.items() if a.is_accepting(q)], name="g0"
    )
    c.output = out
    bags[enc.root].add(out)

    bag_list = [frozenset(bags[n]) for n in range(len(enc.nodes))]
    children = [list(enc.nodes[n].children) for n in range(len(enc.nodes))]
    width = max(len(b) for b in bag_list) - 1
    cd = CircuitDecomposition(bag_list, children, enc.root, width)
    c.ddnnf_certified = True
    return c, cd


# --- evaluation ---------------------------------------------------------------


def evaluate_circuit(c: Circuit, valuation) -> bool:
    """Standard gate semantics in one memoized pass; valuation maps fact -> bool."""
    vals = [False] * len(c)
    for g in range(len(c)):
        kind = c.kinds[g]
        if kind == INPUT:
            fact = c.payload[g]
            if fact not in valuation:
                raise MissingInput(f"no value for fact #{fact}")
            vals[g] = bool(valuation[fact])
        elif kind == CONST:
            vals[g] = c.payload[g]
        elif kind == NOT:
            vals[g] = not vals[c.inputs_of[g][0]]
        elif kind == AND:
            vals[g] = all(vals[i] for i in c.inputs_of[g])
        else:
            vals[g] = any(vals[i] for i in c.inputs_of[g])
    return vals[c.output]


def evaluate_circuit_masks(c: Circuit, fact_masks: dict, n_bits: int) -> int:
    """Bit-parallel evaluation over n_bits valuations at once.

    ``fact_masks[f]`` holds, for each of the n_bits valuations, the value bit
    of fact f.  Returns the output gate's bits.
    """
    full = (1 << n_bits) - 1
    vals = [0] * len(c)
    for g in range(len(c)):
        kind = c.kinds[g]
        if kind == INPUT:
            try:
                vals[g] = fact_masks[c.payload[g]] & full
            except KeyError:
                raise MissingInput(f"no mask for fact #{c.payload[g]}") from None
        elif kind == CONST:
            vals[g] = full if c.payload[g] else 0
        elif kind == NOT:
            vals[g] = full & ~vals[c.inputs_of[g][0]]
        elif kind == AND:
            v = full
            for i in c.inputs_of[g]:
                v &= vals[i]
            vals[g] = v
        else:
            v = 0
            for i in c.inputs_of[g]:
                v |= vals[i]
            vals[g] = v
    return vals[c.output]


def input_bit_masks(positions: int) -> list[int]:
    """masks[p] has bit v set iff bit p of v is set, for v in 0..2^positions-1."""
    total = 1 << positions
    masks = []
    for p in range(positions):
        unit = ((1 << (1 << p)) - 1) << (1 << p)
        period = 1 << (p + 1)
        m = unit
        while period < total:
            m |= m << period
            period <<= 1
        masks.append(m & ((1 << total) - 1))
    return masks


def truth_mask(c: Circuit) -> int:
    """Output bits over all 2^n valuations, bit v = value on fact set v."""
    facts = c.facts()
    n = len(facts)
    bits = input_bit_masks(n)
    masks = {f: bits[pos] for pos, f in enumerate(facts)}
    return evaluate_circuit_masks(c, masks, 1 << n)


# --- d-DNNF -------------------------------------------------------------------


@dataclass
class DdnnfReport:
    negation_on_inputs: bool
    decomposable: bool
    deterministic: bool | None  # None when not checked
    violations: list = field(default_factory=list)

    @property
    def is_ddnnf(self):
        return self.negation_on_inputs and self.decomposable and self.deterministic is True


def check_ddnnf(c: Circuit, determinism_cap: int = 20, check_determinism: bool = True) -> DdnnfReport:
    """Check the three d-DNNF conditions.

    Conditions 1 (negations on inputs only) and 2 (AND inputs depend on
    disjoint input gates) are structural; condition 3 (OR inputs mutually
    exclusive) is verified by an exhaustive valuation sweep and needs at most
    ``determinism_cap`` inputs.
    """
    report = DdnnfReport(True, True, None)
    for g in range(len(c)):
        if c.kinds[g] == NOT and c.kinds[c.inputs_of[g][0]] != INPUT:
            report.negation_on_inputs = False
            report.violations.append(("not-above-internal", g))

    deps = [0] * len(c)
    fact_bit = {f: i for i, f in enumerate(c.facts())}
    for g in range(len(c)):
        if c.kinds[g] == INPUT:
            deps[g] = 1 << fact_bit[c.payload[g]]
        else:
            for i in c.inputs_of[g]:
                deps[g] |= deps[i]
    for g in range(len(c)):
        if c.kinds[g] == AND:
            ins = c.inputs_of[g]
            for x in range(len(ins)):
                for y in range(x + 1, len(ins)):
                    if deps[ins[x]] & deps[ins[y]]:
                        report.decomposable = False
                        report.violations.append(("and-shared-inputs", g, ins[x], ins[y]))

    if not check_determinism:
        return report
    n = len(c.facts())
    if n > determinism_cap:
        raise TooManyInputsForDeterminismCheck(
            f"{n} inputs exceed the exhaustive determinism cap {determinism_cap}"
        )
    report.deterministic = True
    chunk_bits = min(n, 16)
    chunk = 1 << chunk_bits
    total = 1 << n
    low_masks = input_bit_masks(chunk_bits)
    or_gates = [g for g in range(len(c)) if c.kinds[g] == OR and len(c.inputs_of[g]) > 1]
    for base in range(0, total, chunk):
        vals = [0] * len(c)
        for g in range(len(c)):
            kind = c.kinds[g]
            if kind == INPUT:
                pos = fact_bit[c.payload[g]]
                if pos < chunk_bits:
                    m = low_masks[pos]
                else:
                    m = (1 << chunk) - 1 if (base >> pos) & 1 else 0
                vals[g] = m
            elif kind == CONST:
                vals[g] = (1 << chunk) - 1 if c.payload[g] else 0
            elif kind == NOT:
                vals[g] = ((1 << chunk) - 1) & ~vals[c.inputs_of[g][0]]
            elif kind == AND:
                v = (1 << chunk) - 1
                for i in c.inputs_of[g]:
                    v &= vals[i]
                vals[g] = v
            else:
                v = 0
                for i in c.inputs_of[g]:
                    v |= vals[i]
                vals[g] = v
        for g in or_gates:
            ins = c.inputs_of[g]
            for x in range(len(ins)):
                for y in range(x + 1, len(ins)):
                    if vals[ins[x]] & vals[ins[y]]:
                        report.deterministic = False
                        report.violations.append(("or-not-exclusive", g, ins[x], ins[y]))
        if report.deterministic is False:
            break
    return report


# --- fan-in-2 rewriting and decomposition patching -----------------------------


def rewrite_fanin2(c: Circuit, cd: CircuitDecomposition | None = None):
    """Split wide AND/OR gates into left-deep chains (topological order kept);
    chain gates join every bag where the original gate occurs."""
    out = Circuit()
    out.ddnnf_certified = c.ddnnf_certified
    mapping = {}
    extra = {}
    for g in range(len(c)):
        kind = c.kinds[g]
        name = c.names.get(g)
        ins = tuple(mapping[i] for i in c.inputs_of[g])
        if kind in (AND, OR) and len(ins) > 2:
            chain = []
            acc = ins[0]
            for i in ins[1:-1]:
                acc = out.add(kind, (acc, i), None, name=f"{name or g}~chain")
                chain.append(acc)
            mapping[g] = out.add(kind, (acc, ins[-1]), None, name=name)
            extra[g] = chain
        else:
            mapping[g] = out.add(kind, ins, c.payload[g], name=name)
    out.output = mapping[c.output]
    if cd is None:
        return out, None
    bags = [
        frozenset({mapping[g] for g in bag} | {e for g in bag for e in extra.get(g, ())})
        for bag in cd.bags
    ]
    width = max(len(b) for b in bags) - 1
    return out, CircuitDecomposition(bags, [list(x) for x in cd.children], cd.root, width)


def to_path_decomposition(cd: CircuitDecomposition) -> CircuitDecomposition:
    """Absorb leaf bags into branching parents until the tree is a path.

    Circuit decompositions built along a path-decomposed instance are
    caterpillars (the encoding pads single-child nodes with empty leaves);
    merging each side leaf into its parent restores a genuine path.  Raises
    NotAPath when real branching remains.
    """
    from .errors import NotAPath

    n = len(cd.bags)
    bags = [set(b) for b in cd.bags]
    children = [list(c) for c in cd.children]
    parent = cd.parent_map()
    alive = [True] * n
    changed = True
    while changed:
        changed = False
        for i in range(n):
            p = parent[i]
            if alive[i] and not children[i] and p is not None and len(children[p]) >= 2:
                bags[p] |= bags[i]
                children[p].remove(i)
                alive[i] = False
                changed = True
    if any(alive[i] and len(children[i]) > 1 for i in range(n)):
        raise NotAPath("circuit decomposition has non-trivial branching")
    renum = {}
    for i in range(n):
        if alive[i]:
            renum[i] = len(renum)
    new_bags = [frozenset(bags[i]) for i in range(n) if alive[i]]
    new_children = [[renum[ch] for ch in children[i]] for i in range(n) if alive[i]]
    width = max(len(b) for b in new_bags) - 1
    out = CircuitDecomposition(new_bags, new_children, renum[cd.root], width)
    if not out.is_path():
        raise NotAPath("circuit decomposition did not reduce to a path")
    return out


def patch_with_inputs(c: Circuit, cd: CircuitDecomposition) -> CircuitDecomposition:
    """Add each gate's (<= 2) incoming gates to every bag containing it."""
    bags = []
    for bag in cd.bags:
        b = set(bag)
        for g in bag:
            b |= set(c.inputs_of[g])
        bags.append(frozenset(b))
    width = max(len(b) for b in bags) - 1
    return CircuitDecomposition(bags, [list(x) for x in cd.children], cd.root, width)


def build_difference_circuit(c: Circuit, cd: CircuitDecomposition, val_a: dict, val_b: dict):
    """Two constant-restricted copies of c joined by a 5-gate XOR.

    ``val_a`` and ``val_b`` are partial valuations over the same fact set;
    input gates outside that set are shared between the copies.  Returns
    (circuit, decomposition) whose output is true iff the restrictions of c
    under val_a and val_b differ on some completion.
    """
    out = Circuit()
    shared = {}
    for f in c.facts():
        if f not in val_a:
            shared[f] = out.add(INPUT, (), f)

    def copy(valuation):
        mapping = {}
        for g in range(len(c)):
            kind = c.kinds[g]
            if kind == INPUT:
                f = c.payload[g]
                mapping[g] = shared[f] if f in shared else out.const(valuation[f])
            elif kind == CONST:
                mapping[g] = out.const(c.payload[g])
            elif kind == NOT:
                mapping[g] = out.add(NOT, (mapping[c.inputs_of[g][0]],))
            else:
                mapping[g] = out.add(kind, tuple(mapping[i] for i in c.inputs_of[g]))
        return mapping

    map_a = copy(val_a)
    map_b = copy(val_b)
    o1, o2 = map_a[c.output], map_b[c.output]
    n2 = out.add(NOT, (o2,))
    x1 = out.add(AND, (o1, n2))
    n1 = out.add(NOT, (o1,))
    x2 = out.add(AND, (n1, o2))
    xor = out.add(OR, (x1, x2))
    out.output = xor
    five = {n2, x1, n1, x2, xor}
    bags = [
        frozenset({map_a[g] for g in bag} | {map_b[g] for g in bag} | five)
        for bag in cd.bags
    ]
    width = max(len(b) for b in bags) - 1
    dd = CircuitDecomposition(bags, [list(x) for x in cd.children], cd.root, width)
    return out, dd


def propagate_constants(c: Circuit, cd: CircuitDecomposition | None):
    """Fold constant-determined gates; returns (circuit, cd, known_output).

    ``known_output`` is the output value when it is determined, else None.
    Bags keep only surviving gates; consumers of eliminated gates are rewired.
    """
    value = {}  # gate -> bool for determined gates
    mapping = {}
    out = Circuit()
    out.ddnnf_certified = False
    for g in range(len(c)):
        kind = c.kinds[g]
        if kind == INPUT:
            mapping[g] = out.add(INPUT, (), c.payload[g])
        elif kind == CONST:
            value[g] = c.payload[g]
        elif kind == NOT:
            (i,) = c.inputs_of[g]
            if i in value:
                value[g] = not value[i]
            else:
                mapping[g] = out.add(NOT, (mapping[i],))
        else:
            neutral = kind == AND
            ins = []
            determined = None
            for i in c.inputs_of[g]:
                if i in value:
                    if value[i] != neutral:
                        determined = value[i]
                        break
                else:
                    ins.append(mapping[i])
            if determined is not None:
                value[g] = determined
            elif not ins:
                value[g] = neutral
            elif len(ins) == 1:
                mapping[g] = ins[0]
            else:
                mapping[g] = out.add(kind, tuple(dict.fromkeys(ins)))
    if c.output in value:
        return out, None, value[c.output]
    out.output = mapping[c.output]
    if cd is None:
        return out, None, None
    bags = [frozenset(mapping[g] for g in bag if g in mapping) for bag in cd.bags]
    width = max((len(b) for b in bags), default=0) - 1
    dd = CircuitDecomposition(bags, [list(x) for x in cd.children], cd.root, width)
    return out, dd, None


# --- JSON and DOT ---------------------------------------------------------------


def circuit_to_json(c: Circuit, cd: CircuitDecomposition | None = None) -> dict:
    gates = []
    for g in range(len(c)):
        entry = {"id": g, "kind": c.kinds[g]}
        if c.kinds[g] == INPUT:
            entry["fact"] = c.payload[g]
        elif c.kinds[g] == CONST:
            entry["value"] = 1 if c.payload[g] else 0
        else:
            entry["inputs"] = list(c.inputs_of[g])
        gates.append(entry)
    doc = {"gates": gates, "output": c.output, "ddnnf_certified": c.ddnnf_certified}
    if cd is not None:
        doc["decomposition"] = {
            "nodes": [
                {"id": i, "bag": sorted(cd.bags[i]), "children": list(cd.children[i])}
                for i in range(len(cd.bags))
            ],
            "width": cd.width,
        }
    return doc


def circuit_from_json(doc: dict):
    c = Circuit()
    for entry in sorted(doc["gates"], key=lambda e: e["id"]):
        kind = entry["kind"]
        if kind == INPUT:
            c.add(INPUT, (), entry["fact"])
        elif kind == CONST:
            c.add(CONST, (), bool(entry["value"]))
        else:
            c.add(kind, tuple(entry["inputs"]))
    c.output = doc["output"]
    c.ddnnf_certified = bool(doc.get("ddnnf_certified"))
    cd = None
    if "decomposition" in doc:
        nodes = sorted(doc["decomposition"]["nodes"], key=lambda n: n["id"])
        bags = [frozenset(n["bag"]) for n in nodes]
        children = [list(n["children"]) for n in nodes]
        non_roots = {x for cs in children for x in cs}
        roots = [i for i in range(len(bags)) if i not in non_roots]
        cd = CircuitDecomposition(bags, children, roots[0], doc["decomposition"]["width"])
    return c, cd


def circuit_to_dot(c: Circuit) -> str:
    lines = ["digraph circuit {"]
    for g in range(len(c)):
        kind = c.kinds[g]
        if kind == INPUT:
            label = f"x{c.payload[g]}"
            shape = "box"
        elif kind == CONST:
            label = "1" if c.payload[g] else "0"
            shape = "box"
        else:
            label = {NOT: "NOT", AND: "AND", OR: "OR"}[kind]
            shape = "ellipse"
        if g in c.names:
            label += f"\\n{c.names[g]}"
        peri = ", peripheries=2" if g == c.output else ""
        lines.append(f'  n{g} [label="{label}", shape={shape}{peri}];')
        for i in c.inputs_of[g]:
            lines.append(f"  n{i} -> n{g};")
    lines.append("}")
    return "\n".join(lines)
