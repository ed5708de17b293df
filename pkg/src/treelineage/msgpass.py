"""Sparse junction-tree message passing over circuit decompositions.

Bags are sets of gate ids; each gate contributes one consistency factor
(placed at a bag containing the gate and its inputs, which the factor-3
input patch guarantees exists).  Messages are sparse tables mapping
assignment tuples to semiring values; absent rows are zero.  Collect-to-root
yields the marginal of the output gate.

Used in two modes: exact Fraction sum-product for probability evaluation,
and a Boolean semiring for satisfiability of difference circuits during OBDD
equivalence testing.
"""

from __future__ import annotations

from fractions import Fraction

from .circuit import AND, CONST, INPUT, NOT, OR, Circuit, patch_with_inputs, rewrite_fanin2
from .errors import MissingProbability, WidthTooLarge

SUM_PRODUCT = (lambda a, b: a + b, lambda a, b: a * b, Fraction(1))
BOOLEAN = (lambda a, b: a or b, lambda a, b: a and b, True)

DEFAULT_ENTRY_CAP = 5 * 10**6


class _Table:
    __slots__ = ("scope", "rows")

    def __init__(self, scope, rows):
        self.scope = tuple(scope)
        self.rows = rows  # dict assignment tuple -> value


def _join(a: _Table, b: _Table, semiring, cap) -> _Table:
    add, mul, _one = semiring
    common = [v for v in a.scope if v in set(b.scope)]
    a_pos = {v: i for i, v in enumerate(a.scope)}
    b_pos = {v: i for i, v in enumerate(b.scope)}
    b_extra = [v for v in b.scope if v not in a_pos]
    b_extra_pos = [b_pos[v] for v in b_extra]
    key_a = [a_pos[v] for v in common]
    key_b = [b_pos[v] for v in common]
    index = {}
    for assignment, val in b.rows.items():
        k = tuple(assignment[i] for i in key_b)
        index.setdefault(k, []).append((assignment, val))
    scope = a.scope + tuple(b_extra)
    rows = {}
    for assignment, val in a.rows.items():
        k = tuple(assignment[i] for i in key_a)
        for b_assignment, b_val in index.get(k, ()):
            merged = assignment + tuple(b_assignment[i] for i in b_extra_pos)
            v = mul(val, b_val)
            if merged in rows:
                rows[merged] = add(rows[merged], v)
            else:
                rows[merged] = v
        if len(rows) > cap:
            raise WidthTooLarge(f"message-passing table exceeded {cap} entries")
    return _Table(scope, rows)


def _project(t: _Table, keep, semiring) -> _Table:
    """Marginalize onto ``keep`` (restricted to t's scope: a variable with no
    factor below contributes no constraint and needs no alignment)."""
    add, _mul, _one = semiring
    keep = tuple(v for v in keep if v in set(t.scope))
    pos = [t.scope.index(v) for v in keep]
    rows = {}
    for assignment, val in t.rows.items():
        k = tuple(assignment[i] for i in pos)
        if k in rows:
            rows[k] = add(rows[k], val)
        else:
            rows[k] = val
    return _Table(keep, rows)


def gate_factor(c: Circuit, g: int, input_weights, one):
    kind = c.kinds[g]
    if kind == INPUT:
        w0, w1 = input_weights(c.payload[g])
        rows = {}
        if w0 is not None:
            rows[(0,)] = w0
        if w1 is not None:
            rows[(1,)] = w1
        return _Table((g,), rows)
    if kind == CONST:
        return _Table((g,), {(1 if c.payload[g] else 0,): one})
    if kind == NOT:
        (i,) = c.inputs_of[g]
        return _Table((g, i), {(0, 1): one, (1, 0): one})
    ins = c.inputs_of[g]
    if len(ins) == 1:
        return _Table((g, ins[0]), {(0, 0): one, (1, 1): one})
    a, b = ins
    if kind == AND:
        rows = {(0, 0, 0): one, (0, 0, 1): one, (0, 1, 0): one, (1, 1, 1): one}
    else:
        rows = {(0, 0, 0): one, (1, 0, 1): one, (1, 1, 0): one, (1, 1, 1): one}
    return _Table((g, a, b), rows)


def _reroot(children, old_root, new_root):
    n = len(children)
    adj = [set(cs) for cs in children]
    for i, cs in enumerate(children):
        for c in cs:
            adj[c].add(i)
    out = [[] for _ in range(n)]
    seen = {new_root}
    stack = [new_root]
    order = []
    while stack:
        u = stack.pop()
        order.append(u)
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                out[u].append(v)
                stack.append(v)
    return out


def output_marginal(
    c: Circuit,
    cd,
    input_weights,
    semiring=SUM_PRODUCT,
    cap_entries: int = DEFAULT_ENTRY_CAP,
):
    """Marginal table {(0,): w0, (1,): w1} of the output gate (absent = zero).

    ``cd`` must already co-locate every gate with its inputs (patched);
    ``input_weights(fact)`` returns the (weight of 0, weight of 1) pair.
    """
    add, mul, one = semiring
    target = c.output
    # keep the original orientation when possible: gates are created bottom-up
    # along the tree, so collecting toward the original root meets each
    # factor's inputs before the factor itself
    if target in cd.bags[cd.root]:
        root = cd.root
    else:
        root = min(i for i, b in enumerate(cd.bags) if target in b)
    children = _reroot(cd.children, cd.root, root)

    # iterative post-order collect schedule
    parent = {root: None}
    order = []
    stack = [root]
    while stack:
        u = stack.pop()
        order.append(u)
        for v in children[u]:
            parent[v] = u
            stack.append(v)

    # place each gate's factor at the deepest bag (first in collect order)
    # containing the gate and its inputs, so everything a message mentions
    # is already constrained from below
    collect = list(reversed(order))
    factors_at = [[] for _ in cd.bags]
    gate_bags = {}
    for pos, u in enumerate(collect):
        for g in cd.bags[u]:
            gate_bags.setdefault(g, []).append(u)
    collect_pos = {u: i for i, u in enumerate(collect)}
    for g in range(len(c)):
        scope = {g, *c.inputs_of[g]}
        home = None
        for u in sorted(gate_bags.get(g, ()), key=collect_pos.__getitem__):
            if scope <= cd.bags[u]:
                home = u
                break
        if home is None:
            raise WidthTooLarge(f"gate {g} and its inputs share no bag; patch the decomposition")
        factors_at[home].append(gate_factor(c, g, input_weights, one))

    messages = {}
    for u in collect:
        # child messages first, then factors in topological gate order: each
        # factor then joins on already-constrained inputs, keeping tables sparse
        table = _Table((), {(): one})
        for v in children[u]:
            table = _join(table, messages[v], semiring, cap_entries)
        for f in sorted(factors_at[u], key=lambda f: f.scope[0]):
            table = _join(table, f, semiring, cap_entries)
        if u == root:
            result = _project(table, (target,), semiring)
            if result.scope != (target,):
                raise AssertionError("output gate escaped the collect pass")
            return result.rows
        separator = sorted(cd.bags[u] & cd.bags[parent[u]])
        messages[u] = _project(table, separator, semiring)
    raise AssertionError("unreachable")


def circuit_output_probability(c: Circuit, cd, pi, cap_entries: int = DEFAULT_ENTRY_CAP) -> Fraction:
    """Pr[output = 1] under independent fact probabilities, exactly.

    Rewrites to fan-in <= 2 and applies the input patch internally.
    """
    c2, cd2 = rewrite_fanin2(c, cd)
    pd = patch_with_inputs(c2, cd2)

    def weights(fact):
        try:
            p = pi[fact]
        except KeyError:
            raise MissingProbability(f"no probability for fact #{fact}") from None
        return (1 - p, p)

    rows = output_marginal(c2, pd, weights, SUM_PRODUCT, cap_entries)
    return rows.get((1,), Fraction(0))


def circuit_satisfiable(c: Circuit, cd, cap_entries: int = DEFAULT_ENTRY_CAP) -> bool:
    """Does any valuation of the inputs make the output true?  (Boolean semiring.)"""
    c2, cd2 = rewrite_fanin2(c, cd)
    pd = patch_with_inputs(c2, cd2)
    rows = output_marginal(c2, pd, lambda f: (True, True), BOOLEAN, cap_entries)
    return bool(rows.get((1,), False))
