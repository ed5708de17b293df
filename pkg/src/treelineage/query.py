"""Unions of conjunctive queries with disequalities.

Holds the query AST, a small parser, the exhaustive homomorphism oracle that
every compiled representation is checked against, match enumeration,
connectedness, the arity-2 ranking rewrite, and validation of inversion-free
quantified expressions.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .errors import (
    ArityMismatch,
    ConstantNotAllowed,
    FreeDisequalityVariable,
    InstanceTooLarge,
    InvalidExpression,
    NotHierarchical,
    OrderInconsistency,
    QuerySyntaxError,
    UnrankableQuery,
    UnsupportedArity,
)
from .model import Fact, Instance, Signature


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple[str, ...]

    def __str__(self):
        return f"{self.relation}({','.join(self.args)})"


@dataclass(frozen=True)
class CqNeq:
    """One conjunctive disjunct: relational atoms plus disequality pairs."""

    atoms: tuple[Atom, ...]
    diseqs: tuple[tuple[str, str], ...]  # each pair sorted

    def variables(self):
        out = []
        for a in self.atoms:
            for v in a.args:
                if v not in out:
                    out.append(v)
        return out

    @property
    def size(self):
        return len(self.atoms) + len(self.diseqs)


@dataclass(frozen=True)
class UcqNeq:
    disjuncts: tuple[CqNeq, ...]

    @property
    def size(self):
        """Total atom count, disequality atoms included."""
        return sum(d.size for d in self.disjuncts)

    def relations(self):
        out = {}
        for d in self.disjuncts:
            for a in d.atoms:
                out.setdefault(a.relation, len(a.args))
        return out

    def infer_signature(self) -> Signature:
        return Signature.of(*sorted(self.relations().items()))


@dataclass(frozen=True)
class Match:
    facts: frozenset  # fact indices
    homomorphism: tuple  # ((var, element), ...)


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z_0-9]*|[(),|&]|!=|\S)")


def parse_query(text: str, signature: Signature | None = None) -> UcqNeq:
    """Parse ``R(x,y) & S(y) & x!=y | T(z)`` style query text.

    Grammar (EBNF):
        query    = disjunct { "|" disjunct } ;
        disjunct = term { "&" term } ;
        term     = atom | diseq ;
        atom     = NAME "(" NAME { "," NAME } ")" ;
        diseq    = NAME "!=" NAME ;
    All names are identifiers; constants are not allowed.  Every disequality
    variable must occur in a relational atom of the same disjunct.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            break
        tok = m.group(1)
        if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*|[(),|&]|!=", tok):
            if re.fullmatch(r"[0-9]+|'[^']*'|\"[^\"]*\"", tok) or tok[0].isdigit() or tok[0] in "'\"":
                raise ConstantNotAllowed(f"constant {tok!r} not allowed in queries")
            raise QuerySyntaxError(f"unexpected token {tok!r}")
        tokens.append(tok)
        pos = m.end()
    if text[pos:].strip():
        bad = text[pos:].strip()[0]
        if bad.isdigit() or bad in "'\"":
            raise ConstantNotAllowed(f"constant starting at {text[pos:].strip()!r}")
        raise QuerySyntaxError(f"cannot tokenize {text[pos:]!r}")

    disjuncts = []
    for chunk in _split(tokens, "|"):
        atoms, diseqs = [], []
        for term in _split(chunk, "&"):
            if not term:
                raise QuerySyntaxError("empty conjunct")
            if len(term) == 3 and term[1] == "!=":
                u, v = term[0], term[2]
                if u == v:
                    raise QuerySyntaxError(f"disequality {u} != {u} is unsatisfiable")
                diseqs.append(tuple(sorted((u, v))))
            elif len(term) >= 4 and term[1] == "(" and term[-1] == ")":
                rel = term[0]
                args = [t for t in term[2:-1] if t != ","]
                expected = (len(term) - 3 + 1) // 2
                if len(args) != expected or any(a in "(),|&" or a == "!=" for a in args):
                    raise QuerySyntaxError(f"malformed atom {' '.join(term)}")
                if signature is not None:
                    if signature.arity(rel) != len(args):
                        raise ArityMismatch(
                            f"atom {rel} has {len(args)} args, arity is {signature.arity(rel)}"
                        )
                atoms.append(Atom(rel, tuple(args)))
            else:
                raise QuerySyntaxError(f"cannot parse term {' '.join(term)!r}")
        if not atoms:
            raise FreeDisequalityVariable("disjunct has no relational atom")
        atom_vars = {v for a in atoms for v in a.args}
        for u, v in diseqs:
            if u not in atom_vars or v not in atom_vars:
                missing = u if u not in atom_vars else v
                raise FreeDisequalityVariable(
                    f"disequality variable {missing!r} occurs in no relational atom"
                )
        disjuncts.append(CqNeq(tuple(atoms), tuple(sorted(set(diseqs)))))
    if not disjuncts:
        raise QuerySyntaxError("empty query")
    # consistent arities across disjuncts when no signature was given
    arities = {}
    for d in disjuncts:
        for a in d.atoms:
            if arities.setdefault(a.relation, len(a.args)) != len(a.args):
                raise ArityMismatch(f"relation {a.relation!r} used with two arities")
    return UcqNeq(tuple(disjuncts))


def _split(tokens, sep):
    out, cur = [], []
    for t in tokens:
        if t == sep:
            out.append(cur)
            cur = []
        else:
            cur.append(t)
    out.append(cur)
    return out


def format_query(q: UcqNeq) -> str:
    parts = []
    for d in q.disjuncts:
        terms = [str(a) for a in d.atoms] + [f"{u}!={v}" for u, v in d.diseqs]
        parts.append(" & ".join(terms))
    return " | ".join(parts)


# --- homomorphism search ----------------------------------------------------


def _hom_search(disjunct: CqNeq, inst: Instance, collect=None):
    """Backtracking over variables ordered by descending atom degree.

    With ``collect`` given, every homomorphism is reported to it and the
    search is exhaustive; otherwise the search stops at the first hit.
    """
    variables = disjunct.variables()
    first = {v: i for i, v in enumerate(variables)}
    degree = {v: sum(1 for a in disjunct.atoms for w in a.args if w == v) for v in variables}
    variables.sort(key=lambda v: (-degree[v], first[v]))
    by_relation = {}
    for f in inst.facts:
        by_relation.setdefault(f.relation, []).append(f)
    atoms = disjunct.atoms
    if any(a.relation not in by_relation for a in atoms):
        return False
    diseqs = disjunct.diseqs
    assignment = {}

    def consistent(v):
        for a in atoms:
            if v in a.args and all(w in assignment for w in a.args):
                if Fact(a.relation, tuple(assignment[w] for w in a.args)) not in inst._fact_index:
                    return False
        for u, w in diseqs:
            if u in assignment and w in assignment and assignment[u] == assignment[w]:
                return False
        return True

    def feasible():
        # forward check: every atom still has a candidate fact
        for a in atoms:
            ok = False
            for f in by_relation[a.relation]:
                if len(f.args) != len(a.args):
                    continue
                if all(assignment.get(w, f.args[i]) == f.args[i] for i, w in enumerate(a.args)):
                    same = {}
                    good = True
                    for i, w in enumerate(a.args):
                        if same.setdefault(w, f.args[i]) != f.args[i]:
                            good = False
                            break
                    if good:
                        ok = True
                        break
            if not ok:
                return False
        return True

    found = [False]

    def rec(i):
        if i == len(variables):
            if collect is not None:
                collect(dict(assignment))
                return False
            found[0] = True
            return True
        v = variables[i]
        for el in inst.domain:
            assignment[v] = el
            if consistent(v) and feasible() and rec(i + 1):
                return True
            del assignment[v]
        return False

    rec(0)
    return found[0] if collect is None else None


def evaluate(q: UcqNeq, inst: Instance) -> bool:
    """Ground truth: does some disjunct map homomorphically into ``inst``?"""
    return any(_hom_search(d, inst) for d in q.disjuncts)


def minimal_matches(q: UcqNeq, inst: Instance, cap: int = 24) -> list[Match]:
    """All inclusion-minimal matches, deduplicated by fact set.

    Ordered by (size, sorted fact indices) for determinism.
    """
    if len(inst) > cap:
        raise InstanceTooLarge(f"{len(inst)} facts exceeds the enumeration cap {cap}")
    images = {}
    for d in q.disjuncts:
        def take(assignment, d=d):
            facts = frozenset(
                inst.index_of(Fact(a.relation, tuple(assignment[v] for v in a.args)))
                for a in d.atoms
            )
            images.setdefault(facts, tuple(sorted(assignment.items())))

        _hom_search(d, inst, collect=take)
    fact_sets = sorted(images, key=lambda s: (len(s), sorted(s)))
    minimal = []
    for s in fact_sets:
        if not any(m < s for m in minimal):
            minimal.append(s)
    return [Match(s, images[s]) for s in minimal]


def match_masks(q: UcqNeq, inst: Instance, cap: int = 24) -> list[int]:
    """Minimal matches as fact-index bitmasks (oracle helper for sweeps)."""
    masks = []
    for m in minimal_matches(q, inst, cap):
        bits = 0
        for i in m.facts:
            bits |= 1 << i
        masks.append(bits)
    return masks


def satisfaction_mask(q: UcqNeq, inst: Instance, cap: int = 24) -> int:
    """Bit v of the result is 1 iff the subinstance with fact set v satisfies q."""
    masks = match_masks(q, inst, cap)
    out = 0
    for v in range(1 << len(inst)):
        if any(v & m == m for m in masks):
            out |= 1 << v
    return out


def connected(q: UcqNeq) -> bool:
    """True iff every disjunct's atom graph (atoms sharing a variable) is connected."""
    for d in q.disjuncts:
        n = len(d.atoms)
        if n <= 1:
            continue
        adj = {i: set() for i in range(n)}
        for i in range(n):
            for j in range(i + 1, n):
                if set(d.atoms[i].args) & set(d.atoms[j].args):
                    adj[i].add(j)
                    adj[j].add(i)
        seen, stack = {0}, [0]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != n:
            return False
    return True


# --- ranking (arity <= 2) -----------------------------------------------


def is_ranked_query(q: UcqNeq) -> bool:
    for d in q.disjuncts:
        prec = set()
        for a in d.atoms:
            for i in range(len(a.args)):
                for j in range(i + 1, len(a.args)):
                    if a.args[i] == a.args[j]:
                        return False
                    prec.add((a.args[i], a.args[j]))
        if _has_cycle(prec):
            return False
    return True


def _has_cycle(prec):
    succ = {}
    for u, v in prec:
        succ.setdefault(u, set()).add(v)
    color = {}

    def dfs(u):
        color[u] = 1
        for w in succ.get(u, ()):
            if color.get(w) == 1:
                return True
            if color.get(w, 0) == 0 and dfs(w):
                return True
        color[u] = 2
        return False

    return any(color.get(u, 0) == 0 and dfs(u) for u in succ)


def is_ranked_instance(inst: Instance, order=None) -> bool:
    rank_of = {e: i for i, e in enumerate(order if order is not None else inst.domain)}
    for f in inst.facts:
        ranks = [rank_of[a] for a in f.args]
        if any(ranks[i] >= ranks[i + 1] for i in range(len(ranks) - 1)):
            return False
    return True


def rank(q: UcqNeq, inst: Instance, order=None):
    """Rewrite (q, inst) to a ranked pair with identical lineage.

    Binary relations are split by argument pattern: strictly increasing facts
    go to ``R_fwd``, strictly decreasing ones are stored reversed in
    ``R_rev``, and equal-argument facts become unary ``R_diag`` facts.  Atom
    occurrences are expanded over the same three patterns.  Returns
    ``(q', inst', back_map)`` where ``back_map[new index] = old index``.
    """
    if inst.signature.max_arity > 2:
        raise UnsupportedArity("ranking rewrite supports arity <= 2 only")
    if order is None:
        order = inst.domain
    if is_ranked_query(q) and is_ranked_instance(inst, order):
        return q, inst, {i: i for i in range(len(inst))}
    rank_of = {e: i for i, e in enumerate(order)}

    relations = []
    for name, arity in inst.signature.relations:
        if arity == 2:
            relations += [(f"{name}_fwd", 2), (f"{name}_rev", 2), (f"{name}_diag", 1)]
        else:
            relations.append((name, arity))
    new_sig = Signature.of(*relations)

    new_facts, back_map = [], {}
    for i, f in enumerate(inst.facts):
        if len(f.args) == 2:
            u, v = f.args
            if rank_of[u] < rank_of[v]:
                nf = Fact(f"{f.relation}_fwd", (u, v))
            elif rank_of[u] > rank_of[v]:
                nf = Fact(f"{f.relation}_rev", (v, u))
            else:
                nf = Fact(f"{f.relation}_diag", (u,))
        else:
            nf = f
        back_map[len(new_facts)] = i
        new_facts.append(nf)
    new_inst = Instance(new_sig, new_facts)

    new_disjuncts = []
    for d in q.disjuncts:
        binary = [i for i, a in enumerate(d.atoms) if len(a.args) == 2]
        for choice in itertools.product(("fwd", "rev", "diag"), repeat=len(binary)):
            # union-find over variables identified by diag choices
            rep = {}

            def find(v):
                while rep.get(v, v) != v:
                    v = rep[v]
                return v

            atoms = []
            for i, a in enumerate(d.atoms):
                if i in binary:
                    pat = choice[binary.index(i)]
                    x, y = a.args
                    if pat == "diag":
                        rx, ry = find(x), find(y)
                        if rx != ry:
                            rep[max(rx, ry)] = min(rx, ry)
                        atoms.append((f"{a.relation}_diag", (x,)))
                    elif pat == "fwd":
                        atoms.append((f"{a.relation}_fwd", (x, y)))
                    else:
                        atoms.append((f"{a.relation}_rev", (y, x)))
                else:
                    atoms.append((a.relation, a.args))
            final_atoms = tuple(
                Atom(rel, tuple(find(v) for v in args)) for rel, args in atoms
            )
            diseqs = set()
            ok = True
            for u, v in d.diseqs:
                ru, rv = find(u), find(v)
                if ru == rv:
                    ok = False
                    break
                diseqs.add(tuple(sorted((ru, rv))))
            if not ok:
                continue
            cand = CqNeq(final_atoms, tuple(sorted(diseqs)))
            if is_ranked_query(UcqNeq((cand,))):
                new_disjuncts.append(cand)
    if not new_disjuncts:
        raise UnrankableQuery("no disjunct survives the ranking rewrite")
    seen, uniq = set(), []
    for d in new_disjuncts:
        if d not in seen:
            seen.add(d)
            uniq.append(d)
    return UcqNeq(tuple(uniq)), new_inst, back_map


# --- inversion-free expressions ------------------------------------------


class Expr:
    """Expression tree node: kind in {atom, and, or, exists}."""

    __slots__ = ("kind", "relation", "args", "var", "children")

    def __init__(self, kind, relation=None, args=None, var=None, children=()):
        self.kind = kind
        self.relation = relation
        self.args = tuple(args) if args else ()
        self.var = var
        self.children = tuple(children)

    @staticmethod
    def atom(relation, *args):
        return Expr("atom", relation=relation, args=args)

    @staticmethod
    def conj(*children):
        return Expr("and", children=children)

    @staticmethod
    def disj(*children):
        return Expr("or", children=children)

    @staticmethod
    def exists(var, child):
        return Expr("exists", var=var, children=(child,))

    def atoms(self):
        if self.kind == "atom":
            return [self]
        return [a for c in self.children for a in c.atoms()]

    def to_json(self):
        if self.kind == "atom":
            return {"op": "atom", "relation": self.relation, "args": list(self.args)}
        if self.kind == "exists":
            return {"op": "exists", "var": self.var, "child": self.children[0].to_json()}
        return {"op": self.kind, "children": [c.to_json() for c in self.children]}

    @staticmethod
    def from_json(doc):
        op = doc["op"]
        if op == "atom":
            return Expr.atom(doc["relation"], *doc["args"])
        if op == "exists":
            return Expr.exists(doc["var"], Expr.from_json(doc["child"]))
        if op in ("and", "or"):
            return Expr(op, children=[Expr.from_json(c) for c in doc["children"]])
        raise InvalidExpression(f"unknown op {op!r}")


@dataclass(frozen=True)
class InversionFreeExpression:
    """A validated hierarchical expression with per-relation position orders."""

    root: Expr
    orders: dict  # relation -> tuple of positions, outermost first
    ofv: dict  # id(subexpr) -> tuple of ordered free variables


def validate_inversion_free(expr: Expr) -> InversionFreeExpression:
    """Check hierarchy and order consistency; compute ordered free variables.

    Raises NotHierarchical or OrderInconsistency; structural problems (free
    variables, shadowed quantifiers) raise InvalidExpression.
    """
    # collect quantifier scopes; depth of each quantified variable
    depth_of = {}

    def walk(e, scope):
        if e.kind == "exists":
            if e.var in scope:
                raise InvalidExpression(f"variable {e.var!r} quantified twice in scope")
            depth_of.setdefault(e.var, len(scope))
            walk(e.children[0], scope + (e.var,))
        elif e.kind == "atom":
            for v in e.args:
                if v not in scope:
                    raise InvalidExpression(f"free variable {v!r} in atom {e}")
        else:
            for c in e.children:
                walk(c, scope)

    walk(expr, ())

    # hierarchy: inside Exists x phi, x occurs in every atom of phi
    def check_hier(e):
        if e.kind == "exists":
            for a in e.children[0].atoms():
                if e.var not in a.args:
                    raise NotHierarchical(e.var, f"{a.relation}({','.join(a.args)})")
            check_hier(e.children[0])
        else:
            for c in e.children:
                check_hier(c)

    check_hier(expr)

    # precondition: the underlying query is ranked (atom-position variable
    # precedence is acyclic per disjunct); the atom closing a cycle is blamed
    for disjunct in expression_to_ucq(expr).disjuncts:
        prec = set()
        for a in disjunct.atoms:
            for i in range(len(a.args)):
                for j in range(i + 1, len(a.args)):
                    if a.args[i] == a.args[j]:
                        raise OrderInconsistency(a.relation, (i + 1, j + 1))
                    prec.add((a.args[i], a.args[j]))
            if _has_cycle(prec):
                raise OrderInconsistency(a.relation, tuple(range(1, len(a.args) + 1)))

    # each atom induces a total position order from quantifier nesting depth;
    # all atoms of a relation must agree
    def scope_depths(e, scope_depth):
        if e.kind == "exists":
            yield from scope_depths(e.children[0], {**scope_depth, e.var: len(scope_depth)})
        elif e.kind == "atom":
            yield e, scope_depth
        else:
            for c in e.children:
                yield from scope_depths(c, scope_depth)

    orders = {}
    for a, depths in scope_depths(expr, {}):
        pos = sorted(range(len(a.args)), key=lambda i: depths[a.args[i]])
        order = tuple(p + 1 for p in pos)  # positions are 1-based
        if orders.setdefault(a.relation, order) != order:
            raise OrderInconsistency(a.relation, order)

    # ordered free variables per subexpression
    ofv = {}

    def compute_ofv(e, scope_depth):
        if e.kind == "atom":
            pos = orders[e.relation]
            mine = tuple(e.args[p - 1] for p in pos)
        elif e.kind == "exists":
            inner = compute_ofv(e.children[0], {**scope_depth, e.var: len(scope_depth)})
            mine = tuple(v for v in inner if v != e.var)
        else:
            subs = [compute_ofv(c, scope_depth) for c in e.children]
            mine = ()
            for s in subs:
                if len(s) > len(mine):
                    mine = s
        ofv[id(e)] = mine
        return mine

    compute_ofv(expr, {})
    return InversionFreeExpression(expr, orders, ofv)


def expression_to_ucq(expr: Expr) -> UcqNeq:
    """Flatten an expression to a UCQ by distributing OR over AND."""

    def flat(e):
        if e.kind == "atom":
            return [[Atom(e.relation, e.args)]]
        if e.kind == "exists":
            return flat(e.children[0])
        if e.kind == "or":
            return [d for c in e.children for d in flat(c)]
        # and: cross product
        parts = [flat(c) for c in e.children]
        out = [[]]
        for p in parts:
            out = [a + b for a in out for b in p]
        return out

    return UcqNeq(tuple(CqNeq(tuple(d), ()) for d in flat(expr)))
