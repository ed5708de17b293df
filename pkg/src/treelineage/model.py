"""Relational signatures, instances, probability valuations and Gaifman graphs.

All values are immutable after construction and safe to share across threads.
The canonical fact index is the insertion order of facts in an instance; it is
used everywhere a variable order over facts is needed (lineage inputs, OBDD
orders, probability valuations).
"""

from __future__ import annotations

import json
import random
import sys
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    ArityMismatch,
    DuplicateFact,
    GraphAxiomViolation,
    InvalidParams,
    InvalidSignature,
    MissingProbability,
    UnknownRelation,
)


@dataclass(frozen=True)
class Signature:
    """A set of relation names with arities, in a fixed declaration order."""

    relations: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.relations]
        if len(set(names)) != len(names):
            raise InvalidSignature(f"duplicate relation names in {names}")
        for name, arity in self.relations:
            if arity < 1:
                raise InvalidSignature(f"relation {name!r} has arity {arity} < 1")

    @staticmethod
    def of(*relations):
        return Signature(tuple((str(n), int(a)) for n, a in relations))

    def arity(self, name: str) -> int:
        for rel, arity in self.relations:
            if rel == name:
                return arity
        raise UnknownRelation(f"relation {name!r} not in signature")

    def has(self, name: str) -> bool:
        return any(rel == name for rel, _ in self.relations)

    @property
    def max_arity(self) -> int:
        return max((a for _, a in self.relations), default=0)

    def binary_relations(self) -> list[str]:
        return [n for n, a in self.relations if a == 2]


@dataclass(frozen=True)
class Fact:
    relation: str
    args: tuple[str, ...]

    def __str__(self):
        return f"{self.relation}({','.join(self.args)})"


class Instance:
    """A finite ordered set of ground facts; the domain is the active domain.

    ``facts[i]`` has canonical index ``i``.  ``domain`` lists elements in
    first-occurrence order, which is the canonical element order used for
    deterministic tie-breaking throughout the package.
    """

    __slots__ = ("signature", "facts", "domain", "_domain_index", "_fact_index")

    def __init__(self, signature: Signature, facts):
        self.signature = signature
        self.facts = tuple(
            f if isinstance(f, Fact) else Fact(f[0], tuple(sys.intern(str(a)) for a in f[1:]))
            for f in facts
        )
        domain = []
        seen = set()
        for f in self.facts:
            for a in f.args:
                if a not in seen:
                    seen.add(a)
                    domain.append(a)
        self.domain = tuple(domain)
        self._domain_index = {a: i for i, a in enumerate(domain)}
        self._fact_index = {}
        for i, f in enumerate(self.facts):
            self._fact_index.setdefault(f, i)

    def __len__(self):
        return len(self.facts)

    def __eq__(self, other):
        return (
            isinstance(other, Instance)
            and self.signature == other.signature
            and self.facts == other.facts
        )

    def __hash__(self):
        return hash((self.signature, self.facts))

    def __repr__(self):
        return f"Instance({', '.join(map(str, self.facts))})"

    def domain_index(self, element: str) -> int:
        return self._domain_index[element]

    def index_of(self, fact: Fact) -> int:
        return self._fact_index[fact]

    def subinstance(self, kept) -> "Instance":
        """Restriction to the facts whose index is in ``kept`` (active domain shrinks)."""
        kept = set(kept)
        return Instance(self.signature, [f for i, f in enumerate(self.facts) if i in kept])

    def facts_of(self, relation: str):
        return [f for f in self.facts if f.relation == relation]


def validate_instance(inst: Instance, as_graph: bool = False) -> None:
    """Check instance invariants; raise the first violation found.

    With ``as_graph`` the two graph axioms are checked as well: no self-loop
    facts, and every binary fact has its reversed companion.
    """
    seen = set()
    for f in inst.facts:
        if not inst.signature.has(f.relation):
            raise UnknownRelation(f"fact {f} uses unknown relation {f.relation!r}")
        arity = inst.signature.arity(f.relation)
        if len(f.args) != arity:
            raise ArityMismatch(f"fact {f} has {len(f.args)} args, relation arity is {arity}")
        if f in seen:
            raise DuplicateFact(f"duplicate fact {f}")
        seen.add(f)
    if as_graph:
        fact_set = set(inst.facts)
        for f in inst.facts:
            if len(f.args) == 2:
                if f.args[0] == f.args[1]:
                    raise GraphAxiomViolation(f"self-loop {f}")
                if Fact(f.relation, (f.args[1], f.args[0])) not in fact_set:
                    raise GraphAxiomViolation(f"missing symmetric companion of {f}")


@dataclass(frozen=True)
class GaifmanGraph:
    """Undirected co-occurrence graph over the active domain."""

    vertices: tuple[str, ...]
    edges: frozenset  # frozenset of 2-element frozensets

    def neighbors(self, v: str) -> set:
        return {next(iter(e - {v})) for e in self.edges if v in e}

    def adjacency(self) -> dict:
        adj = {v: set() for v in self.vertices}
        for e in self.edges:
            u, v = tuple(e)
            adj[u].add(v)
            adj[v].add(u)
        return adj


def gaifman_graph(inst: Instance) -> GaifmanGraph:
    """Graph connecting any two elements that co-occur in a fact."""
    edges = set()
    for f in inst.facts:
        args = f.args
        for i in range(len(args)):
            for j in range(i + 1, len(args)):
                if args[i] != args[j]:
                    edges.add(frozenset((args[i], args[j])))
    return GaifmanGraph(inst.domain, frozenset(edges))


class ProbabilityValuation:
    """Exact rational probability per fact index, all in [0, 1]."""

    __slots__ = ("probs",)

    def __init__(self, probs: dict):
        self.probs = {int(i): Fraction(p) for i, p in probs.items()}
        for i, p in self.probs.items():
            if not (0 <= p <= 1):
                raise InvalidParams(f"probability {p} of fact #{i} outside [0,1]")

    def __getitem__(self, fact_index: int) -> Fraction:
        try:
            return self.probs[fact_index]
        except KeyError:
            raise MissingProbability(f"no probability for fact #{fact_index}") from None

    def __contains__(self, fact_index):
        return fact_index in self.probs

    def check_covers(self, inst: Instance) -> None:
        for i in range(len(inst)):
            if i not in self.probs:
                raise MissingProbability(f"no probability for fact #{i}")

    @staticmethod
    def uniform(inst: Instance, p=Fraction(1, 2)) -> "ProbabilityValuation":
        return ProbabilityValuation({i: Fraction(p) for i in range(len(inst))})

    @staticmethod
    def certain(inst: Instance) -> "ProbabilityValuation":
        return ProbabilityValuation({i: Fraction(1) for i in range(len(inst))})

    @staticmethod
    def random_rationals(inst: Instance, seed: int, denominator: int = 16) -> "ProbabilityValuation":
        rng = random.Random(seed)
        return ProbabilityValuation(
            {i: Fraction(rng.randint(0, denominator), denominator) for i in range(len(inst))}
        )


# --- deterministic instance families ------------------------------------

DEFAULT_BINARY = Signature.of(("R", 2))


def generate_instance(family: str, **params) -> Instance:
    """Deterministic instance generators.

    Families:
      line(n, signature?, pattern?)       -- n elements a1..an, one binary fact
                                             per consecutive pair; pattern is a
                                             list of (relation, 'fwd'|'rev').
      grid(side, signature?)              -- directed side x side grid, 2*side*(side-1) facts.
      tree(n, signature?)                 -- complete binary tree on n elements.
      complete_bipartite(left, right, signature?) -- all left->right facts.
      random(n, facts, seed, width?, signature?)  -- seeded facts whose arguments
                                             fit in a sliding window of width+1
                                             consecutive elements, so treewidth <= width.
    """
    if family == "line":
        return _gen_line(**params)
    if family == "grid":
        return _gen_grid(**params)
    if family == "tree":
        return _gen_tree(**params)
    if family == "complete_bipartite":
        return _gen_complete_bipartite(**params)
    if family == "random":
        return _gen_random(**params)
    raise InvalidParams(f"unknown family {family!r}")


def _single_binary(signature):
    rels = signature.binary_relations()
    if not rels:
        raise InvalidParams("signature has no binary relation")
    return rels[0]


def _gen_line(n: int, signature: Signature = DEFAULT_BINARY, pattern=None) -> Instance:
    if n < 1:
        raise InvalidParams(f"line needs n >= 1, got {n}")
    if pattern is None:
        rel = _single_binary(signature)
        pattern = [(rel, "fwd")] * (n - 1)
    if len(pattern) != n - 1:
        raise InvalidParams(f"pattern length {len(pattern)} != n-1 = {n - 1}")
    facts = []
    for i, (rel, direction) in enumerate(pattern, start=1):
        if signature.arity(rel) != 2:
            raise InvalidParams(f"line pattern relation {rel!r} is not binary")
        a, b = f"a{i}", f"a{i + 1}"
        if direction == "fwd":
            facts.append(Fact(rel, (a, b)))
        elif direction == "rev":
            facts.append(Fact(rel, (b, a)))
        else:
            raise InvalidParams(f"bad direction {direction!r}")
    return Instance(signature, facts)


def _gen_grid(side: int, signature: Signature = DEFAULT_BINARY) -> Instance:
    if side < 1:
        raise InvalidParams(f"grid needs side >= 1, got {side}")
    rel = _single_binary(signature)
    facts = []
    for i in range(side):
        for j in range(side):
            if j + 1 < side:
                facts.append(Fact(rel, (f"g{i}_{j}", f"g{i}_{j + 1}")))
            if i + 1 < side:
                facts.append(Fact(rel, (f"g{i}_{j}", f"g{i + 1}_{j}")))
    return Instance(signature, facts)


def _gen_tree(n: int, signature: Signature = DEFAULT_BINARY) -> Instance:
    if n < 1:
        raise InvalidParams(f"tree needs n >= 1, got {n}")
    rel = _single_binary(signature)
    facts = [Fact(rel, (f"t{i // 2}", f"t{i}")) for i in range(2, n + 1)]
    return Instance(signature, facts)


def _gen_complete_bipartite(left: int, right: int, signature: Signature = DEFAULT_BINARY) -> Instance:
    if left < 1 or right < 1:
        raise InvalidParams("complete_bipartite needs left, right >= 1")
    rel = _single_binary(signature)
    facts = [Fact(rel, (f"l{i}", f"r{j}")) for i in range(1, left + 1) for j in range(1, right + 1)]
    return Instance(signature, facts)


def _gen_random(
    n: int,
    facts: int,
    seed: int,
    width: int = 3,
    signature: Signature = DEFAULT_BINARY,
) -> Instance:
    """Erdos-Renyi-style seeded facts restricted to element windows of size width+1.

    Every fact's arguments lie within {e_i, ..., e_{i+width}} for some i, so the
    Gaifman graph is a subgraph of a band graph and treewidth is <= width.
    Duplicate draws are skipped, so the result can have fewer than ``facts`` facts.
    """
    if n < 1 or facts < 0 or width < 0:
        raise InvalidParams("random family needs n >= 1, facts >= 0, width >= 0")
    rng = random.Random(seed)
    elements = [f"e{i}" for i in range(1, n + 1)]
    out, seen = [], set()
    for _ in range(facts):
        rel, arity = signature.relations[rng.randrange(len(signature.relations))]
        start = rng.randrange(n)
        window = elements[start : start + width + 1]
        args = tuple(window[rng.randrange(len(window))] for _ in range(arity))
        f = Fact(rel, args)
        if f not in seen:
            seen.add(f)
            out.append(f)
    return Instance(signature, out)


# --- JSON ----------------------------------------------------------------


def instance_to_json(inst: Instance, probabilities: ProbabilityValuation | None = None) -> dict:
    doc = {
        "signature": [[n, a] for n, a in inst.signature.relations],
        "facts": [[f.relation, *f.args] for f in inst.facts],
    }
    if probabilities is not None:
        doc["probabilities"] = {str(i): str(p) for i, p in sorted(probabilities.probs.items())}
    return doc


def instance_from_json(doc: dict) -> tuple[Instance, ProbabilityValuation | None]:
    sig = Signature.of(*[(n, a) for n, a in doc["signature"]])
    inst = Instance(sig, [tuple(f) for f in doc["facts"]])
    probs = None
    if "probabilities" in doc:
        probs = ProbabilityValuation({int(i): Fraction(p) for i, p in doc["probabilities"].items()})
    return inst, probs


def load_instance(path_or_file) -> tuple[Instance, ProbabilityValuation | None]:
    if hasattr(path_or_file, "read"):
        doc = json.load(path_or_file)
    else:
        with open(path_or_file) as fh:
            doc = json.load(fh)
    return instance_from_json(doc)
