"""Intricacy of connected queries, decided by exhaustive line-instance analysis.

A query is n-intricate when every line instance with 2n+2 facts has a minimal
match containing both facts incident to the middle element; it is intricate
when it is |q|-intricate.  Since n-intricacy implies m-intricacy for m > n,
verification may succeed at a small n, while refutation must exhibit a
counterexample line of the full 2|q|+2 length.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import NoBinaryRelation, NotConnected, QueryIsIntricate, QueryTooLarge
from .model import Fact, Instance, Signature
from .query import UcqNeq, connected, minimal_matches

DEFAULT_SIZE_GUARD = 4


@dataclass(frozen=True)
class LineInstance:
    """A path of single binary facts: slot i holds (relation, direction) between a_i, a_{i+1}."""

    signature: Signature
    slots: tuple  # of (relation, "fwd" | "rev")

    @property
    def fact_count(self):
        return len(self.slots)

    def instance(self) -> Instance:
        facts = []
        for i, (rel, direction) in enumerate(self.slots, start=1):
            a, b = f"a{i}", f"a{i + 1}"
            facts.append(Fact(rel, (a, b) if direction == "fwd" else (b, a)))
        return Instance(self.signature, facts)

    def to_json(self):
        return {
            "signature": [[n, a] for n, a in self.signature.relations],
            "slots": [[rel, d] for rel, d in self.slots],
        }


def enumerate_line_instances(sig: Signature, fact_count: int):
    """All (2 * #binary relations)^fact_count line instances, lexicographically."""
    binary = sig.binary_relations()
    if not binary:
        raise NoBinaryRelation("signature has no binary relation")
    choices = [(rel, d) for rel in binary for d in ("fwd", "rev")]
    if fact_count == 0:
        return
    for combo in itertools.product(choices, repeat=fact_count):
        yield LineInstance(sig, combo)


def _middle_fact_indices(fact_count):
    # 2n+2 facts, domain a_1..a_{2n+3}; the middle element a_{n+2} touches
    # the facts at slots n+1 and n+2, i.e. 0-based fact indices n and n+1
    n = (fact_count - 2) // 2
    return n, n + 1


def _n_intricate(q: UcqNeq, sig: Signature, n: int):
    """(verdict, counterexample): does every line of 2n+2 facts have a minimal
    match through both middle facts?"""
    fact_count = 2 * n + 2
    f1, f2 = _middle_fact_indices(fact_count)
    # disjuncts with unary atoms never match a line instance; drop them upfront
    eligible = UcqNeq(
        tuple(d for d in q.disjuncts if all(len(a.args) == 2 for a in d.atoms))
        or q.disjuncts
    )
    for line in enumerate_line_instances(sig, fact_count):
        inst = line.instance()
        found = False
        for m in minimal_matches(eligible, inst):
            if f1 in m.facts and f2 in m.facts:
                found = True
                break
        if not found:
            return False, line
    return True, None


def query_signature_for_lines(q: UcqNeq) -> Signature:
    rels = q.infer_signature().relations
    if not any(a == 2 for _, a in rels):
        raise NoBinaryRelation("query mentions no binary relation")
    return Signature.of(*rels)


def is_intricate(q: UcqNeq, size_guard: int = DEFAULT_SIZE_GUARD):
    """(True, None) or (False, first counterexample line in enumeration order).

    Verification climbs n = 0..|q| and stops at the first n-intricacy witness
    (n-intricate implies m-intricate for all m > n); refutation requires the
    full |q| check, which the guard limits to |q| <= size_guard by default.
    """
    if not connected(q):
        raise NotConnected("intricacy is defined for connected queries")
    sig = query_signature_for_lines(q)
    size = q.size
    if size < 2:
        # a single-atom-sized query has only single-fact minimal matches
        verdict, line = _n_intricate(q, sig, size)
        return False, line
    for n in range(0, size + 1):
        if n < size:
            ok, _ = _n_intricate(q, sig, n)
            if ok:
                return True, None
        else:
            if size > size_guard:
                raise QueryTooLarge(
                    f"|q| = {size} > guard {size_guard}: refutation needs "
                    f"{2 * size + 2}-fact line enumeration"
                )
            ok, line = _n_intricate(q, sig, n)
            if ok:
                return True, None
            return False, line
    raise AssertionError("unreachable")


def find_non_intricacy_witness(q: UcqNeq, size_guard: int = DEFAULT_SIZE_GUARD) -> LineInstance:
    """A counterexample line instance, the seed of the easy-family construction."""
    verdict, line = is_intricate(q, size_guard)
    if verdict:
        raise QueryIsIntricate("query is intricate; no counterexample exists")
    return line
