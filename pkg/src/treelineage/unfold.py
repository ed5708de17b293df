"""Lineage-preserving unfoldings of ranked instances.

For a ranked instance and a validated inversion-free expression, each fact's
argument tuple is rewritten position by position (following each relation's
position order) into the chain of its prefixes, so distinct join contexts are
pulled apart.  The last-component map is a homomorphism back to the original
instance, bijective on facts, and the prefix forest is an elimination forest
of height at most the maximum arity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .decomposition import EliminationForest
from .errors import (
    InstanceNotRanked,
    InstanceTooLarge,
    InvalidParams,
    LineageMismatch,
    MissingRelationOrder,
)
from .model import Fact, Instance
from .query import (
    InversionFreeExpression,
    UcqNeq,
    expression_to_ucq,
    is_ranked_instance,
    satisfaction_mask,
    validate_inversion_free,
)

SEPARATOR = "."


@dataclass(frozen=True)
class Unfolding:
    instance: Instance  # the unfolded instance I'
    homomorphism: dict  # element of I' -> element of I (last tuple component)
    fact_map: dict  # fact index of I' -> fact index of I (a bijection)
    forest: EliminationForest


def _tuple_element(elements) -> str:
    return SEPARATOR.join(elements)


def unfold(inst: Instance, expr, order=None) -> Unfolding:
    """Unfold a ranked instance along an inversion-free expression.

    ``expr`` is an Expr or an already-validated InversionFreeExpression; its
    per-relation position orders drive the rewriting.  ``order`` is the
    declared domain order (defaults to first-occurrence order).
    """
    if not isinstance(expr, InversionFreeExpression):
        expr = validate_inversion_free(expr)
    if order is None:
        order = inst.domain
    if not is_ranked_instance(inst, order):
        raise InstanceNotRanked("some fact's arguments are not strictly increasing")
    for e in inst.domain:
        if SEPARATOR in e:
            raise InvalidParams(f"element {e!r} contains the reserved separator {SEPARATOR!r}")

    new_facts = []
    fact_map = {}
    for idx, f in enumerate(inst.facts):
        if f.relation not in expr.orders:
            raise MissingRelationOrder(f"expression gives no position order for {f.relation!r}")
        positions = expr.orders[f.relation]  # 1-based, outermost first
        if len(positions) != len(f.args):
            raise MissingRelationOrder(
                f"order for {f.relation!r} has {len(positions)} positions, fact has {len(f.args)}"
            )
        prefix = []
        new_args = [None] * len(f.args)
        for p in positions:
            prefix.append(f.args[p - 1])
            new_args[p - 1] = _tuple_element(prefix)
        fact_map[len(new_facts)] = idx
        new_facts.append(Fact(f.relation, tuple(new_args)))
    unfolded = Instance(inst.signature, new_facts)

    homomorphism = {e: e.split(SEPARATOR)[-1] for e in unfolded.domain}
    parent = {}
    for e in unfolded.domain:
        parts = e.split(SEPARATOR)
        parent[e] = _tuple_element(parts[:-1]) if len(parts) > 1 else None
    roots = [e for e in unfolded.domain if parent[e] is None]
    height = max((len(e.split(SEPARATOR)) for e in unfolded.domain), default=0)
    forest = EliminationForest(parent, roots, height)
    return Unfolding(unfolded, homomorphism, fact_map, forest)


def verify_respects(
    inst: Instance, unf: Unfolding, q: UcqNeq | None = None, expr=None, cap: int = 14
) -> None:
    """Check exact lineage equality between I and its unfolding, all valuations.

    ``q`` defaults to the flattened expression.  Raises LineageMismatch with
    the first offending valuation.  The forward direction (matches of the
    unfolding push down to the original) can never fail and is asserted.
    """
    if q is None:
        if expr is None:
            raise InvalidParams("need a query or an expression")
        root = expr.root if isinstance(expr, InversionFreeExpression) else expr
        q = expression_to_ucq(root)
    n = len(inst)
    if n > cap:
        raise InstanceTooLarge(f"{n} facts exceeds the exhaustive cap {cap}")
    mask_orig = satisfaction_mask(q, inst)
    mask_unfolded_raw = satisfaction_mask(q, unf.instance)
    # transport the unfolded lineage through the fact bijection
    mask_unfolded = 0
    for v in range(1 << n):
        w = 0
        for new_idx, old_idx in unf.fact_map.items():
            if (v >> old_idx) & 1:
                w |= 1 << new_idx
        if (mask_unfolded_raw >> w) & 1:
            mask_unfolded |= 1 << v
    # one direction holds for any unfolding: I' satisfied implies I satisfied
    assert mask_unfolded & ~mask_orig == 0, "forward direction violated: not an unfolding?"
    diff = mask_orig ^ mask_unfolded
    if diff:
        v = (diff & -diff).bit_length() - 1
        raise LineageMismatch({i for i in range(n) if (v >> i) & 1})


def unfolding_to_json(unf: Unfolding) -> dict:
    from .model import instance_to_json

    return {
        "instance": instance_to_json(unf.instance),
        "homomorphism": dict(sorted(unf.homomorphism.items())),
        "fact_map": {str(k): v for k, v in sorted(unf.fact_map.items())},
        "forest": {
            "parent": {e: p for e, p in sorted(unf.forest.parent.items()) if p is not None},
            "roots": list(unf.forest.roots),
            "height": unf.forest.height,
        },
    }
