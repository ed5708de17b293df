"""Exact-rational probability engines.

Four independent routes to the same number: the brute-force subinstance sum
(the oracle), junction-tree message passing on a bounded-treewidth circuit,
the bottom-up d-DNNF pass, and (in the obdd module) the OBDD path sum.
The acceptance suite asserts exact Fraction equality across all four.
"""

from __future__ import annotations

from fractions import Fraction

from .circuit import AND, CONST, INPUT, NOT, OR, Circuit, check_ddnnf, evaluate_circuit
from .errors import InstanceTooLarge, NotDDnnf
from .model import Instance, ProbabilityValuation
from .msgpass import circuit_output_probability
from .query import UcqNeq, match_masks

DEFAULT_BRUTE_CAP = 24


def brute_force_probability(
    q, inst: Instance, pi: ProbabilityValuation, cap: int = DEFAULT_BRUTE_CAP
) -> Fraction:
    """Sum of subinstance probabilities over all satisfying fact subsets.

    ``q`` may be a query or a lineage circuit over the instance's facts.
    """
    n = len(inst)
    if n > cap:
        raise InstanceTooLarge(f"{n} facts exceeds the brute-force cap {cap}")
    pi.check_covers(inst)
    if isinstance(q, UcqNeq):
        masks = match_masks(q, inst, cap)

        def satisfied(v):
            return any(v & m == m for m in masks)

    elif isinstance(q, Circuit):
        def satisfied(v, q=q):
            return evaluate_circuit(q, {i: bool((v >> i) & 1) for i in range(n)})

    else:
        raise TypeError(f"cannot evaluate a {type(q).__name__}")

    # incremental products over the subset lattice, one fact at a time
    weights = [Fraction(1)]
    for i in range(n):
        p = pi[i]
        weights = [w * (1 - p) for w in weights] + [w * p for w in weights]
    total = Fraction(0)
    for v in range(1 << n):
        if satisfied(v):
            total += weights[v]
    return total


def circuit_probability(c: Circuit, cd, pi: ProbabilityValuation, cap_entries=None) -> Fraction:
    """Message passing over the circuit decomposition (fan-in-2 + input patch)."""
    kwargs = {} if cap_entries is None else {"cap_entries": cap_entries}
    return circuit_output_probability(c, cd, pi, **kwargs)


def ddnnf_probability(c: Circuit, pi: ProbabilityValuation, verify: bool = False) -> Fraction:
    """One bottom-up pass: products at ANDs, sums at ORs, 1-p at negated inputs.

    Requires a circuit certified d-DNNF by construction, or ``verify=True`` to
    run the checker first.
    """
    if verify:
        report = check_ddnnf(c)
        if not report.is_ddnnf:
            raise NotDDnnf(f"violations: {report.violations[:3]}")
    elif not c.ddnnf_certified:
        raise NotDDnnf("circuit is not construction-certified; pass verify=True")
    vals = [Fraction(0)] * len(c)
    for g in range(len(c)):
        kind = c.kinds[g]
        if kind == INPUT:
            vals[g] = pi[c.payload[g]]
        elif kind == CONST:
            vals[g] = Fraction(1) if c.payload[g] else Fraction(0)
        elif kind == NOT:
            vals[g] = 1 - vals[c.inputs_of[g][0]]
        elif kind == AND:
            v = Fraction(1)
            for i in c.inputs_of[g]:
                v *= vals[i]
            vals[g] = v
        else:
            v = Fraction(0)
            for i in c.inputs_of[g]:
                v += vals[i]
            vals[g] = v
    return vals[c.output]
