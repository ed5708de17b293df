"""Bottom-up tree automata over annotated tree encodings.

Three automaton flavors share one run interface (leaf_state / binary_state /
is_accepting):

* CompiledBdta -- deterministic by construction, compiled from a UCQ-with-
  disequalities query for a fixed width bound.  A state is the set of
  achievable partial-match profiles: per disjunct, which atoms are already
  matched and where each query variable currently lives (a slot of the
  current bag, departed, or unassigned).
* TableBdta / TableBnta -- explicit transition tables over a finite label
  alphabet; the JSON interchange format for user-supplied automata.
* FunctionBdta -- small hand-built automata given by plain functions
  (e.g. counting kept facts of one relation modulo m).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .decomposition import AnnotatedTreeEncoding, Label, TreeEncoding
from .errors import (
    IncompleteTransition,
    LabelNotInAlphabet,
    StateExplosion,
    WidthTooLarge,
)
from .query import UcqNeq

UNASSIGNED = -2
GONE = -1

DEFAULT_STATE_CAP = 10**6


@dataclass(frozen=True)
class CompiledState:
    accepted: bool
    profiles: frozenset  # of (disjunct index, matched-atom mask, status tuple)


_ACCEPT = CompiledState(True, frozenset())


class _Disjunct:
    __slots__ = ("vars", "atoms", "diseqs", "var_atoms", "full_mask", "initial")

    def __init__(self, cq):
        self.vars = cq.variables()
        vidx = {v: i for i, v in enumerate(self.vars)}
        self.atoms = [(a.relation, tuple(vidx[v] for v in a.args)) for a in cq.atoms]
        self.diseqs = [(vidx[u], vidx[v]) for u, v in cq.diseqs]
        self.var_atoms = [0] * len(self.vars)
        for ai, (_, args) in enumerate(self.atoms):
            for v in args:
                self.var_atoms[v] |= 1 << ai
        self.full_mask = (1 << len(self.atoms)) - 1
        self.initial = (0, (UNASSIGNED,) * len(self.vars))


class CompiledBdta:
    """Deterministic automaton for a query on encodings of width <= k."""

    def __init__(self, query: UcqNeq, k: int, cap_states: int = DEFAULT_STATE_CAP):
        self.query = query
        self.k = k
        self.cap_states = cap_states
        self.disjuncts = [_Disjunct(d) for d in query.disjuncts]
        initial = frozenset((di, m, st) for di, d in enumerate(self.disjuncts) for m, st in [d.initial])
        self._initial = CompiledState(False, initial)
        self._states = {self._initial: 0, _ACCEPT: 1}
        self._by_id = [self._initial, _ACCEPT]
        self._leaf_memo = {}
        self._binary_memo = {}

    # -- profile calculus --------------------------------------------------

    def _depart(self, di, mask, st, live):
        d = self.disjuncts[di]
        out = list(st)
        for vi, s in enumerate(st):
            if s >= 0 and s not in live:
                if mask & d.var_atoms[vi] == d.var_atoms[vi]:
                    out[vi] = GONE
                else:
                    return None  # an unmatched atom of vi can never be matched now
        return mask, tuple(out)

    def _join(self, di, p, q):
        d = self.disjuncts[di]
        mask = p[0] | q[0]
        st = []
        for a, b in zip(p[1], q[1]):
            if a == UNASSIGNED:
                st.append(b)
            elif b == UNASSIGNED:
                st.append(a)
            elif a == b and a >= 0:
                st.append(a)
            else:
                return None
        for u, v in d.diseqs:
            if st[u] >= 0 and st[u] == st[v]:
                return None
        return mask, tuple(st)

    def _extend(self, di, profile, relation, slot_args):
        """All profiles obtainable by matching a subset of compatible atoms."""
        d = self.disjuncts[di]
        mask0, st0 = profile
        compatible = [
            ai
            for ai, (rel, args) in enumerate(d.atoms)
            if rel == relation and len(args) == len(slot_args) and not (mask0 >> ai) & 1
        ]
        results = {profile}
        for size in range(1, len(compatible) + 1):
            for subset in itertools.combinations(compatible, size):
                st = list(st0)
                mask = mask0
                ok = True
                for ai in subset:
                    for vi, slot in zip(d.atoms[ai][1], slot_args):
                        if st[vi] == UNASSIGNED:
                            st[vi] = slot
                        elif st[vi] != slot:
                            ok = False
                            break
                    if not ok:
                        break
                    mask |= 1 << ai
                if not ok:
                    continue
                for u, v in d.diseqs:
                    if st[u] >= 0 and st[u] == st[v]:
                        ok = False
                        break
                if ok:
                    results.add((mask, tuple(st)))
        return results

    def _finish(self, per_disjunct):
        """Completion check, dominance pruning, state interning."""
        profiles = []
        for di, plist in per_disjunct.items():
            d = self.disjuncts[di]
            pruned = []
            for mask, st in sorted(plist):
                if mask == d.full_mask:
                    return _ACCEPT
                dominated = False
                for m2, s2 in pruned:
                    if m2 & mask == mask and all(
                        a == b or a == UNASSIGNED for a, b in zip(s2, st)
                    ):
                        dominated = True
                        break
                if not dominated:
                    pruned = [
                        (m2, s2)
                        for m2, s2 in pruned
                        if not (
                            mask & m2 == m2
                            and all(a == b or a == UNASSIGNED for a, b in zip(st, s2))
                        )
                    ]
                    pruned.append((mask, st))
            profiles += [(di, m, s) for m, s in pruned]
        return self._intern(CompiledState(False, frozenset(profiles)))

    def _intern(self, state):
        if state not in self._states:
            if len(self._by_id) >= self.cap_states:
                raise WidthTooLarge(
                    f"compiled automaton exceeded the {self.cap_states}-state cap"
                )
            self._states[state] = len(self._by_id)
            self._by_id.append(state)
        return self._by_id[self._states[state]]

    def _apply_fact(self, label, per_disjunct):
        if label.fact is not None and label.kept:
            relation, slot_args = label.fact
            for di in per_disjunct:
                new = set()
                for p in per_disjunct[di]:
                    new |= self._extend(di, p, relation, slot_args)
                per_disjunct[di] = new
        return per_disjunct

    # -- public transition interface ----------------------------------------

    def leaf_state(self, label: Label) -> CompiledState:
        if label in self._leaf_memo:
            return self._leaf_memo[label]
        per = {di: {d.initial} for di, d in enumerate(self.disjuncts)}
        state = self._finish(self._apply_fact(label, per))
        self._leaf_memo[label] = state
        return state

    def binary_state(self, label: Label, left: CompiledState, right: CompiledState) -> CompiledState:
        key = (label, self._states[left], self._states[right])
        if key in self._binary_memo:
            return self._binary_memo[key]
        if left.accepted or right.accepted:
            state = _ACCEPT
        else:
            live = label.slots
            per = {di: set() for di in range(len(self.disjuncts))}
            per_left = {di: [] for di in per}
            per_right = {di: [] for di in per}
            for di, m, st in left.profiles:
                p = self._depart(di, m, st, live)
                if p is not None:
                    per_left[di].append(p)
            for di, m, st in right.profiles:
                p = self._depart(di, m, st, live)
                if p is not None:
                    per_right[di].append(p)
            for di in per:
                for p in per_left[di]:
                    for q in per_right[di]:
                        j = self._join(di, p, q)
                        if j is not None:
                            per[di].add(j)
            state = self._finish(self._apply_fact(label, per))
        self._binary_memo[key] = state
        return state

    def is_accepting(self, state: CompiledState) -> bool:
        return state.accepted

    def state_id(self, state) -> int:
        return self._states[state]

    @property
    def state_count(self):
        return len(self._by_id)


def compile_query(q: UcqNeq, k: int, cap_states: int = DEFAULT_STATE_CAP) -> CompiledBdta:
    """Deterministic automaton accepting encodings whose kept facts satisfy q.

    Sound for every annotated encoding of every instance of treewidth <= k.
    Raises WidthTooLarge when the lazily discovered state space exceeds cap.
    """
    if k < 0:
        raise WidthTooLarge(f"negative width {k}")
    return CompiledBdta(q, k, cap_states)


# --- function-backed automata ------------------------------------------------


class FunctionBdta:
    """Deterministic automaton given by plain transition functions."""

    def __init__(self, leaf, binary, accepting, k=None, name=""):
        self._leaf = leaf
        self._binary = binary
        self._accepting = accepting
        self.k = k
        self.name = name

    def leaf_state(self, label):
        return self._leaf(label)

    def binary_state(self, label, left, right):
        return self._binary(label, left, right)

    def is_accepting(self, state):
        return self._accepting(state)


def fact_count_bdta(relation: str, modulus: int, residues, name=None) -> FunctionBdta:
    """Automaton counting kept facts of one relation modulo ``modulus``.

    ``residues`` is the accepted set of counts mod modulus; with modulus=2 and
    residues={1} this is the odd-parity automaton.
    """
    residues = frozenset(r % modulus for r in residues)

    def local(label):
        return 1 if (label.kept and label.fact and label.fact[0] == relation) else 0

    return FunctionBdta(
        leaf=lambda label: local(label) % modulus,
        binary=lambda label, l, r: (l + r + local(label)) % modulus,
        accepting=lambda s: s in residues,
        name=name or f"count[{relation}] mod {modulus} in {sorted(residues)}",
    )


# --- tabular automata and JSON ----------------------------------------------


class TableBnta:
    """Nondeterministic automaton with explicit transition tables."""

    def __init__(self, states, alphabet, leaf, binary, accepting):
        self.states = list(states)
        self.alphabet = list(alphabet)
        self._alphabet_set = set(alphabet)
        self.leaf = {lab: frozenset(ss) for lab, ss in leaf.items()}
        self.binary = {key: frozenset(ss) for key, ss in binary.items()}
        self.accepting = frozenset(accepting)

    def leaf_states(self, label):
        if label not in self._alphabet_set:
            raise LabelNotInAlphabet(f"label {label} not declared")
        return self.leaf.get(label, frozenset())

    def binary_states(self, label, lefts, rights):
        if label not in self._alphabet_set:
            raise LabelNotInAlphabet(f"label {label} not declared")
        out = set()
        for ql in lefts:
            for qr in rights:
                out |= self.binary.get((label, ql, qr), frozenset())
        return frozenset(out)

    def run_sets(self, annotated: AnnotatedTreeEncoding):
        enc = annotated.encoding
        states = {}
        for n in enc.postorder():
            node = enc.nodes[n]
            label = annotated.label(n)
            if not node.children:
                states[n] = self.leaf_states(label)
            else:
                l, r = node.children
                states[n] = self.binary_states(label, states[l], states[r])
        return states[enc.root]

    def accepts(self, annotated):
        return bool(self.run_sets(annotated) & self.accepting)


class TableBdta:
    """Deterministic automaton with explicit tables over a declared alphabet."""

    def __init__(self, states, alphabet, leaf, binary, accepting):
        self.states = list(states)
        self.alphabet = list(alphabet)
        self._alphabet_set = set(alphabet)
        self.leaf = dict(leaf)
        self.binary = dict(binary)
        self.accepting = frozenset(accepting)

    def leaf_state(self, label):
        if label not in self._alphabet_set:
            raise LabelNotInAlphabet(f"label {label} not declared")
        try:
            return self.leaf[label]
        except KeyError:
            raise IncompleteTransition(f"no leaf transition for {label}") from None

    def binary_state(self, label, left, right):
        if label not in self._alphabet_set:
            raise LabelNotInAlphabet(f"label {label} not declared")
        try:
            return self.binary[(label, left, right)]
        except KeyError:
            raise IncompleteTransition(f"no transition for ({label}, {left}, {right})") from None

    def is_accepting(self, state):
        return state in self.accepting


def determinize(a: TableBnta, cap_states: int = DEFAULT_STATE_CAP) -> TableBdta:
    """Subset construction; only reachable subset states are materialized."""
    subsets = {}
    order = []

    def intern(s):
        s = frozenset(s)
        if s not in subsets:
            if len(order) >= cap_states:
                raise StateExplosion(f"determinization exceeded {cap_states} states")
            subsets[s] = len(order)
            order.append(s)
        return subsets[s]

    leaf = {}
    for label in a.alphabet:
        leaf[label] = intern(a.leaf.get(label, frozenset()))
    binary = {}
    frontier = list(range(len(order)))
    known_pairs = set()
    while frontier:
        frontier = []
        snapshot = list(order)
        for i, si in enumerate(snapshot):
            for j, sj in enumerate(snapshot):
                if (i, j) in known_pairs:
                    continue
                known_pairs.add((i, j))
                for label in a.alphabet:
                    target = set()
                    for ql in si:
                        for qr in sj:
                            target |= a.binary.get((label, ql, qr), frozenset())
                    before = len(order)
                    t = intern(target)
                    binary[(label, i, j)] = t
                    if len(order) > before:
                        frontier.append(t)
    states = list(range(len(order)))
    accepting = [i for i, s in enumerate(order) if s & a.accepting]
    return TableBdta(states, list(a.alphabet), leaf, binary, accepting)


def run(a, annotated: AnnotatedTreeEncoding):
    """Bottom-up run; returns (accepted, state per node id)."""
    enc = annotated.encoding
    states = {}
    for n in enc.postorder():
        node = enc.nodes[n]
        label = annotated.label(n)
        if not node.children:
            states[n] = a.leaf_state(label)
        elif len(node.children) == 2:
            l, r = node.children
            states[n] = a.binary_state(label, states[l], states[r])
        else:
            raise IncompleteTransition("encoding is not a full binary tree")
    return a.is_accepting(states[enc.root]), states


def accepts_subinstance(a, enc: TreeEncoding, kept) -> bool:
    return run(a, AnnotatedTreeEncoding(enc, kept))[0]


# --- alphabet enumeration and materialization --------------------------------


def label_alphabet(signature, k):
    """All labels of width-k encodings over a signature (small k only)."""
    slots_all = list(range(2 * k + 2))
    labels = []
    for size in range(0, k + 2):
        for slot_set in itertools.combinations(slots_all, size):
            sset = frozenset(slot_set)
            labels.append(Label(sset, None, False))
            for rel, arity in signature.relations:
                for args in itertools.product(slot_set, repeat=arity):
                    for kept in (False, True):
                        labels.append(Label(sset, (rel, tuple(args)), kept))
    return labels


def materialize(a, alphabet, cap_states: int = 10**4) -> TableBdta:
    """Explicit tables for a function-backed or compiled automaton.

    Explores all states reachable over trees labelled from ``alphabet``;
    intended for export of small automata.
    """
    leaf, binary = {}, {}
    intern, order = {}, []

    def reg(s):
        if s not in intern:
            if len(order) >= cap_states:
                raise StateExplosion(f"materialization exceeded {cap_states} states")
            intern[s] = len(order)
            order.append(s)
        return intern[s]

    for label in alphabet:
        leaf[label] = reg(a.leaf_state(label))
    done_pairs = set()
    changed = True
    while changed:
        changed = False
        snapshot = list(order)
        for sl in snapshot:
            for sr in snapshot:
                key = (intern[sl], intern[sr])
                if key in done_pairs:
                    continue
                done_pairs.add(key)
                for label in alphabet:
                    before = len(order)
                    binary[(label, key[0], key[1])] = reg(a.binary_state(label, sl, sr))
                    if len(order) > before:
                        changed = True
    states = list(range(len(order)))
    accepting = [intern[s] for s in order if a.is_accepting(s)]
    return TableBdta(states, list(alphabet), leaf, binary, accepting)


# --- JSON ---------------------------------------------------------------------


def automaton_to_json(a) -> dict:
    if isinstance(a, TableBnta):
        kind = "bnta"
    elif isinstance(a, TableBdta):
        kind = "bdta"
    else:
        raise TypeError("only tabular automata have a JSON form; materialize first")
    alphabet = list(a.alphabet)
    lab_idx = {lab: i for i, lab in enumerate(alphabet)}
    doc = {
        "kind": kind,
        "states": list(a.states),
        "alphabet": [lab.to_json() for lab in alphabet],
        "accepting": sorted(a.accepting),
    }
    if kind == "bdta":
        doc["leaf"] = [[lab_idx[lab], s] for lab, s in sorted(a.leaf.items(), key=lambda x: lab_idx[x[0]])]
        doc["binary"] = [
            [lab_idx[lab], ql, qr, s]
            for (lab, ql, qr), s in sorted(a.binary.items(), key=lambda x: (lab_idx[x[0][0]], x[0][1], x[0][2]))
        ]
    else:
        doc["leaf"] = [
            [lab_idx[lab], sorted(ss)] for lab, ss in sorted(a.leaf.items(), key=lambda x: lab_idx[x[0]])
        ]
        doc["binary"] = [
            [lab_idx[lab], ql, qr, sorted(ss)]
            for (lab, ql, qr), ss in sorted(a.binary.items(), key=lambda x: (lab_idx[x[0][0]], x[0][1], x[0][2]))
        ]
    return doc


def automaton_from_json(doc: dict):
    alphabet = [Label.from_json(d) for d in doc["alphabet"]]
    if doc["kind"] == "bdta":
        leaf = {alphabet[i]: s for i, s in doc["leaf"]}
        binary = {(alphabet[i], ql, qr): s for i, ql, qr, s in doc["binary"]}
        return TableBdta(doc["states"], alphabet, leaf, binary, doc["accepting"])
    if doc["kind"] == "bnta":
        leaf = {alphabet[i]: frozenset(ss) for i, ss in doc["leaf"]}
        binary = {(alphabet[i], ql, qr): frozenset(ss) for i, ql, qr, ss in doc["binary"]}
        return TableBnta(doc["states"], alphabet, leaf, binary, doc["accepting"])
    raise ValueError(f"unknown automaton kind {doc['kind']!r}")
