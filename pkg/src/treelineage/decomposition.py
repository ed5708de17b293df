"""Tree/path decompositions, elimination forests, and binary tree encodings.

Decompositions are rooted trees of bags over the active domain.  Widths are
exact for small domains (subset dynamic programming) and heuristic above;
whenever the heuristic is already optimal, the heuristic decomposition itself
is returned, so output shapes stay uniform across instance families.

Tree encodings binarize a decomposition into a full binary tree housing one
fact per node.  Elements are addressed through *slots* in {0..2k+1}: a slot
shared by a node and its parent always denotes the same element, which is the
only convention the automaton module relies on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import (
    DisconnectedOccurrence,
    FactNotCovered,
    InvalidDecomposition,
    NotAPath,
    WidthMismatch,
    WidthOverflow,
)
from .model import Fact, GaifmanGraph, Instance, gaifman_graph


class TreeDecomposition:
    """Rooted tree of bags; ``bags[i]`` is a frozenset of elements."""

    def __init__(self, bags, children, root, width=None):
        self.bags = [frozenset(b) for b in bags]
        self.children = [list(c) for c in children]
        self.root = root
        self.width = width if width is not None else max((len(b) for b in self.bags), default=0) - 1

    def __len__(self):
        return len(self.bags)

    def parent_map(self):
        parent = {self.root: None}
        for i, cs in enumerate(self.children):
            for c in cs:
                parent[c] = i
        return parent

    def preorder(self):
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            out.append(n)
            for c in reversed(self.children[n]):
                stack.append(c)
        return out

    def postorder(self):
        return list(reversed([n for n in self._reverse_post()]))

    def _reverse_post(self):
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            out.append(n)
            for c in self.children[n]:
                stack.append(c)
        return out

    def is_path(self):
        return all(len(c) <= 1 for c in self.children)

    def max_bag(self):
        return max((len(b) for b in self.bags), default=0)


class PathDecomposition(TreeDecomposition):
    """Tree decomposition whose tree is a simple path (each node has <= 1 child)."""

    def __init__(self, bags, children, root, width=None):
        super().__init__(bags, children, root, width)
        if not self.is_path():
            raise NotAPath("path decomposition has a branching node")

    def path_order(self):
        """Bags from the deep end to the root."""
        order, n = [], self.root
        while True:
            order.append(n)
            cs = self.children[n]
            if not cs:
                break
            n = cs[0]
        return list(reversed(order))


def validate_decomposition(inst: Instance, td: TreeDecomposition) -> None:
    """Check coverage, occurrence connectivity, and the declared width."""
    dom = set(inst.domain)
    for i, bag in enumerate(td.bags):
        foreign = bag - dom
        if foreign:
            raise InvalidDecomposition(f"bag {i} contains foreign elements {sorted(foreign)}")
    for idx, fact in enumerate(inst.facts):
        args = set(fact.args)
        if not any(args <= bag for bag in td.bags):
            raise FactNotCovered(idx)
    parent = td.parent_map()
    if set(parent) != set(range(len(td.bags))):
        raise InvalidDecomposition("decomposition tree is not connected or has stray nodes")
    for element in inst.domain:
        holders = [i for i, bag in enumerate(td.bags) if element in bag]
        if not holders:
            # elements of unary-only facts still occur in a covering bag
            raise DisconnectedOccurrence(element)
        holder_set = set(holders)
        # the occurrence set is a connected subtree iff all holders but one
        # have their parent inside the set
        tops = [h for h in holders if parent[h] is None or parent[h] not in holder_set]
        if len(tops) != 1:
            raise DisconnectedOccurrence(element)
    actual = td.max_bag() - 1
    if actual != td.width:
        raise WidthMismatch(td.width, actual)


# --- elimination-order machinery -----------------------------------------


def _adjacency_masks(graph: GaifmanGraph, order):
    index = {v: i for i, v in enumerate(order)}
    nb = [0] * len(order)
    for e in graph.edges:
        u, v = tuple(e)
        nb[index[u]] |= 1 << index[v]
        nb[index[v]] |= 1 << index[u]
    return nb


def _decomposition_from_elimination(inst, graph, order):
    """Standard bag construction from an elimination order, with fill-in."""
    adj = graph.adjacency()
    pos = {v: i for i, v in enumerate(order)}
    bags = {}
    for v in order:
        later = {w for w in adj[v] if pos[w] > pos[v]}
        bags[v] = frozenset({v} | later)
        for u in later:
            adj[u].discard(v)
            for w in later:
                if w != u:
                    adj[u].add(w)
    # parent of bag(v): the earliest-eliminated vertex among its later neighbors
    node_of = {v: i for i, v in enumerate(order)}
    children = [[] for _ in order]
    roots = []
    for v in order:
        later = bags[v] - {v}
        if later:
            parent_vertex = min(later, key=lambda w: pos[w])
            children[node_of[parent_vertex]].append(node_of[v])
        else:
            roots.append(node_of[v])
    bag_list = [bags[v] for v in order]
    if not roots:  # empty domain
        return TreeDecomposition([frozenset()], [[]], 0)
    root = roots[-1]
    for r in roots[:-1]:  # stitch other components under the main root
        children[root].append(r)
    for cs in children:
        cs.sort()
    width = max(len(b) for b in bag_list) - 1
    return TreeDecomposition(bag_list, children, root, width)


def _min_fill_order(inst, graph):
    adj = graph.adjacency()
    remaining = list(inst.domain)
    order = []
    while remaining:
        def fill(v):
            ns = [u for u in adj[v] if u in live]
            cnt = 0
            for i in range(len(ns)):
                for j in range(i + 1, len(ns)):
                    if ns[j] not in adj[ns[i]]:
                        cnt += 1
            return cnt

        live = set(remaining)
        best = min(remaining, key=lambda v: (fill(v), inst.domain_index(v)))
        ns = [u for u in adj[best] if u in live and u != best]
        for i in range(len(ns)):
            for j in range(i + 1, len(ns)):
                adj[ns[i]].add(ns[j])
                adj[ns[j]].add(ns[i])
        for u in ns:
            adj[u].discard(best)
        remaining.remove(best)
        order.append(best)
    return order


def _exact_treewidth_order(inst, graph):
    """Subset DP over elimination prefixes; returns (treewidth, order)."""
    order_all = list(inst.domain)
    n = len(order_all)
    nb = _adjacency_masks(graph, order_all)
    full = (1 << n) - 1

    def q_cost(excluded, v):
        # vertices outside `excluded`+v reachable from v through `excluded`
        outside, inside_seen = 0, 1 << v
        frontier = nb[v]
        while frontier:
            outside |= frontier & ~excluded
            new_inside = frontier & excluded & ~inside_seen
            inside_seen |= new_inside
            frontier = 0
            m = new_inside
            while m:
                u = (m & -m).bit_length() - 1
                m &= m - 1
                frontier |= nb[u]
            frontier &= ~inside_seen & ~outside
        return bin(outside & ~(1 << v)).count("1")

    dp = {0: -1}
    by_size = [[] for _ in range(n + 1)]
    for s in range(1 << n):
        by_size[bin(s).count("1")].append(s)
    for size in range(1, n + 1):
        for s in by_size[size]:
            best = None
            m = s
            while m:
                v = (m & -m).bit_length() - 1
                m &= m - 1
                rest = s & ~(1 << v)
                cand = max(dp[rest], q_cost(rest, v))
                if best is None or cand < best:
                    best = cand
            dp[s] = best
    tw = dp[full]
    # reconstruct one optimal order, smallest vertex index on ties
    order = [None] * n
    s = full
    while s:
        size = bin(s).count("1")
        m = s
        chosen = None
        for v in range(n):
            if not (s >> v) & 1:
                continue
            rest = s & ~(1 << v)
            if max(dp[rest], q_cost(rest, v)) == dp[s]:
                chosen = v
                break
        order[size - 1] = order_all[chosen]
        s &= ~(1 << chosen)
    return tw, order


EXACT_TREEWIDTH_LIMIT = 12
EXACT_PATHWIDTH_LIMIT = 10
EXACT_TREEDEPTH_LIMIT = 10


def decompose_treewidth(inst: Instance, budget: int | None = None) -> TreeDecomposition:
    """A valid tree decomposition; width is exact when |dom| <= 12.

    The min-fill heuristic order (ties by first-occurrence index) is used
    first; on small domains an exact subset DP certifies it or supplies a
    better order.  ``budget`` is only a hint and never causes failure.
    """
    graph = gaifman_graph(inst)
    if not inst.domain:
        return TreeDecomposition([frozenset()], [[]], 0)
    order = _min_fill_order(inst, graph)
    td = _decomposition_from_elimination(inst, graph, order)
    if len(inst.domain) <= EXACT_TREEWIDTH_LIMIT:
        tw, exact_order = _exact_treewidth_order(inst, graph)
        if tw < td.width:
            td = _decomposition_from_elimination(inst, graph, exact_order)
    return td


def _path_from_vertex_order(inst, graph, order):
    adj = graph.adjacency()
    pos = {v: i for i, v in enumerate(order)}
    bags = []
    for i, v in enumerate(order):
        bag = {v}
        for u in order[:i]:
            if any(pos[w] >= i for w in adj[u]):
                bag.add(u)
        bags.append(frozenset(bag))
    # root at the last bag so the obdd in-order traversal emits bag 0 first
    n = len(bags)
    children = [[] for _ in range(n)]
    for i in range(1, n):
        children[i].append(i - 1)
    width = max(len(b) for b in bags) - 1
    return PathDecomposition(bags, children, n - 1, width)


def _vertex_separation(graph, order):
    adj = graph.adjacency()
    pos = {v: i for i, v in enumerate(order)}
    best = 0
    for i in range(len(order)):
        bag = 1
        for u in order[:i]:
            if any(pos[w] >= i for w in adj[u]):
                bag += 1
        best = max(best, bag - 1)
    return best


def _bfs_order(inst, graph, start):
    adj = graph.adjacency()
    seen = {start}
    queue = [start]
    order = []
    while queue:
        v = queue.pop(0)
        order.append(v)
        for u in sorted(adj[v], key=inst.domain_index):
            if u not in seen:
                seen.add(u)
                queue.append(u)
        if not queue:
            rest = [u for u in inst.domain if u not in seen]
            if rest:
                nxt = rest[0]
                seen.add(nxt)
                queue.append(nxt)
    return order


def _exact_pathwidth_order(inst, graph):
    order_all = list(inst.domain)
    n = len(order_all)
    nb = _adjacency_masks(graph, order_all)
    full = (1 << n) - 1

    def boundary(s):
        cnt = 0
        m = s
        while m:
            v = (m & -m).bit_length() - 1
            m &= m - 1
            if nb[v] & ~s:
                cnt += 1
        return cnt

    dp = {0: 0}
    by_size = [[] for _ in range(n + 1)]
    for s in range(1 << n):
        by_size[bin(s).count("1")].append(s)
    for size in range(1, n + 1):
        for s in by_size[size]:
            best = None
            m = s
            while m:
                v = (m & -m).bit_length() - 1
                m &= m - 1
                rest = s & ~(1 << v)
                cand = max(dp[rest], boundary(rest))
                if best is None or cand < best:
                    best = cand
            dp[s] = best
    order = [None] * n
    s = full
    while s:
        size = bin(s).count("1")
        for v in range(n):
            if not (s >> v) & 1:
                continue
            rest = s & ~(1 << v)
            if max(dp[rest], boundary(rest)) == dp[s]:
                order[size - 1] = order_all[v]
                s = rest
                break
    return dp[full], order


def decompose_pathwidth(inst: Instance) -> PathDecomposition:
    """A valid path decomposition; width is exact when |dom| <= 10."""
    graph = gaifman_graph(inst)
    if not inst.domain:
        return PathDecomposition([frozenset()], [[]], 0)
    candidates = [_bfs_order(inst, graph, inst.domain[0]), list(inst.domain)]
    deg = {v: len(graph.neighbors(v)) for v in inst.domain}
    peripheral = min(inst.domain, key=lambda v: (deg[v], inst.domain_index(v)))
    candidates.append(_bfs_order(inst, graph, peripheral))
    best_order = min(candidates, key=lambda o: _vertex_separation(graph, o))
    best_width = _vertex_separation(graph, best_order)
    if len(inst.domain) <= EXACT_PATHWIDTH_LIMIT:
        pw, exact_order = _exact_pathwidth_order(inst, graph)
        if pw < best_width:
            best_order = exact_order
    return _path_from_vertex_order(inst, graph, best_order)


def binarize(td: TreeDecomposition) -> TreeDecomposition:
    """Duplicate over-full nodes (same bag) until every node has <= 2 children."""
    if all(len(c) <= 2 for c in td.children):
        return td
    bags = list(td.bags)
    children = [list(c) for c in td.children]
    queue = [i for i in range(len(bags)) if len(children[i]) > 2]
    while queue:
        n = queue.pop(0)
        while len(children[n]) > 2:
            rest = children[n][1:]
            dup = len(bags)
            bags.append(bags[n])
            children.append(rest)
            children[n] = [children[n][0], dup]
            n = dup
    return TreeDecomposition(bags, children, td.root, td.width)


# --- tree depth -----------------------------------------------------------


class EliminationForest:
    """Forest over the domain where every Gaifman edge joins ancestor/descendant."""

    def __init__(self, parent: dict, roots, height: int):
        self.parent = dict(parent)
        self.roots = tuple(roots)
        self.height = height

    def depth(self, v):
        d, cur = 1, v
        while self.parent[cur] is not None:
            cur = self.parent[cur]
            d += 1
        return d

    def is_ancestor(self, a, b):
        cur = b
        while cur is not None:
            if cur == a:
                return True
            cur = self.parent[cur]
        return False

    def validate(self, graph: GaifmanGraph) -> None:
        for e in graph.edges:
            u, v = tuple(e)
            if not (self.is_ancestor(u, v) or self.is_ancestor(v, u)):
                raise InvalidDecomposition(f"edge {{{u},{v}}} joins incomparable forest nodes")


def _components(vertices, adj):
    comps, seen = [], set()
    for v in vertices:
        if v in seen:
            continue
        comp, stack = [], [v]
        seen.add(v)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if w in vertices and w not in seen:
                    seen.add(w)
                    stack.append(w)
        comps.append(frozenset(comp))
    return comps


def tree_depth(inst: Instance):
    """(EliminationForest, height); exact minimal height when |dom| <= 10."""
    graph = gaifman_graph(inst)
    adj = graph.adjacency()
    if not inst.domain:
        return EliminationForest({}, (), 0), 0
    exact = len(inst.domain) <= EXACT_TREEDEPTH_LIMIT
    memo = {}

    def key_order(vs):
        return sorted(vs, key=inst.domain_index)

    def solve(comp: frozenset):
        if len(comp) == 1:
            v = next(iter(comp))
            return 1, (v, [])
        if comp in memo:
            return memo[comp]
        if exact:
            best = None
            for v in key_order(comp):
                sub = solve_split(comp, v)
                if best is None or sub[0] < best[0]:
                    best = sub
            memo[comp] = best
            return best
        v = max(
            comp,
            key=lambda u: (sum(1 for w in adj[u] if w in comp), -inst.domain_index(u)),
        )
        result = solve_split(comp, v)
        memo[comp] = result
        return result

    def solve_split(comp, v):
        rest = comp - {v}
        height = 1
        subtrees = []
        for sub in _components(key_order(rest), adj):
            h, tree = solve(sub)
            height = max(height, 1 + h)
            subtrees.append(tree)
        return height, (v, subtrees)

    parent, roots = {}, []
    height = 0
    for comp in _components(key_order(set(inst.domain)), adj):
        h, tree = solve(comp)
        height = max(height, h)
        roots.append(tree[0])
        stack = [(tree, None)]
        while stack:
            (v, subs), par = stack.pop()
            parent[v] = par
            for s in subs:
                stack.append((s, v))
    return EliminationForest(parent, roots, height), height


# --- tree encodings --------------------------------------------------------


@dataclass(frozen=True)
class Label:
    """Instance-independent node label read by tree automata."""

    slots: frozenset
    fact: tuple | None  # (relation, slot tuple)
    kept: bool

    def to_json(self):
        return {
            "slots": sorted(self.slots),
            "fact": [self.fact[0], list(self.fact[1])] if self.fact else None,
            "kept": self.kept,
        }

    @staticmethod
    def from_json(doc):
        fact = None
        if doc.get("fact"):
            fact = (doc["fact"][0], tuple(doc["fact"][1]))
        return Label(frozenset(doc["slots"]), fact, bool(doc.get("kept", False)))


class EncNode:
    __slots__ = ("slots", "witness", "fact", "fact_index", "children")

    def __init__(self, slots, witness, fact, fact_index, children):
        self.slots = frozenset(slots)
        self.witness = dict(witness)
        self.fact = fact
        self.fact_index = fact_index
        self.children = tuple(children)


class TreeEncoding:
    """Full binary tree housing exactly one instance fact per fact node.

    Slot convention: slots live in {0..2k+1}; a slot present in a node and in
    its parent denotes the same element in both.
    """

    def __init__(self, signature, k, nodes, root):
        self.signature = signature
        self.k = k
        self.nodes = nodes
        self.root = root
        self.fact_nodes = {
            n.fact_index: i for i, n in enumerate(nodes) if n.fact_index is not None
        }

    def __len__(self):
        return len(self.nodes)

    def label(self, node_id: int, kept: bool = False) -> Label:
        n = self.nodes[node_id]
        return Label(n.slots, n.fact, kept if n.fact is not None else False)

    def postorder(self):
        out, stack = [], [(self.root, False)]
        while stack:
            n, expanded = stack.pop()
            if expanded:
                out.append(n)
            else:
                stack.append((n, True))
                for c in reversed(self.nodes[n].children):
                    stack.append((c, False))
        return out

    def decode(self) -> Instance:
        facts = {}
        for i, n in enumerate(self.nodes):
            if n.fact is not None:
                rel, slot_args = n.fact
                facts[n.fact_index] = Fact(rel, tuple(n.witness[s] for s in slot_args))
        return Instance(self.signature, [facts[i] for i in sorted(facts)])


class AnnotatedTreeEncoding:
    """A tree encoding plus a keep/drop choice per housed fact."""

    def __init__(self, encoding: TreeEncoding, kept):
        self.encoding = encoding
        self.kept = frozenset(kept)

    def label(self, node_id: int) -> Label:
        n = self.encoding.nodes[node_id]
        return self.encoding.label(node_id, n.fact_index in self.kept)


def tree_encode(inst: Instance, td: TreeDecomposition, k: int | None = None) -> TreeEncoding:
    """Binarized one-fact-per-node encoding of ``inst`` along ``td``.

    Facts are housed at the shallowest covering bag (ties by preorder);
    bags housing several facts are duplicated into same-bag chains; nodes
    with one child get an empty leaf sibling so the tree is full binary.
    """
    td = binarize(td)
    if k is None:
        k = max(td.width, 0)
    for bag in td.bags:
        if len(bag) > k + 1:
            raise WidthOverflow(f"bag of size {len(bag)} exceeds declared width {k}")

    parent = td.parent_map()
    depth = {td.root: 0}
    pre = td.preorder()
    pre_index = {n: i for i, n in enumerate(pre)}
    for n in pre:
        for c in td.children[n]:
            depth[c] = depth[n] + 1

    # deterministic slot assignment, persistent across parent/child
    slot_maps = {}
    for n in pre:
        par = parent[n]
        taken, mapping = set(), {}
        if par is not None:
            pmap = slot_maps[par]
            taken |= set(pmap.values())
            for e in td.bags[n]:
                if e in pmap:
                    mapping[e] = pmap[e]
        free = [s for s in range(2 * k + 2) if s not in taken]
        fresh = sorted(td.bags[n] - set(mapping), key=inst.domain_index)
        for e in fresh:
            mapping[e] = free.pop(0)
        slot_maps[n] = mapping

    housed = {n: [] for n in range(len(td.bags))}
    for idx, fact in enumerate(inst.facts):
        args = set(fact.args)
        candidates = [n for n in range(len(td.bags)) if args <= td.bags[n]]
        if not candidates:
            raise FactNotCovered(idx)
        home = min(candidates, key=lambda n: (depth[n], pre_index[n]))
        housed[home].append(idx)

    nodes: list[EncNode] = []

    def emit(td_node):
        mapping = slot_maps[td_node]
        slots = frozenset(mapping.values())
        witness = {s: e for e, s in mapping.items()}
        facts_here = sorted(housed[td_node])
        child_ids = [emit(c) for c in td.children[td_node]]
        # innermost copy carries the decomposition children
        current_children = child_ids
        node_id = None
        chain = facts_here if facts_here else [None]
        for fi in reversed(chain):
            fact = None
            if fi is not None:
                f = inst.facts[fi]
                fact = (f.relation, tuple(mapping[a] for a in f.args))
            nodes.append(EncNode(slots, witness, fact, fi, current_children))
            node_id = len(nodes) - 1
            current_children = [node_id]
        return node_id

    root = emit(td.root)

    # pad single-child nodes with an empty leaf so every node has 0 or 2 children
    padded: list[EncNode] = list(nodes)
    for i, n in enumerate(list(padded)):
        if len(n.children) == 1:
            padded.append(EncNode(frozenset(), {}, None, None, ()))
            padded[i] = EncNode(n.slots, n.witness, n.fact, n.fact_index, (n.children[0], len(padded) - 1))
    return TreeEncoding(inst.signature, k, padded, root)


# --- JSON -------------------------------------------------------------------


def decomposition_to_json(td: TreeDecomposition) -> dict:
    return {
        "nodes": [
            {"id": i, "bag": sorted(td.bags[i]), "children": list(td.children[i])}
            for i in range(len(td.bags))
        ],
        "width": td.width,
    }


def decomposition_from_json(doc: dict, path: bool = False) -> TreeDecomposition:
    nodes = sorted(doc["nodes"], key=lambda n: n["id"])
    bags = [frozenset(n["bag"]) for n in nodes]
    children = [list(n["children"]) for n in nodes]
    non_roots = {c for cs in children for c in cs}
    roots = [i for i in range(len(bags)) if i not in non_roots]
    if len(roots) != 1:
        raise InvalidDecomposition(f"expected one root, found {roots}")
    cls = PathDecomposition if path else TreeDecomposition
    return cls(bags, children, roots[0], doc.get("width"))


def encoding_to_json(enc: TreeEncoding) -> dict:
    return {
        "k": enc.k,
        "root": enc.root,
        "signature": [[n, a] for n, a in enc.signature.relations],
        "nodes": [
            {
                "id": i,
                "slots": sorted(n.slots),
                "witness": {str(s): e for s, e in sorted(n.witness.items())},
                "fact": [n.fact[0], list(n.fact[1])] if n.fact else None,
                "fact_index": n.fact_index,
                "children": list(n.children),
            }
            for i, n in enumerate(enc.nodes)
        ],
    }


def encoding_from_json(doc: dict) -> TreeEncoding:
    from .model import Signature

    sig = Signature.of(*[(n, a) for n, a in doc["signature"]])
    nodes = []
    for nd in sorted(doc["nodes"], key=lambda n: n["id"]):
        fact = (nd["fact"][0], tuple(nd["fact"][1])) if nd["fact"] else None
        nodes.append(
            EncNode(
                frozenset(nd["slots"]),
                {int(s): e for s, e in nd["witness"].items()},
                fact,
                nd["fact_index"],
                tuple(nd["children"]),
            )
        )
    return TreeEncoding(sig, doc["k"], nodes, doc["root"])
