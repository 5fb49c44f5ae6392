#!/usr/bin/env python3
"""
Gewichtete 3-reguläre MaxCut-Instanzen
Erzeugt, kanonisiert, gewichtet und serialisiert die Graphen, auf denen alle
anderen Module arbeiten.
"""

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from typing_extensions import Self

from config import MAX_EXHAUSTIVE_VERTICES
from errors import InvalidArgumentError, UnsupportedError
from serialization import dumps17, read_text, write_text

Edge = Tuple[int, int, float]


@dataclass(frozen=True)
class GraphInstance:
    """Ein MaxCut-Problem: Knotenzahl, sortierte Kantenliste (u < v, w), Topologie-ID, Gewichts-Seed"""
    n: int
    edges: Tuple[Edge, ...]
    topology_id: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidArgumentError(f"n muss positiv sein, nicht {self.n}")
        normalized = []
        seen = set()
        for edge in self.edges:
            u, v, w = int(edge[0]), int(edge[1]), float(edge[2])
            if u > v:
                u, v = v, u
            if u == v:
                raise InvalidArgumentError(f"Schleife an Knoten {u}")
            if u < 0 or v >= self.n:
                raise InvalidArgumentError(f"Kante ({u},{v}) außerhalb von 0..{self.n - 1}")
            if (u, v) in seen:
                raise InvalidArgumentError(f"Mehrfachkante ({u},{v})")
            if not np.isfinite(w) or w < 0.0:
                raise InvalidArgumentError(f"Ungültiges Gewicht {w} an Kante ({u},{v})")
            seen.add((u, v))
            normalized.append((u, v, w))
        normalized.sort(key=lambda e: (e[0], e[1]))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(normalized))
        if self.seed is not None:
            object.__setattr__(self, "seed", int(self.seed))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges], dtype=np.float64)

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return [(u, v) for u, v, _ in self.edges]

    def adjacency(self) -> List[set]:
        adj = [set() for _ in range(self.n)]
        for u, v, _ in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def degrees(self) -> List[int]:
        return [len(nbrs) for nbrs in self.adjacency()]

    def is_connected(self) -> bool:
        return _is_connected(self.n, self.adjacency())

    def is_cubic(self) -> bool:
        return all(d == 3 for d in self.degrees()) and self.is_connected()

    def check_cubic(self):
        """Erzwingt Grad 3, Zusammenhang und |E| = 3n/2"""
        if not self.is_cubic() or self.num_edges != 3 * self.n // 2:
            raise InvalidArgumentError(f"Kein zusammenhängender 3-regulärer Graph (n={self.n}, |E|={self.num_edges})")

    def relabel(self, perm: Sequence[int]) -> "GraphInstance":
        """Knoten v bekommt die Nummer perm[v]"""
        if sorted(perm) != list(range(self.n)):
            raise InvalidArgumentError("Keine Permutation der Knoten")
        edges = tuple((perm[u], perm[v], w) for u, v, w in self.edges)
        return GraphInstance(self.n, edges, self.topology_id, self.seed)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_weighted_edges_from(self.edges)
        return graph

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "topology_id": self.topology_id,
            "edges": [[u, v, float(w)] for u, v, w in self.edges],
        }

    def to_json(self, prov: Optional[Dict] = None) -> str:
        """Instanzdatei, Gewichte mit 17 signifikanten Stellen"""
        data = {"provenance": prov} if prov else {}
        data.update(self.to_dict())
        return dumps17(data)

    @classmethod
    def from_dict(cls, data: Dict) -> Self:
        try:
            edges = tuple((int(e[0]), int(e[1]), float(e[2])) for e in data["edges"])
            return cls(int(data["n"]), edges, str(data.get("topology_id", "")), data.get("seed"))
        except InvalidArgumentError:
            raise
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise InvalidArgumentError(f"Ungültige Instanzdaten: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> Self:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"Instanzdatei ist kein JSON: {e}") from e

    def save(self, path: str, prov: Optional[Dict] = None):
        write_text(path, self.to_json(prov) + "\n")

    @classmethod
    def load(cls, path: str) -> Self:
        return cls.from_json(read_text(path))


def _is_connected(n: int, adj: Sequence[set]) -> bool:
    if n == 0:
        return True
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == n


# ---------------------------------------------------------------------------
# Kanonische Beschriftung (Verfeinerung + Individualisierung)
# ---------------------------------------------------------------------------

def _refine(adj: Sequence[Sequence[int]], colors: List[int]) -> List[int]:
    """Farbverfeinerung bis zur stabilen (equitablen) Partition; Farben = Ränge"""
    while True:
        signatures = [(colors[v], tuple(sorted(colors[u] for u in adj[v]))) for v in range(len(colors))]
        ranking = {sig: rank for rank, sig in enumerate(sorted(set(signatures)))}
        refined = [ranking[sig] for sig in signatures]
        if len(ranking) == len(set(colors)):
            return refined
        colors = refined


def _individualize(colors: List[int], vertex: int) -> List[int]:
    keys = [(c, 0 if v == vertex else 1) for v, c in enumerate(colors)]
    ranking = {key: rank for rank, key in enumerate(sorted(set(keys)))}
    return [ranking[key] for key in keys]


def _discrete_labelings(adj: Sequence[Sequence[int]], colors: List[int]) -> List[List[int]]:
    """Alle Blätter des Individualisierungsbaums (ohne Automorphismen-Pruning)"""
    colors = _refine(adj, colors)
    n = len(colors)
    counts = Counter(colors)
    if len(counts) == n:
        return [colors]
    target = min((count, color) for color, count in counts.items() if count > 1)[1]
    leaves = []
    for v in range(n):
        if colors[v] == target:
            leaves.extend(_discrete_labelings(adj, _individualize(colors, v)))
    return leaves


def _canonical_form(n: int, pairs: Sequence[Tuple[int, int]],
                    weights: Optional[Sequence[float]] = None) -> Tuple[Tuple, List[int]]:
    """Kanonisches Zertifikat und Permutation perm[alt] = neu

    Primär zählt die ungewichtete Kantenliste, Gewichte brechen Gleichstände
    zwischen Automorphismen; danach gewinnt die lexikographisch kleinste
    Permutation (Identität für bereits kanonische Graphen).
    """
    adj = [[] for _ in range(n)]
    for u, v in pairs:
        adj[u].append(v)
        adj[v].append(u)
    start = [len(nbrs) for nbrs in adj]
    best_key = None
    best_perm: List[int] = []
    for perm in _discrete_labelings(adj, start):
        relabeled = sorted(
            (min(perm[u], perm[v]), max(perm[u], perm[v]), idx) for idx, (u, v) in enumerate(pairs)
        )
        cert = tuple((a, b) for a, b, _ in relabeled)
        wcert = tuple(weights[idx] for _, _, idx in relabeled) if weights is not None else ()
        key = (cert, wcert, tuple(perm))
        if best_key is None or key < best_key:
            best_key = key
            best_perm = perm
    return best_key[0], list(best_perm)


def topology_id_from_certificate(n: int, cert: Sequence[Tuple[int, int]]) -> str:
    digest = hashlib.sha1(("%d:" % n + ";".join(f"{a}-{b}" for a, b in cert)).encode("ascii")).hexdigest()
    return f"c3n{n}-{digest[:16]}"


def canonical_label(graph: GraphInstance) -> Tuple[GraphInstance, List[int]]:
    """Kanonisch umbenannte Instanz und die angewandte Permutation perm[alt] = neu"""
    cert, perm = _canonical_form(graph.n, graph.pairs, [w for _, _, w in graph.edges])
    relabeled = graph.relabel(perm)
    topo_id = topology_id_from_certificate(graph.n, cert)
    return GraphInstance(relabeled.n, relabeled.edges, topo_id, graph.seed), perm


# ---------------------------------------------------------------------------
# Topologien
# ---------------------------------------------------------------------------

def _check_size(n: int):
    if not isinstance(n, (int, np.integer)) or n < 4 or n % 2 == 1:
        raise InvalidArgumentError(f"n muss gerade und >= 4 sein, nicht {n}")


def enumerate_cubic_topologies(n: int) -> List[GraphInstance]:
    """Alle zusammenhängenden, nicht-isomorphen kubischen Graphen auf n Knoten

    Zustände sind zusammenhängende Teilgraphen mit Maximalgrad 3. Pro Schritt
    wird ein ungesättigter Knoten vollständig verdrahtet (bestehende Knoten
    oder frische Knoten); Isomorphe werden je Ebene über die kanonische Form
    verworfen.
    """
    _check_size(n)
    if n > MAX_EXHAUSTIVE_VERTICES:
        raise UnsupportedError(f"Exhaustive Aufzählung nur bis n={MAX_EXHAUSTIVE_VERTICES}; für n={n} den Sampler verwenden")

    frontier: Dict[Tuple, Tuple[int, Tuple[Tuple[int, int], ...]]] = {(1, ()): (1, ())}
    results: Dict[Tuple, Tuple[Tuple[int, int], ...]] = {}

    while frontier:
        successors: Dict[Tuple, Tuple[int, Tuple[Tuple[int, int], ...]]] = {}
        for key in sorted(frontier):
            m, edges = frontier[key]
            adj = [set() for _ in range(m)]
            for u, v in edges:
                adj[u].add(v)
                adj[v].add(u)
            unsaturated = [v for v in range(m) if len(adj[v]) < 3]
            if not unsaturated:
                if m == n:
                    results[key] = edges
                continue
            # fester Knoten mit dem geringsten Restbedarf
            vertex = min(unsaturated, key=lambda v: (3 - len(adj[v]), v))
            need = 3 - len(adj[vertex])
            candidates = [u for u in unsaturated if u != vertex and u not in adj[vertex]]
            for fresh in range(need + 1):
                if m + fresh > n:
                    break
                for chosen in combinations(candidates, need - fresh):
                    new_m = m + fresh
                    new_edges = list(edges) + [(vertex, u) for u in chosen] + [(vertex, m + i) for i in range(fresh)]
                    if not _completable(n, new_m, new_edges):
                        continue
                    cert, _ = _canonical_form(new_m, new_edges)
                    successors.setdefault((new_m, cert), (new_m, cert))
        frontier = successors

    topologies = []
    for key in sorted(results):
        cert = results[key]
        edges = tuple((a, b, 1.0) for a, b in cert)
        topologies.append(GraphInstance(n, edges, topology_id_from_certificate(n, cert), None))
    return topologies


def _completable(n: int, m: int, edges: Sequence[Tuple[int, int]]) -> bool:
    """Schnelle Machbarkeitsprüfung eines Teilzustands"""
    degree = [0] * m
    adj = [set() for _ in range(m)]
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1
        adj[u].add(v)
        adj[v].add(u)
    deficit = [3 - d for d in degree]
    total = sum(deficit)
    fresh = n - m
    if total == 0:
        return fresh == 0
    if fresh > 0:
        return True
    open_vertices = [v for v in range(m) if deficit[v] > 0]
    for v in open_vertices:
        partners = sum(1 for u in open_vertices if u != v and u not in adj[v])
        if partners < deficit[v]:
            return False
    return total % 2 == 0


def sample_cubic_topology(n: int, seed: int) -> GraphInstance:
    """Zufälliger zusammenhängender kubischer Graph (Paarungsmodell mit Verwerfung)"""
    _check_size(n)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    while True:
        points = rng.permutation(3 * n)
        pairs = set()
        ok = True
        for k in range(0, 3 * n, 2):
            u, v = int(points[k]) // 3, int(points[k + 1]) // 3
            if u == v:
                ok = False
                break
            pair = (min(u, v), max(u, v))
            if pair in pairs:
                ok = False
                break
            pairs.add(pair)
        if not ok:
            continue
        graph = GraphInstance(n, tuple((u, v, 1.0) for u, v in sorted(pairs)))
        if not graph.is_connected():
            continue
        canonical, _ = canonical_label(graph)
        return canonical


def derive_seed(base_seed: int, *keys: int) -> int:
    """64-Bit-Seed aus Basis-Seed und Schlüsseln (SeedSequence)"""
    seq = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def assign_weights(topology: GraphInstance, seed: int, rng=None) -> GraphInstance:
    """Gewichte unabhängig und gleichverteilt auf (0, 2]

    Philox ist ein zählerbasierter 64-Bit-PRNG; der Seed wird in der Instanz
    gespeichert, damit Datensätze reproduzierbar bleiben.
    """
    if rng is None:
        rng = np.random.Generator(np.random.Philox(int(seed)))
    u = np.asarray(rng.random(topology.num_edges), dtype=np.float64)
    weights = 2.0 * (1.0 - u)  # [0,1) -> (0,2]
    edges = tuple((a, b, float(w)) for (a, b, _), w in zip(topology.edges, weights))
    return GraphInstance(topology.n, edges, topology.topology_id, int(seed))


def strip_weights(instance: GraphInstance) -> GraphInstance:
    """Gleiche Topologie, alle Gewichte = 1"""
    edges = tuple((u, v, 1.0) for u, v, _ in instance.edges)
    return GraphInstance(instance.n, edges, instance.topology_id, instance.seed)
