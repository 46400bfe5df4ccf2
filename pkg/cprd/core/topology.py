import itertools
import logging

import networkx as nx
import numpy as np

from cprd.core.errors import (
    DegenerateGraph,
    EmptyGraph,
    InvalidParams,
    IoFailure,
    NotConnected,
    UnknownVertex,
)


class TopologyKind:
    LATTICE = "lattice"
    TREE = "tree"
    COMPLETE = "complete"
    EXPLICIT = "explicit"
    RANDOM = "random"

    ALL = [LATTICE, TREE, COMPLETE, EXPLICIT, RANDOM]

    @staticmethod
    def is_valid(kind):
        return kind in TopologyKind.ALL


class Boundary:
    ABSORBING = "absorbing"
    PERIODIC = "periodic"

    ALL = [ABSORBING, PERIODIC]


class Topology:
    """Finite connected graph with vertices indexed 0..n-1.

    Attributes
    ----------
    graph : nx.Graph
        relabelled to integer vertices
    kind : str from the enum TopologyKind
    edges : list of (int, int)
        undirected edges with u < v, sorted; the position is the edge index
    neighbours : list of list of int
    coordinates : np.ndarray or None
        (n, d) integer lattice coordinates
    origin : int or None
    boundary_vertices : frozenset
        sites on the faces of an absorbing box
    descriptor : dict
    """

    def __init__(self, graph, kind, coordinates=None, origin=None, boundary_vertices=None, descriptor=None):
        self.kind = kind
        self.descriptor = descriptor or {"kind": kind}
        self.graph = graph
        self.check_valid_graph()

        self.n = graph.number_of_nodes()
        self.edges = sorted((min(u, v), max(u, v)) for u, v in graph.edges())
        self.edge_index = {}
        for i, (u, v) in enumerate(self.edges):
            self.edge_index[(u, v)] = i
            self.edge_index[(v, u)] = i
        self.neighbours = [sorted(graph.neighbors(v)) for v in range(self.n)]
        self.incident_edges = [
            sorted(self.edge_index[(v, w)] for w in self.neighbours[v]) for v in range(self.n)
        ]
        self.max_degree = max(len(nb) for nb in self.neighbours)

        self.coordinates = coordinates
        self.origin = origin
        self.boundary_vertices = frozenset(boundary_vertices or ())
        self._index_of_coordinate = (
            {tuple(int(c) for c in row): i for i, row in enumerate(coordinates)}
            if coordinates is not None
            else {}
        )

    def __repr__(self):
        return f"Topology({self.kind}, n={self.n}, edges={len(self.edges)})"

    def check_valid_graph(self):
        if self.graph.number_of_nodes() == 0:
            raise EmptyGraph(f"{self.kind} topology has no vertices")
        if nx.number_of_selfloops(self.graph) > 0:
            raise InvalidParams("self-loops are not allowed")
        if not nx.is_connected(self.graph):
            raise NotConnected(
                f"{self.kind} topology has {nx.number_connected_components(self.graph)} components"
            )

    @property
    def vertices(self):
        return range(self.n)

    @property
    def dimension(self):
        return None if self.coordinates is None else self.coordinates.shape[1]

    @property
    def has_origin(self):
        return self.coordinates is not None and self.origin is not None

    def check_vertices(self, vertices):
        unknown = [v for v in vertices if not (isinstance(v, (int, np.integer)) and 0 <= v < self.n)]
        if unknown:
            raise UnknownVertex(f"vertices {unknown} are not in the {self.kind} topology")

    def vertex_at(self, coordinate):
        """Index of the lattice site with the given coordinate, None outside the box"""
        return self._index_of_coordinate.get(tuple(int(c) for c in coordinate))

    def norm(self, v):
        """l-infinity distance from the origin"""
        return int(np.max(np.abs(self.coordinates[v] - self.coordinates[self.origin])))

    def range_of(self, vertices):
        """Largest l-infinity distance from the origin over a vertex set, None if undefined"""
        vertices = list(vertices)
        if not vertices or not self.has_origin:
            return None
        offsets = self.coordinates[vertices] - self.coordinates[self.origin]
        return int(np.max(np.abs(offsets)))

    def touches_boundary(self, vertices):
        return not self.boundary_vertices.isdisjoint(vertices)

    def to_dict(self):
        return dict(self.descriptor)


def lattice_graph(d, radius, boundary=Boundary.ABSORBING):
    """Box {-radius..radius}^d with l1 nearest-neighbour edges.

    Returns
    -------
    (nx.Graph, np.ndarray)
        graph on coordinate tuples and the sorted coordinate array
    """
    side = 2 * radius + 1
    sites = sorted(itertools.product(range(-radius, radius + 1), repeat=d))
    graph = nx.Graph()
    graph.add_nodes_from(sites)
    for site in sites:
        for axis in range(d):
            step = list(site)
            step[axis] += 1
            if step[axis] > radius:
                if boundary != Boundary.PERIODIC:
                    continue
                step[axis] -= side
            graph.add_edge(site, tuple(step))
    return graph, np.array(sites, dtype=np.int64).reshape(len(sites), d)


def tree_graph(degree, depth):
    """Regular tree truncated at the given depth, root 0 with degree children"""
    graph = nx.Graph()
    graph.add_node(0)
    level = [0]
    for generation in range(depth):
        children_per_vertex = degree if generation == 0 else degree - 1
        next_level = []
        for parent in level:
            for _ in range(children_per_vertex):
                child = graph.number_of_nodes()
                graph.add_edge(parent, child)
                next_level.append(child)
        level = next_level
    return graph


def read_edge_list(path):
    """Edge list file, one "u v" pair of 0-based indices per line"""
    try:
        return nx.read_edgelist(path, nodetype=int, comments="#")
    except OSError as e:
        raise IoFailure(f"cannot read edge list {path}: {e}") from e


def random_graph(n, p, seed, max_attempts=1000):
    """Connected G(n, p) sample, redrawn with consecutive seeds until connected"""
    for attempt in range(max_attempts):
        graph = nx.gnp_random_graph(n, p, seed=seed + attempt)
        if n > 0 and nx.is_connected(graph):
            return graph
    raise NotConnected(f"no connected G({n}, {p}) sample in {max_attempts} attempts")


def _relabelled(graph):
    nodes = sorted(graph.nodes())
    mapping = {node: i for i, node in enumerate(nodes)}
    return nx.relabel_nodes(graph, mapping, copy=True), nodes


def build(descriptor):
    """Validated Topology from a descriptor such as {"kind": "lattice", "d": 2, "radius": 10}.

    Descriptor fields per kind:
     - lattice: d, radius, boundary (absorbing / periodic)
     - tree: degree, depth
     - complete: n
     - explicit: edges (list of pairs) and optional n, or path to an edge list file
     - random: n, p, seed
    """
    kind = descriptor.get("kind")
    if not TopologyKind.is_valid(kind):
        raise InvalidParams(f"Unknown topology kind {kind}")

    if kind == TopologyKind.LATTICE:
        d = int(descriptor.get("d", 1))
        radius = int(descriptor.get("radius", 0))
        boundary = descriptor.get("boundary", Boundary.ABSORBING)
        if d < 1 or radius < 0:
            raise InvalidParams(f"lattice needs d >= 1 and radius >= 0, got d={d}, radius={radius}")
        if boundary not in Boundary.ALL:
            raise InvalidParams(f"Unknown boundary {boundary}")
        if boundary == Boundary.PERIODIC and radius < 1:
            raise InvalidParams("a periodic box needs radius >= 1")
        graph, coordinates = lattice_graph(d, radius, boundary)
        graph, nodes = _relabelled(graph)
        origin = nodes.index(tuple([0] * d))
        faces = (
            [i for i, row in enumerate(coordinates) if np.max(np.abs(row)) == radius]
            if boundary == Boundary.ABSORBING
            else []
        )
        topology = Topology(
            graph,
            kind,
            coordinates=coordinates,
            origin=origin,
            boundary_vertices=faces,
            descriptor={"kind": kind, "d": d, "radius": radius, "boundary": boundary},
        )
    elif kind == TopologyKind.TREE:
        degree = int(descriptor.get("degree", 2))
        depth = int(descriptor.get("depth", 0))
        if degree < 1 or depth < 0:
            raise InvalidParams(f"tree needs degree >= 1 and depth >= 0, got {degree}, {depth}")
        topology = Topology(
            tree_graph(degree, depth),
            kind,
            descriptor={"kind": kind, "degree": degree, "depth": depth},
        )
    elif kind == TopologyKind.COMPLETE:
        n = int(descriptor.get("n", 0))
        topology = Topology(nx.complete_graph(n), kind, descriptor={"kind": kind, "n": n})
    elif kind == TopologyKind.RANDOM:
        n = int(descriptor.get("n", 0))
        p = float(descriptor.get("p", 0.5))
        seed = int(descriptor.get("seed", 0))
        if n == 0:
            raise EmptyGraph("random topology needs n >= 1")
        graph, _ = _relabelled(random_graph(n, p, seed))
        topology = Topology(graph, kind, descriptor={"kind": kind, "n": n, "p": p, "seed": seed})
    else:
        if "path" in descriptor:
            graph = read_edge_list(descriptor["path"])
        else:
            graph = nx.Graph()
            graph.add_edges_from(tuple(int(x) for x in e) for e in descriptor.get("edges", []))
        if "n" in descriptor:
            n = int(descriptor["n"])
            if any(v < 0 or v >= n for v in graph.nodes()):
                raise InvalidParams(f"explicit edges reference vertices outside 0..{n - 1}")
            graph.add_nodes_from(range(n))
        elif graph.number_of_nodes() and sorted(graph.nodes()) != list(range(graph.number_of_nodes())):
            raise InvalidParams("explicit vertices must be 0..n-1; pass n for isolated vertices")
        topology = Topology(graph, kind, descriptor=dict(descriptor))

    logging.debug(f"Built {topology}")
    return topology


class EdgeSequence:
    """Chained directed traversals (v_0, v_1), (v_1, v_2), ..."""

    def __init__(self, steps):
        self.steps = [(int(u), int(v)) for u, v in steps]
        for (_, head), (tail, _) in zip(self.steps, self.steps[1:]):
            if head != tail:
                raise InvalidParams(f"edge sequence breaks between {head} and {tail}")

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def __eq__(self, other):
        return isinstance(other, EdgeSequence) and self.steps == other.steps

    def __repr__(self):
        return f"EdgeSequence(l={len(self)})"

    @property
    def length(self):
        return len(self.steps)

    @property
    def walk(self):
        if not self.steps:
            return []
        return [self.steps[0][0]] + [v for _, v in self.steps]

    def edge_indices(self, topology):
        return [topology.edge_index[step] for step in self.steps]

    def lies_in(self, topology):
        return all(step in topology.edge_index for step in self.steps)

    def covers_all_pairs(self, vertices):
        """True when every ordered pair (x, y) is joined by a contiguous sub-walk.

        A sub-walk e_i..e_k starts at walk[i] and ends at walk[k + 1], so (x, y) is
        covered iff some occurrence of y comes after the first occurrence of x.
        """
        walk = self.walk
        first, last = {}, {}
        for position, v in enumerate(walk):
            first.setdefault(v, position)
            last[v] = position
        return all(
            x in first and y in last and last[y] > first[x]
            for x in vertices
            for y in vertices
        )


def spanning_path(topology):
    """Doubled depth-first closed walk from vertex 0.

    The single closed walk visits every vertex but misses pairs (x, x) for leaves
    x; running it twice covers every ordered pair, with l = 4(|V| - 1).
    """
    if topology.n < 2:
        raise DegenerateGraph("a spanning path needs at least two vertices")
    closed_walk = []
    for u, v, direction in nx.dfs_labeled_edges(topology.graph, source=0):
        if u == v:
            continue
        if direction == "forward":
            closed_walk.append((u, v))
        elif direction == "reverse":
            closed_walk.append((v, u))
    path = EdgeSequence(closed_walk + closed_walk)
    if not (path.lies_in(topology) and path.covers_all_pairs(topology.vertices)):
        raise DegenerateGraph(f"depth-first walk does not span {topology}")
    return path
