"""Template character: mesh, skeleton, embedded deformation graph, rigidity.

The character bundle on disk is a directory:

    mesh.obj            full-resolution template, ASCII OBJ
    decimated.obj       coarse mesh whose vertices/edges define the graph
    skeleton.json       joints, DOFs with limits, landmarks (see load_skeleton)
    rigidity.json       material classes -> per-vertex rigidity scalars s_i
    skin_weights.json   per graph node: {joint name: weight} rows
    graph.json          influences_per_vertex (weights are rebuilt on load)
"""

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import formats
from .errors import ConstructionError, InvalidInputError, LoadError

WEIGHT_SUM_TOL = 1e-9


@dataclass
class TriMesh:
    """Triangle mesh. vertices (N,3) float64 meters, triangles (T,3) int64."""

    vertices: np.ndarray
    triangles: np.ndarray
    _edges: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= n:
                raise InvalidInputError("triangle index out of range")
            for a, b in ((0, 1), (1, 2), (2, 0)):
                if np.any(self.triangles[:, a] == self.triangles[:, b]):
                    raise InvalidInputError("triangle repeats a vertex index")

    @property
    def edges(self):
        """Undirected edge list (E,2) int64, each pair once, sorted."""
        if self._edges is None:
            if self.triangles.size == 0:
                self._edges = np.zeros((0, 2), dtype=np.int64)
            else:
                t = self.triangles
                pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
                pairs = np.sort(pairs, axis=1)
                self._edges = np.unique(pairs, axis=0)
        return self._edges

    @property
    def n_vertices(self):
        return len(self.vertices)


@dataclass
class Skeleton:
    """Kinematic tree in topological order plus the DOF map and landmarks.

    joint_parents[j] is -1 for the root, else < j.  joint_offsets[j] is the
    rest offset in the parent frame (root offset must be zero).  Each theta
    entry d rotates joint dof_joint[d] about local axis dof_axis[d] (0/1/2);
    DOFs of one joint are contiguous and compose intrinsically in listed
    order.  Landmarks ride rigidly on joints: landmark m sits at
    joint transform applied to landmark_offsets[m].
    """

    joint_names: list
    joint_parents: np.ndarray          # (J,) int
    joint_offsets: np.ndarray          # (J,3) float
    dof_joint: np.ndarray              # (D,) int
    dof_axis: np.ndarray               # (D,) int in {0,1,2}
    theta_min: np.ndarray              # (D,)
    theta_max: np.ndarray              # (D,)
    landmark_names: list               # roles, e.g. "l_knee"
    landmark_joints: np.ndarray        # (M,) int
    landmark_offsets: np.ndarray       # (M,3)
    landmark_groups: list              # per-landmark class: torso/elbow_knee/other
    eval_landmarks: list               # role names of the pose-metric subset
    root_landmark: str = "pelvis"

    def __post_init__(self):
        self.joint_parents = np.asarray(self.joint_parents, dtype=np.int64)
        self.joint_offsets = np.asarray(self.joint_offsets, dtype=np.float64).reshape(-1, 3)
        self.dof_joint = np.asarray(self.dof_joint, dtype=np.int64)
        self.dof_axis = np.asarray(self.dof_axis, dtype=np.int64)
        self.theta_min = np.asarray(self.theta_min, dtype=np.float64)
        self.theta_max = np.asarray(self.theta_max, dtype=np.float64)
        self.landmark_joints = np.asarray(self.landmark_joints, dtype=np.int64)
        self.landmark_offsets = np.asarray(self.landmark_offsets, dtype=np.float64).reshape(-1, 3)
        self.validate()

    def validate(self):
        J = len(self.joint_names)
        if self.joint_parents[0] != -1:
            raise InvalidInputError("joint 0 must be the root (parent -1)")
        for j in range(1, J):
            if not 0 <= self.joint_parents[j] < j:
                raise InvalidInputError(f"joint {j} parent must precede it (topological order)")
        if np.any(self.joint_offsets[0] != 0.0):
            raise InvalidInputError("root joint offset must be zero")
        if np.any((self.dof_joint < 0) | (self.dof_joint >= J)):
            raise InvalidInputError("dof_joint index out of range")
        if np.any((self.dof_axis < 0) | (self.dof_axis > 2)):
            raise InvalidInputError("dof_axis must be 0, 1 or 2")
        # contiguity: all DOFs of a joint form one run
        seen = set()
        prev = None
        for j in self.dof_joint:
            if j != prev and j in seen:
                raise InvalidInputError(f"DOFs of joint {j} must be contiguous")
            seen.add(j)
            prev = j
        if np.any(self.theta_min > self.theta_max):
            raise InvalidInputError("theta_min > theta_max for some DOF")
        if len(self.landmark_joints) < 1:
            raise InvalidInputError("at least one landmark required")
        if np.any((self.landmark_joints < 0) | (self.landmark_joints >= J)):
            raise InvalidInputError("landmark joint index out of range")
        if len(self.landmark_groups) != len(self.landmark_joints):
            raise InvalidInputError("landmark_groups length mismatch")
        if self.root_landmark not in self.landmark_names:
            raise InvalidInputError(f"root landmark '{self.root_landmark}' not among landmarks")
        for role in self.eval_landmarks:
            if role not in self.landmark_names:
                raise InvalidInputError(f"eval landmark '{role}' not among landmarks")

    @property
    def n_joints(self):
        return len(self.joint_names)

    @property
    def n_dofs(self):
        return len(self.dof_joint)

    @property
    def n_landmarks(self):
        return len(self.landmark_joints)

    def landmark_index(self, role):
        return self.landmark_names.index(role)


@dataclass
class EmbeddedGraph:
    """Deformation graph: node positions, connectivity, vertex weights, rigidity."""

    node_positions: np.ndarray         # (K,3) float64
    node_vertex_ids: np.ndarray        # (K,) index of the full-mesh vertex under each node
    node_neighbors: list               # per node: sorted int array of neighbor nodes
    vertex_influences: np.ndarray = None   # (N,I) node indices, -1 padding
    vertex_node_weights: np.ndarray = None  # (N,I) float, rows sum to 1 over valid slots
    node_skin_weights: np.ndarray = None    # (K,J) convex rows
    node_rigidity: dict = None              # {(k,l): u} with k<l

    @property
    def n_nodes(self):
        return len(self.node_positions)

    def neighbor_edges(self):
        """Unique undirected graph edges (k<l) as an (E,2) int array."""
        pairs = set()
        for k, nbrs in enumerate(self.node_neighbors):
            for l in nbrs:
                pairs.add((min(k, int(l)), max(k, int(l))))
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(sorted(pairs), dtype=np.int64)

    def rigidity_of(self, k, l):
        return self.node_rigidity[(min(k, l), max(k, l))]

    def edge_arrays(self):
        """(edges (E,2), u (E,)) with per-edge rigidity, cached."""
        cached = getattr(self, "_edge_arrays", None)
        if cached is None:
            e = self.neighbor_edges()
            u = np.array([self.rigidity_of(int(k), int(l)) for k, l in e], dtype=np.float64)
            cached = (e, u)
            object.__setattr__(self, "_edge_arrays", cached)
        return cached

    def validate(self, n_vertices, n_joints):
        for k, nbrs in enumerate(self.node_neighbors):
            for l in nbrs:
                if k not in self.node_neighbors[int(l)]:
                    raise InvalidInputError(f"graph neighbors not symmetric at ({k},{l})")
        if self.vertex_node_weights is not None:
            w = self.vertex_node_weights
            valid = self.vertex_influences >= 0
            sums = np.where(valid, w, 0.0).sum(axis=1)
            if np.any(np.abs(sums - 1.0) > WEIGHT_SUM_TOL):
                bad = int(np.argmax(np.abs(sums - 1.0)))
                raise InvalidInputError(f"vertex {bad} node weights sum to {sums[bad]}, not 1")
            if np.any(np.where(valid, w, 0.0) < 0):
                raise InvalidInputError("negative vertex-node weight")
            if len(w) != n_vertices:
                raise InvalidInputError("vertex weight row count != vertex count")
        if self.node_skin_weights is not None:
            s = self.node_skin_weights
            if s.shape != (self.n_nodes, n_joints):
                raise InvalidInputError("node_skin_weights shape mismatch")
            if np.any(np.abs(s.sum(axis=1) - 1.0) > WEIGHT_SUM_TOL) or np.any(s < 0):
                raise InvalidInputError("node skin weights must be convex per node")


@dataclass
class RigidityProfile:
    """Per-vertex rigidity s_i in (0,1]; 1 = rigid, small = freely deforming."""

    values: np.ndarray                 # (N,)
    class_names: dict = None           # {"skin": 1.0, ...} for round-tripping
    vertex_class: np.ndarray = None    # (N,) int index into sorted class names

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any((self.values <= 0) | (self.values > 1)):
            raise InvalidInputError("rigidity values must lie in (0, 1]")


def build_embedded_graph(mesh: TriMesh, decimated: TriMesh) -> EmbeddedGraph:
    """Build graph topology from a decimated mesh: one node per decimated vertex.

    Each node snaps to the Euclidean-nearest full-mesh vertex; neighbor sets
    copy the decimated mesh's edges.  Weights/rigidity are filled in later.
    """
    if mesh.n_vertices == 0:
        raise InvalidInputError("empty template mesh")
    if decimated.n_vertices < 4:
        raise InvalidInputError("decimated mesh needs at least 4 vertices")
    # nearest full-mesh vertex per node, chunked to bound memory
    ids = np.empty(decimated.n_vertices, dtype=np.int64)
    chunk = max(1, 2_000_000 // max(mesh.n_vertices, 1))
    for s in range(0, decimated.n_vertices, chunk):
        d = decimated.vertices[s : s + chunk, None, :] - mesh.vertices[None, :, :]
        ids[s : s + chunk] = np.argmin(np.einsum("ijk,ijk->ij", d, d), axis=1)
    positions = mesh.vertices[ids].copy()
    neighbors = [[] for _ in range(decimated.n_vertices)]
    for a, b in decimated.edges:
        neighbors[a].append(int(b))
        neighbors[b].append(int(a))
    neighbors = [np.asarray(sorted(set(n)), dtype=np.int64) for n in neighbors]
    return EmbeddedGraph(node_positions=positions, node_vertex_ids=ids, node_neighbors=neighbors)


def _edge_graph(mesh: TriMesh):
    e = mesh.edges
    n = mesh.n_vertices
    if len(e) == 0:
        return csr_matrix((n, n))
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return csr_matrix((np.concatenate([lengths, lengths]), (rows, cols)), shape=(n, n))


def geodesic_distances(mesh: TriMesh, source: int) -> np.ndarray:
    """Shortest-path distance over mesh edges from one source vertex.

    Unreachable vertices get +inf.
    """
    if not 0 <= source < mesh.n_vertices:
        raise InvalidInputError(f"source vertex {source} out of range")
    return dijkstra(_edge_graph(mesh), indices=source, directed=False)


def compute_vertex_node_weights(mesh: TriMesh, graph: EmbeddedGraph,
                                influences_per_vertex: int = 4) -> EmbeddedGraph:
    """Fill vertex influence sets and weights from geodesic node distances.

    Influences are the geodesically nearest nodes; raw weights fall off as
    (1 - d/d_max)^2 with d_max = 1.05 * the largest selected distance, then
    normalize to sum 1.  Fewer reachable nodes than requested shrinks the
    set; zero reachable nodes is a construction error naming the vertex.
    """
    if influences_per_vertex < 1:
        raise InvalidInputError("influences_per_vertex must be >= 1")
    dist = dijkstra(_edge_graph(mesh), indices=graph.node_vertex_ids, directed=False)
    dist = np.atleast_2d(dist)  # (K, N)
    K, N = dist.shape
    I = min(influences_per_vertex, K)
    influences = np.full((N, I), -1, dtype=np.int64)
    weights = np.zeros((N, I), dtype=np.float64)
    order = np.argsort(dist, axis=0, kind="stable")  # ties broken by node index
    for i in range(N):
        sel = order[:I, i]
        d = dist[sel, i]
        finite = np.isfinite(d)
        if not finite.any():
            raise ConstructionError(f"vertex {i} unreachable from every graph node")
        sel, d = sel[finite], d[finite]
        dmax = 1.05 * d.max()
        raw = (1.0 - d / dmax) ** 2 if dmax > 0 else np.ones_like(d)
        influences[i, : len(sel)] = sel
        weights[i, : len(sel)] = raw / raw.sum()
    graph.vertex_influences = influences
    graph.vertex_node_weights = weights
    return graph


def derive_node_rigidity(mesh: TriMesh, graph: EmbeddedGraph,
                         rigidity: RigidityProfile) -> dict:
    """Per-edge rigidity u_{k,l}: mean s_i over vertices influenced by k or l."""
    if graph.vertex_influences is None:
        raise InvalidInputError("vertex weights must be computed first")
    if len(rigidity.values) != mesh.n_vertices:
        raise InvalidInputError("rigidity profile length != vertex count")
    node_verts = [set() for _ in range(graph.n_nodes)]
    for i in range(mesh.n_vertices):
        for k in graph.vertex_influences[i]:
            if k >= 0:
                node_verts[int(k)].add(i)
    u = {}
    for k, l in graph.neighbor_edges():
        verts = node_verts[int(k)] | node_verts[int(l)]
        if not verts:
            warnings.warn(f"graph edge ({k},{l}) has no associated vertices; u=1.0")
            u[(int(k), int(l))] = 1.0
        else:
            u[(int(k), int(l))] = float(np.mean(rigidity.values[sorted(verts)]))
    graph.node_rigidity = u
    return u


@dataclass
class TemplateCharacter:
    """The static asset the whole pipeline operates on. Immutable once built."""

    mesh: TriMesh
    decimated: TriMesh
    skeleton: Skeleton
    graph: EmbeddedGraph
    rigidity: RigidityProfile
    influences_per_vertex: int = 4
    landmark_rest: np.ndarray = None   # (M,3) canonical landmark positions
    landmark_nodes: np.ndarray = None  # (M,) closest graph node per landmark

    def __post_init__(self):
        if self.landmark_rest is None:
            self.landmark_rest = rest_landmarks(self.skeleton)
        if self.landmark_nodes is None:
            # closest node by Euclidean distance in canonical pose
            d = self.landmark_rest[:, None, :] - self.graph.node_positions[None, :, :]
            self.landmark_nodes = np.argmin(np.einsum("mki,mki->mk", d, d), axis=1)
        self.validate()

    def validate(self):
        self.graph.validate(self.mesh.n_vertices, self.skeleton.n_joints)
        if self.graph.node_rigidity is not None:
            for u in self.graph.node_rigidity.values():
                if not 0 < u <= 1:
                    raise InvalidInputError("node rigidity outside (0,1]")
        if len(self.rigidity.values) != self.mesh.n_vertices:
            raise InvalidInputError("rigidity length != vertex count")


def rest_landmarks(skeleton: Skeleton) -> np.ndarray:
    """Canonical (zero-pose) landmark positions: chained rest offsets + local offset."""
    J = skeleton.n_joints
    origins = np.zeros((J, 3))
    for j in range(1, J):
        origins[j] = origins[skeleton.joint_parents[j]] + skeleton.joint_offsets[j]
    return origins[skeleton.landmark_joints] + skeleton.landmark_offsets


def build_character(mesh, decimated, skeleton, rigidity, node_skin_weights,
                    influences_per_vertex=4) -> TemplateCharacter:
    """Assemble and validate a TemplateCharacter from its parts."""
    graph = build_embedded_graph(mesh, decimated)
    compute_vertex_node_weights(mesh, graph, influences_per_vertex)
    derive_node_rigidity(mesh, graph, rigidity)
    skin = np.asarray(node_skin_weights, dtype=np.float64)
    if skin.shape != (graph.n_nodes, skeleton.n_joints):
        raise InvalidInputError("node_skin_weights must be (K, J)")
    graph.node_skin_weights = skin
    return TemplateCharacter(mesh=mesh, decimated=decimated, skeleton=skeleton,
                             graph=graph, rigidity=rigidity,
                             influences_per_vertex=influences_per_vertex)


# ---------------------------------------------------------------------------
# bundle I/O
# ---------------------------------------------------------------------------

def _skeleton_to_dict(s: Skeleton):
    joints = []
    for j in range(s.n_joints):
        joints.append({
            "name": s.joint_names[j],
            "parent": int(s.joint_parents[j]),
            "offset": [float(x) for x in s.joint_offsets[j]],
        })
    dofs = [{"joint": int(s.dof_joint[d]), "axis": "xyz"[s.dof_axis[d]],
             "min": float(s.theta_min[d]), "max": float(s.theta_max[d])}
            for d in range(s.n_dofs)]
    landmarks = [{"name": s.landmark_names[m], "joint": int(s.landmark_joints[m]),
                  "offset": [float(x) for x in s.landmark_offsets[m]],
                  "group": s.landmark_groups[m]}
                 for m in range(s.n_landmarks)]
    return {"joints": joints, "dofs": dofs, "landmarks": landmarks,
            "eval_landmarks": list(s.eval_landmarks), "root_landmark": s.root_landmark}


def _skeleton_from_dict(d, where="skeleton.json"):
    formats.require_fields(d, ["joints", "dofs", "landmarks", "eval_landmarks"], where)
    names, parents, offsets = [], [], []
    for rec in d["joints"]:
        formats.require_fields(rec, ["name", "parent", "offset"], where + " joints")
        names.append(rec["name"])
        parents.append(rec["parent"])
        offsets.append(rec["offset"])
    axis_map = {"x": 0, "y": 1, "z": 2}
    dj, da, tmin, tmax = [], [], [], []
    for rec in d["dofs"]:
        formats.require_fields(rec, ["joint", "axis", "min", "max"], where + " dofs")
        if rec["axis"] not in axis_map:
            raise LoadError(f"{where}: bad axis '{rec['axis']}'")
        dj.append(rec["joint"])
        da.append(axis_map[rec["axis"]])
        tmin.append(rec["min"])
        tmax.append(rec["max"])
    lm_names, lm_joints, lm_offsets, lm_groups = [], [], [], []
    for rec in d["landmarks"]:
        formats.require_fields(rec, ["name", "joint", "offset"], where + " landmarks")
        lm_names.append(rec["name"])
        lm_joints.append(rec["joint"])
        lm_offsets.append(rec["offset"])
        lm_groups.append(rec.get("group", "other"))
    try:
        return Skeleton(joint_names=names, joint_parents=parents, joint_offsets=offsets,
                        dof_joint=dj, dof_axis=da, theta_min=tmin, theta_max=tmax,
                        landmark_names=lm_names, landmark_joints=lm_joints,
                        landmark_offsets=lm_offsets, landmark_groups=lm_groups,
                        eval_landmarks=d["eval_landmarks"],
                        root_landmark=d.get("root_landmark", "pelvis"))
    except InvalidInputError as exc:
        raise LoadError(f"{where}: {exc}") from exc


def save_character(character: TemplateCharacter, path: str):
    formats.ensure_dir(path)
    formats.write_obj(os.path.join(path, "mesh.obj"),
                      character.mesh.vertices, character.mesh.triangles)
    formats.write_obj(os.path.join(path, "decimated.obj"),
                      character.decimated.vertices, character.decimated.triangles)
    formats.write_json(os.path.join(path, "skeleton.json"),
                       _skeleton_to_dict(character.skeleton))
    rig = character.rigidity
    if rig.class_names is not None and rig.vertex_class is not None:
        classes = rig.class_names
        labels = [int(i) for i in rig.vertex_class]
    else:
        classes = None
        labels = None
    formats.write_json(os.path.join(path, "rigidity.json"), {
        "classes": classes,
        "class_order": sorted(classes) if classes else None,
        "vertex_class": labels,
        "values": [float(v) for v in rig.values],
    })
    formats.write_json(os.path.join(path, "skin_weights.json"), {
        "joints": character.skeleton.joint_names,
        "rows": [{character.skeleton.joint_names[j]: float(w)
                  for j, w in enumerate(row) if w != 0.0}
                 for row in character.graph.node_skin_weights],
    })
    formats.write_json(os.path.join(path, "graph.json"),
                       {"influences_per_vertex": character.influences_per_vertex})


def load_character(path: str) -> TemplateCharacter:
    """Load a character bundle and rebuild graph weights deterministically."""
    try:
        mesh = TriMesh(*formats.read_obj(os.path.join(path, "mesh.obj")))
        decimated = TriMesh(*formats.read_obj(os.path.join(path, "decimated.obj")))
    except InvalidInputError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    skeleton = _skeleton_from_dict(formats.read_json(os.path.join(path, "skeleton.json")))
    rd = formats.read_json(os.path.join(path, "rigidity.json"))
    formats.require_fields(rd, ["values"], "rigidity.json")
    try:
        rigidity = RigidityProfile(values=np.asarray(rd["values"], dtype=np.float64))
    except InvalidInputError as exc:
        raise LoadError(f"rigidity.json: {exc}") from exc
    if rd.get("classes") is not None:
        rigidity.class_names = rd["classes"]
        rigidity.vertex_class = np.asarray(rd["vertex_class"], dtype=np.int64)
    sw = formats.read_json(os.path.join(path, "skin_weights.json"))
    formats.require_fields(sw, ["joints", "rows"], "skin_weights.json")
    gmeta = formats.read_json(os.path.join(path, "graph.json"))
    formats.require_fields(gmeta, ["influences_per_vertex"], "graph.json")
    jname_to_idx = {n: i for i, n in enumerate(skeleton.joint_names)}
    skin = np.zeros((len(sw["rows"]), skeleton.n_joints))
    for k, row in enumerate(sw["rows"]):
        for name, w in row.items():
            if name not in jname_to_idx:
                raise LoadError(f"skin_weights.json: unknown joint '{name}' in row {k}")
            skin[k, jname_to_idx[name]] = w
    try:
        return build_character(mesh, decimated, skeleton, rigidity, skin,
                               influences_per_vertex=int(gmeta["influences_per_vertex"]))
    except (InvalidInputError, ConstructionError) as exc:
        raise LoadError(f"{path}: {exc}") from exc
