"""Non-rigid surface deformation on the embedded graph, with skinning.

A frame's surface is produced in three steps: (1) the embedded deformation
warps the canonical template by per-node rotations A_k and translations T_k,
(2) the blended node skinning transforms (from the solved pose) carry the
warped surface into the character frame, (3) the global translation places
it in the world.  Pose and translation stay frozen while A,T are optimized,
so the per-vertex blended skinning matrix S_i is a constant of the stage.

Landmarks follow the deformation through their single nearest node, which
keeps their Jacobian a pair of dense 3x3 blocks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .kinematics import euler_batch, euler_batch_with_derivatives


@dataclass
class GraphDeformation:
    """Per-node warp parameters: Euler rotations A (K,3), translations T (K,3)."""

    A: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64).reshape(-1, 3)
        self.T = np.asarray(self.T, dtype=np.float64).reshape(-1, 3)
        if self.A.shape != self.T.shape:
            raise InvalidInputError("A and T must both be (K,3)")

    @classmethod
    def identity(cls, n_nodes):
        return cls(np.zeros((n_nodes, 3)), np.zeros((n_nodes, 3)))

    def copy(self):
        return GraphDeformation(self.A.copy(), self.T.copy())

    @property
    def n_nodes(self):
        return len(self.A)


def _gather(graph):
    infl = graph.vertex_influences
    w = np.where(infl >= 0, graph.vertex_node_weights, 0.0)
    return np.maximum(infl, 0), w   # clamped indices are weight-0 anyway


def embedded_deform(character, deformation: GraphDeformation) -> np.ndarray:
    """Warp canonical vertices by the graph: Y_i = sum_k w_ik [R(A_k)(v_i - G_k) + G_k + T_k]."""
    G = character.graph.node_positions
    if deformation.n_nodes != len(G):
        raise InvalidInputError("deformation node count != graph node count")
    infl, w = _gather(character.graph)
    R = euler_batch(deformation.A)                       # (K,3,3)
    V = character.mesh.vertices
    arms = V[:, None, :] - G[infl]                       # (N,I,3)
    rotated = np.einsum("niab,nib->nia", R[infl], arms)
    pieces = rotated + G[infl] + deformation.T[infl]
    return np.einsum("ni,nia->na", w, pieces)


def skin_points(points, infl, w, node_transforms) -> np.ndarray:
    """Blend node rigid motions linearly: sum_k w_k (R_k p + t_k) per point."""
    R = node_transforms.R[infl]                          # (N,I,3,3)
    t = node_transforms.t[infl]
    moved = np.einsum("niab,nb->nia", R, points) + t
    return np.einsum("ni,nia->na", w, moved)


def skinning_matrices(graph, node_transforms) -> np.ndarray:
    """S_i = sum_k w_ik R_k, the per-vertex blended rotation block (N,3,3)."""
    infl, w = _gather(graph)
    return np.einsum("ni,niab->nab", w, node_transforms.R[infl])


def deform_vertices(character, deformation, node_transforms, trans=None) -> np.ndarray:
    """Full chain: embedded warp, skinning, world translation. (N,3)."""
    Y = embedded_deform(character, deformation)
    infl, w = _gather(character.graph)
    V = skin_points(Y, infl, w, node_transforms)
    if trans is not None:
        V = V + np.asarray(trans, dtype=np.float64)
    return V


def deform_landmarks(character, deformation, node_transforms, trans=None) -> np.ndarray:
    """Landmarks carried by their nearest node through warp + skinning. (M,3)."""
    k = character.landmark_nodes
    G = character.graph.node_positions[k]
    R = euler_batch(deformation.A[k])
    arms = character.landmark_rest - G
    Y = np.einsum("mab,mb->ma", R, arms) + G + deformation.T[k]
    Rsk = node_transforms.R[k]
    out = np.einsum("mab,mb->ma", Rsk, Y) + node_transforms.t[k]
    if trans is not None:
        out = out + np.asarray(trans, dtype=np.float64)
    return out


def backprop_vertices(character, deformation, node_transforms, grad_vertices):
    """Pull dL/dV (N,3 world) back to (dL/dA (K,3), dL/dT (K,3)).

    dV_i/dT_l = w_il S_i and dV_i/dA_lj = w_il S_i dR_l/da_j (v_i - G_l);
    the world translation is additive so world and character gradients match.
    """
    graph = character.graph
    infl, w = _gather(graph)
    K = graph.n_nodes
    gV = np.asarray(grad_vertices, dtype=np.float64)
    S = skinning_matrices(graph, node_transforms)
    # P_i = S_i^T gV_i: the gradient seen by the pre-skinning warp
    P = np.einsum("nba,nb->na", S, gV)
    _, dR = euler_batch_with_derivatives(deformation.A)  # (K,3,3,3)
    G = graph.node_positions
    Vc = character.mesh.vertices
    gA = np.zeros((K, 3))
    gT = np.zeros((K, 3))
    for s in range(infl.shape[1]):
        l = infl[:, s]
        ws = w[:, s]
        np.add.at(gT, l, ws[:, None] * P)
        arms = Vc - G[l]                                  # (N,3)
        rot = np.einsum("njab,nb->nja", dR[l], arms)      # (N,3,3): j = angle
        contrib = ws[:, None] * np.einsum("nja,na->nj", rot, P)
        np.add.at(gA, l, contrib)
    return gA, gT


def backprop_landmarks(character, deformation, node_transforms, grad_landmarks):
    """Pull dL/dM (M,3 world) back to (dL/dA, dL/dT) through the nearest node."""
    k = character.landmark_nodes
    K = character.graph.n_nodes
    gM = np.asarray(grad_landmarks, dtype=np.float64)
    Rsk = node_transforms.R[k]
    P = np.einsum("mba,mb->ma", Rsk, gM)                  # (M,3)
    _, dR = euler_batch_with_derivatives(deformation.A[k])
    G = character.graph.node_positions[k]
    arms = character.landmark_rest - G
    rot = np.einsum("mjab,mb->mja", dR, arms)
    gA = np.zeros((K, 3))
    gT = np.zeros((K, 3))
    np.add.at(gT, k, P)
    np.add.at(gA, k, np.einsum("mja,ma->mj", rot, P))
    return gA, gT
