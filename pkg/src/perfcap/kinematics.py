"""Forward kinematics, landmark Jacobians, and per-node skinning transforms.

Frames: forward kinematics applies the root orientation (Euler angles
``alpha``) at the pelvis with zero translation, so every FK output lives in
the character frame (pelvis at the origin).  World positions are character
positions plus the global translation, which the alignment module solves in
closed form.  All Euler angles compose intrinsically in XYZ order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBlendError, InvalidInputError

QUAT_NORM_EPS = 1e-8


@dataclass
class PoseParams:
    """Per-frame articulation: joint angles, root orientation, translation."""

    theta: np.ndarray   # (D,)
    alpha: np.ndarray   # (3,)
    trans: np.ndarray   # (3,) world translation of the character frame

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).ravel()
        self.alpha = np.asarray(self.alpha, dtype=np.float64).ravel()
        self.trans = np.asarray(self.trans, dtype=np.float64).ravel()
        if self.alpha.shape != (3,) or self.trans.shape != (3,):
            raise InvalidInputError("alpha and trans must be 3-vectors")

    def copy(self):
        return PoseParams(self.theta.copy(), self.alpha.copy(), self.trans.copy())


@dataclass
class FKResult:
    """Joint transforms in the character frame plus per-DOF rotation data.

    dof_axes/dof_centers hold one row per column of the landmark Jacobian:
    theta DOFs first, then the three alpha DOFs.
    """

    joint_R: np.ndarray      # (J,3,3)
    joint_t: np.ndarray      # (J,3)
    dof_axes: np.ndarray     # (D+3,3) world rotation axis per DOF
    dof_centers: np.ndarray  # (D+3,3) rotation center per DOF
    dof_joints: np.ndarray   # (D+3,) owning joint per DOF


@dataclass
class NodeTransforms:
    """Rigid transform per graph node from blended joint motion."""

    R: np.ndarray  # (K,3,3)
    t: np.ndarray  # (K,3)


def _axis_rotation(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def euler_to_rotation(angles) -> np.ndarray:
    """Intrinsic XYZ: R = Rx(a) @ Ry(b) @ Rz(c)."""
    a, b, c = np.asarray(angles, dtype=np.float64).ravel()
    return _axis_rotation(0, a) @ _axis_rotation(1, b) @ _axis_rotation(2, c)


def euler_batch(angles) -> np.ndarray:
    """euler_to_rotation over rows of an (K,3) array, returns (K,3,3)."""
    A = np.asarray(angles, dtype=np.float64).reshape(-1, 3)
    ca, sa = np.cos(A[:, 0]), np.sin(A[:, 0])
    cb, sb = np.cos(A[:, 1]), np.sin(A[:, 1])
    cc, sc = np.cos(A[:, 2]), np.sin(A[:, 2])
    K = len(A)
    Rx = np.zeros((K, 3, 3))
    Rx[:, 0, 0] = 1
    Rx[:, 1, 1], Rx[:, 1, 2] = ca, -sa
    Rx[:, 2, 1], Rx[:, 2, 2] = sa, ca
    Ry = np.zeros((K, 3, 3))
    Ry[:, 1, 1] = 1
    Ry[:, 0, 0], Ry[:, 0, 2] = cb, sb
    Ry[:, 2, 0], Ry[:, 2, 2] = -sb, cb
    Rz = np.zeros((K, 3, 3))
    Rz[:, 2, 2] = 1
    Rz[:, 0, 0], Rz[:, 0, 1] = cc, -sc
    Rz[:, 1, 0], Rz[:, 1, 1] = sc, cc
    return Rx @ Ry @ Rz


def euler_batch_with_derivatives(angles):
    """Returns R (K,3,3) and dR (K,3,3,3) with dR[:,j] = dR/d angle_j."""
    A = np.asarray(angles, dtype=np.float64).reshape(-1, 3)
    K = len(A)
    mats = []   # per axis: (R_axis, dR_axis)
    for j in range(3):
        c, s = np.cos(A[:, j]), np.sin(A[:, j])
        R = np.zeros((K, 3, 3))
        dR = np.zeros((K, 3, 3))
        if j == 0:
            R[:, 0, 0] = 1
            R[:, 1, 1], R[:, 1, 2] = c, -s
            R[:, 2, 1], R[:, 2, 2] = s, c
            dR[:, 1, 1], dR[:, 1, 2] = -s, -c
            dR[:, 2, 1], dR[:, 2, 2] = c, -s
        elif j == 1:
            R[:, 1, 1] = 1
            R[:, 0, 0], R[:, 0, 2] = c, s
            R[:, 2, 0], R[:, 2, 2] = -s, c
            dR[:, 0, 0], dR[:, 0, 2] = -s, c
            dR[:, 2, 0], dR[:, 2, 2] = -c, -s
        else:
            R[:, 2, 2] = 1
            R[:, 0, 0], R[:, 0, 1] = c, -s
            R[:, 1, 0], R[:, 1, 1] = s, c
            dR[:, 0, 0], dR[:, 0, 1] = -s, -c
            dR[:, 1, 0], dR[:, 1, 1] = c, -s
        mats.append((R, dR))
    Rx, dRx = mats[0]
    Ry, dRy = mats[1]
    Rz, dRz = mats[2]
    R = Rx @ Ry @ Rz
    dR = np.stack([dRx @ Ry @ Rz, Rx @ dRy @ Rz, Rx @ Ry @ dRz], axis=1)
    return R, dR


def forward_kinematics(skeleton, theta, alpha) -> FKResult:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    alpha = np.asarray(alpha, dtype=np.float64).ravel()
    if len(theta) != skeleton.n_dofs:
        raise InvalidInputError(f"theta has {len(theta)} entries, skeleton has {skeleton.n_dofs} DOFs")
    J, D = skeleton.n_joints, skeleton.n_dofs
    joint_R = np.empty((J, 3, 3))
    joint_t = np.empty((J, 3))
    axes = np.empty((D + 3, 3))
    centers = np.empty((D + 3, 3))
    dof_joints = np.concatenate([skeleton.dof_joint, np.zeros(3, dtype=np.int64)])
    eye = np.eye(3)
    dofs_of = [[] for _ in range(J)]
    for d in range(D):
        dofs_of[skeleton.dof_joint[d]].append(d)
    for j in range(J):
        if j == 0:
            cur = np.eye(3)
            origin = np.zeros(3)
            # root orientation: three alpha DOFs in Jacobian columns D..D+2
            for k in range(3):
                axes[D + k] = cur @ eye[k]
                centers[D + k] = origin
                cur = cur @ _axis_rotation(k, alpha[k])
        else:
            p = skeleton.joint_parents[j]
            origin = joint_R[p] @ skeleton.joint_offsets[j] + joint_t[p]
            cur = joint_R[p].copy()
        for d in dofs_of[j]:
            k = skeleton.dof_axis[d]
            axes[d] = cur @ eye[k]
            centers[d] = origin
            cur = cur @ _axis_rotation(k, theta[d])
        joint_R[j] = cur
        joint_t[j] = origin
    return FKResult(joint_R=joint_R, joint_t=joint_t, dof_axes=axes,
                    dof_centers=centers, dof_joints=dof_joints)


def landmark_positions(skeleton, fk: FKResult) -> np.ndarray:
    """Character-frame landmark positions (M,3)."""
    lj = skeleton.landmark_joints
    return np.einsum("mij,mj->mi", fk.joint_R[lj], skeleton.landmark_offsets) + fk.joint_t[lj]


def rest_joint_origins(skeleton) -> np.ndarray:
    """Joint origins in the canonical (zero) pose, (J,3)."""
    J = skeleton.n_joints
    o = np.zeros((J, 3))
    for j in range(1, J):
        o[j] = o[skeleton.joint_parents[j]] + skeleton.joint_offsets[j]
    return o


def skinning_transforms(skeleton, fk: FKResult):
    """Per-joint canonical-to-posed rigid motions (R (J,3,3), t (J,3)).

    FK transforms map joint-local points to the character frame; skinning
    needs the motion of canonical-pose points instead, so the rest origin
    is folded in: X_posed = R_j (X_canon - o_rest,j) + t_j.
    """
    o = rest_joint_origins(skeleton)
    t = fk.joint_t - np.einsum("jab,jb->ja", fk.joint_R, o)
    return fk.joint_R, t


def _ancestor_mask(skeleton):
    """mask[j, l] = joint j lies on the root chain of joint l (incl. itself)."""
    J = skeleton.n_joints
    mask = np.zeros((J, J), dtype=bool)
    for l in range(J):
        j = l
        while j != -1:
            mask[j, l] = True
            j = skeleton.joint_parents[j]
    return mask


def fk_jacobian(skeleton, fk: FKResult, points: np.ndarray,
                point_joints: np.ndarray = None) -> np.ndarray:
    """d points / d [theta, alpha] as an (M, 3, D+3) array.

    points are character-frame positions rigidly attached to point_joints
    (defaults to the skeleton's landmark joints).  A DOF moves a point only
    if its owning joint is an ancestor of the point's joint, in which case
    the derivative is axis x (p - center).
    """
    if point_joints is None:
        point_joints = skeleton.landmark_joints
    anc = _ancestor_mask(skeleton)
    active = anc[fk.dof_joints][:, point_joints]          # (D+3, M)
    arms = points[None, :, :] - fk.dof_centers[:, None, :]  # (D+3, M, 3)
    jac = np.cross(fk.dof_axes[:, None, :], arms)
    jac *= active[:, :, None]
    return np.ascontiguousarray(jac.transpose(1, 2, 0))


# ---------------------------------------------------------------------------
# dual-quaternion node skinning
# ---------------------------------------------------------------------------

def rotation_to_quat(R):
    """Unit quaternion (w,x,y,z) from a rotation matrix, Shepperd's method."""
    m = R
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        return np.array([0.25 * s,
                         (m[2, 1] - m[1, 2]) / s,
                         (m[0, 2] - m[2, 0]) / s,
                         (m[1, 0] - m[0, 1]) / s])
    if m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        return np.array([(m[2, 1] - m[1, 2]) / s,
                         0.25 * s,
                         (m[0, 1] + m[1, 0]) / s,
                         (m[0, 2] + m[2, 0]) / s])
    if m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        return np.array([(m[0, 2] - m[2, 0]) / s,
                         (m[0, 1] + m[1, 0]) / s,
                         0.25 * s,
                         (m[1, 2] + m[2, 1]) / s])
    s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
    return np.array([(m[1, 0] - m[0, 1]) / s,
                     (m[0, 2] + m[2, 0]) / s,
                     (m[1, 2] + m[2, 1]) / s,
                     0.25 * s])


def quat_to_rotation(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def dqs_node_transforms(joint_R, joint_t, node_skin_weights) -> NodeTransforms:
    """Blend joint rigid motions into one rigid motion per graph node.

    Uses dual quaternions: hemisphere-align every joint quaternion against
    the node's highest-weight joint, blend linearly, renormalize.  A blend
    whose rotation part collapses (antipodal inputs cancelling) is an error
    naming the node rather than a silent garbage transform.
    """
    W = np.asarray(node_skin_weights, dtype=np.float64)
    J = len(joint_R)
    qr = np.empty((J, 4))
    for j in range(J):
        qr[j] = rotation_to_quat(joint_R[j])
    t_pure = np.zeros((J, 4))
    t_pure[:, 1:] = joint_t
    qd = 0.5 * quat_mul(t_pure, qr)
    K = W.shape[0]
    R_out = np.empty((K, 3, 3))
    t_out = np.empty((K, 3))
    for k in range(K):
        w = W[k]
        pivot = int(np.argmax(w))
        sign = np.where(qr @ qr[pivot] < 0.0, -1.0, 1.0)
        ws = w * sign
        br = ws @ qr
        bd = ws @ qd
        n = np.linalg.norm(br)
        if n < QUAT_NORM_EPS:
            raise DegenerateBlendError(f"node {k}: blended rotation collapsed to zero")
        br /= n
        bd /= n
        R_out[k] = quat_to_rotation(br)
        conj = br * np.array([1.0, -1.0, -1.0, -1.0])
        t_out[k] = 2.0 * quat_mul(bd, conj)[1:]
    return NodeTransforms(R=R_out, t=t_out)


def node_skinning(character, fk: FKResult) -> NodeTransforms:
    """Per-node canonical-to-posed rigid motions for a posed character."""
    R, t = skinning_transforms(character.skeleton, fk)
    return dqs_node_transforms(R, t, character.graph.node_skin_weights)
