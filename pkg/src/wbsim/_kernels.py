"""Compiled rigid-body kernels.

Everything is expressed in world coordinates about the world origin, with
spatial vectors ordered ``[angular; linear]``.  Public (mixed, linear-first)
conventions are produced only at the frame level in :mod:`wbsim.kindyn`.

Tree arrays follow :class:`wbsim.model.KinematicTree`: body 0 is the base,
body ``i > 0`` carries degree of freedom ``i - 1``.
"""
import numpy as np
from numba import njit

_NB = dict(cache=True, nogil=True)


@njit(**_NB)
def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


@njit(**_NB)
def _skew(v):
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@njit(**_NB)
def _mm3(A, B):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]
    return out


@njit(**_NB)
def _mv(A, v):
    n, m = A.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += A[i, j] * v[j]
        out[i] = acc
    return out


@njit(**_NB)
def _dot(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


@njit(**_NB)
def _rodrigues(axis, angle):
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    x, y, z = axis[0], axis[1], axis[2]
    R = np.empty((3, 3))
    R[0, 0] = c + t * x * x
    R[0, 1] = t * x * y - s * z
    R[0, 2] = t * x * z + s * y
    R[1, 0] = t * x * y + s * z
    R[1, 1] = c + t * y * y
    R[1, 2] = t * y * z - s * x
    R[2, 0] = t * x * z - s * y
    R[2, 1] = t * y * z + s * x
    R[2, 2] = c + t * z * z
    return R


@njit(**_NB)
def _crm(v, m):
    """Spatial motion cross product v x m."""
    w = v[:3]
    vo = v[3:]
    out = np.empty(6)
    out[:3] = _cross(w, m[:3])
    out[3:] = _cross(w, m[3:]) + _cross(vo, m[:3])
    return out


@njit(**_NB)
def _crf(v, f):
    """Spatial force cross product v x* f."""
    w = v[:3]
    vo = v[3:]
    out = np.empty(6)
    out[:3] = _cross(w, f[:3]) + _cross(vo, f[3:])
    out[3:] = _cross(w, f[3:])
    return out


@njit(**_NB)
def body_poses(parent, jtype, axis, tree_R, tree_p, base_R, base_p, q):
    nb = parent.shape[0]
    R = np.empty((nb, 3, 3))
    p = np.empty((nb, 3))
    R[0] = base_R
    p[0] = base_p
    for i in range(1, nb):
        k = parent[i]
        Rj = _mm3(R[k], tree_R[i])
        pj = p[k] + _mv(R[k], tree_p[i])
        if jtype[i] == 0:
            R[i] = _mm3(Rj, _rodrigues(axis[i], q[i - 1]))
            p[i] = pj
        else:
            R[i] = Rj
            p[i] = pj + _mv(Rj, axis[i]) * q[i - 1]
    return R, p


@njit(**_NB)
def motion_subspaces(jtype, axis, R, p):
    nb = jtype.shape[0]
    S = np.zeros((nb, 6))
    for i in range(1, nb):
        a = _mv(R[i], axis[i])
        if jtype[i] == 0:
            S[i, :3] = a
            S[i, 3:] = _cross(p[i], a)
        else:
            S[i, 3:] = a
    return S


@njit(**_NB)
def spatial_inertias(mass, com, inertia, R, p):
    nb = mass.shape[0]
    out = np.zeros((nb, 6, 6))
    for i in range(nb):
        m = mass[i]
        c = p[i] + _mv(R[i], com[i])
        Ic = _mm3(_mm3(R[i], inertia[i]), R[i].T)
        cc = _dot(c, c)
        for a in range(3):
            for b in range(3):
                # m * skew(c) skew(c)^T = m * (|c|^2 I - c c^T)
                out[i, a, b] = Ic[a, b] + m * ((cc if a == b else 0.0) - c[a] * c[b])
        C = _skew(c)
        for a in range(3):
            for b in range(3):
                out[i, a, 3 + b] = m * C[a, b]
                out[i, 3 + a, b] = m * C[b, a]
            out[i, 3 + a, 3 + a] = m
    return out


@njit(**_NB)
def base_subspace(base_p):
    """Maps the mixed base velocity [v; w] to the base spatial velocity."""
    Sb = np.zeros((6, 6))
    for k in range(3):
        Sb[k, 3 + k] = 1.0
        Sb[3 + k, k] = 1.0
    Sb[3:, 3:] = _skew(base_p)
    return Sb


@njit(**_NB)
def _base_transpose(base_p, F):
    """Sb^T F for a spatial force F: the mixed base wrench [f; n - p x f]."""
    out = np.empty(6)
    out[:3] = F[3:]
    out[3:] = F[:3] - _cross(base_p, F[3:])
    return out


@njit(**_NB)
def velocities(parent, S, floating, base_p, nu):
    nb = parent.shape[0]
    off = 6 if floating else 0
    V = np.zeros((nb, 6))
    if floating:
        V[0, :3] = nu[3:6]
        V[0, 3:] = nu[:3] + _cross(base_p, nu[3:6])
    for i in range(1, nb):
        qd = nu[off + i - 1]
        k = parent[i]
        for a in range(6):
            V[i, a] = V[k, a] + S[i, a] * qd
    return V


@njit(**_NB)
def accelerations(parent, S, V, floating, base_p, nu, nudot, gravity):
    """Spatial accelerations; the gravity field enters as a base offset."""
    nb = parent.shape[0]
    off = 6 if floating else 0
    A = np.zeros((nb, 6))
    if floating:
        A[0, :3] = nudot[3:6]
        A[0, 3:] = nudot[:3] + _cross(base_p, nudot[3:6]) + _cross(nu[:3], nu[3:6])
    A[0, 3:] -= gravity
    for i in range(1, nb):
        qd = nu[off + i - 1]
        qdd = nudot[off + i - 1]
        c = _crm(V[i], S[i])
        k = parent[i]
        for a in range(6):
            A[i, a] = A[k, a] + S[i, a] * qdd + c[a] * qd
    return A


@njit(**_NB)
def rnea(parent, S, I6, V, A, floating, base_p, fext):
    nb = parent.shape[0]
    off = 6 if floating else 0
    n = nb - 1
    F = np.empty((nb, 6))
    for i in range(nb):
        F[i] = _mv(I6[i], A[i]) + _crf(V[i], _mv(I6[i], V[i])) - fext[i]
    tau = np.zeros(off + n)
    for i in range(nb - 1, 0, -1):
        tau[off + i - 1] = _dot(S[i], F[i])
        F[parent[i]] += F[i]
    if floating:
        tau[:6] = _base_transpose(base_p, F[0])
    return tau


@njit(**_NB)
def crba(parent, S, I6, floating, base_p):
    nb = parent.shape[0]
    off = 6 if floating else 0
    nv = off + nb - 1
    Ic = I6.copy()
    for i in range(nb - 1, 0, -1):
        Ic[parent[i]] += Ic[i]
    M = np.zeros((nv, nv))
    for i in range(1, nb):
        F = _mv(Ic[i], S[i])
        a = off + i - 1
        M[a, a] = _dot(S[i], F)
        j = parent[i]
        while j > 0:
            b = off + j - 1
            M[a, b] = _dot(S[j], F)
            M[b, a] = M[a, b]
            j = parent[j]
        if floating:
            col = _base_transpose(base_p, F)
            for k in range(6):
                M[k, a] = col[k]
                M[a, k] = col[k]
    if floating:
        Sb = base_subspace(base_p)
        for k in range(6):
            col = _base_transpose(base_p, _mv(Ic[0], Sb[:, k]))
            for r in range(6):
                M[r, k] = col[r]
    return M


@njit(**_NB)
def _to_frame(pf, m):
    """Spatial motion m -> mixed [linear; angular] twist of the point pf."""
    out = np.empty(6)
    out[:3] = m[3:] + _cross(m[:3], pf)
    out[3:] = m[:3]
    return out


@njit(**_NB)
def _frame_map(pf):
    """Matrix form of :func:`_to_frame`."""
    X = np.zeros((6, 6))
    X[:3, :3] = -_skew(pf)
    for k in range(3):
        X[k, 3 + k] = 1.0
        X[3 + k, k] = 1.0
    return X


@njit(**_NB)
def frame_pose(R, p, frame_body, frame_R, frame_p, f):
    b = frame_body[f]
    return _mm3(R[b], frame_R[f]), p[b] + _mv(R[b], frame_p[f])


@njit(**_NB)
def frame_jacobian(parent, S, floating, base_p, body, pf):
    off = 6 if floating else 0
    nv = off + parent.shape[0] - 1
    J = np.zeros((6, nv))
    j = body
    while j > 0:
        J[:, off + j - 1] = _to_frame(pf, S[j])
        j = parent[j]
    if floating:
        # base columns: linear velocity translates, angular velocity rotates about p_b
        r = pf - base_p
        for k in range(3):
            J[k, k] = 1.0
            J[3 + k, 3 + k] = 1.0
        J[:3, 3:6] = -_skew(r)
    return J


@njit(**_NB)
def frame_bias(V, A0, body, pf):
    """Mixed frame acceleration from velocity-only spatial accelerations A0."""
    v = V[body]
    w = v[:3]
    vf = v[3:] + _cross(w, pf)
    out = _to_frame(pf, A0[body])
    out[:3] += _cross(w, vf)
    return out


@njit(**_NB)
def evaluate(parent, jtype, axis, tree_R, tree_p, mass, com, inertia,
             frame_body, frame_R, frame_p, floating, base_R, base_p, q, nu,
             gravity, frames):
    """One-shot evaluation used by the stepper.

    Returns body poses, M, h, and for each requested frame its pose,
    mixed Jacobian and bias acceleration.
    """
    R, p = body_poses(parent, jtype, axis, tree_R, tree_p, base_R, base_p, q)
    S = motion_subspaces(jtype, axis, R, p)
    I6 = spatial_inertias(mass, com, inertia, R, p)
    V = velocities(parent, S, floating, base_p, nu)
    zero = np.zeros(nu.shape[0])
    Ag = accelerations(parent, S, V, floating, base_p, nu, zero, gravity)
    nb = parent.shape[0]
    h = rnea(parent, S, I6, V, Ag, floating, base_p, np.zeros((nb, 6)))
    M = crba(parent, S, I6, floating, base_p)
    A0 = accelerations(parent, S, V, floating, base_p, nu, zero, np.zeros(3))
    nf = frames.shape[0]
    nv = nu.shape[0]
    FR = np.empty((nf, 3, 3))
    Fp = np.empty((nf, 3))
    J = np.empty((nf, 6, nv))
    bias = np.empty((nf, 6))
    for k in range(nf):
        f = frames[k]
        Rf, pf = frame_pose(R, p, frame_body, frame_R, frame_p, f)
        FR[k] = Rf
        Fp[k] = pf
        b = frame_body[f]
        J[k] = frame_jacobian(parent, S, floating, base_p, b, pf)
        bias[k] = frame_bias(V, A0, b, pf)
    return R, p, M, h, FR, Fp, J, bias


@njit(**_NB)
def inverse_dynamics(parent, jtype, axis, tree_R, tree_p, mass, com, inertia,
                     floating, base_R, base_p, q, nu, nudot, gravity, fext):
    R, p = body_poses(parent, jtype, axis, tree_R, tree_p, base_R, base_p, q)
    S = motion_subspaces(jtype, axis, R, p)
    I6 = spatial_inertias(mass, com, inertia, R, p)
    V = velocities(parent, S, floating, base_p, nu)
    A = accelerations(parent, S, V, floating, base_p, nu, nudot, gravity)
    return rnea(parent, S, I6, V, A, floating, base_p, fext)


@njit(**_NB)
def mass_matrix(parent, jtype, axis, tree_R, tree_p, mass, com, inertia,
                floating, base_R, base_p, q):
    R, p = body_poses(parent, jtype, axis, tree_R, tree_p, base_R, base_p, q)
    S = motion_subspaces(jtype, axis, R, p)
    I6 = spatial_inertias(mass, com, inertia, R, p)
    return crba(parent, S, I6, floating, base_p)


@njit(**_NB)
def point_kinematics(pf, J, acc, nu, offsets):
    """Position, linear Jacobian, velocity and bias acceleration of points
    rigidly attached to a frame, given their world offsets from its origin."""
    k = offsets.shape[0]
    nv = J.shape[1]
    w = J[3:] @ nu
    pos = np.empty((k, 3))
    vel = np.empty((k, 3))
    Jv = np.empty((k, 3, nv))
    bias = np.empty((k, 3))
    for i in range(k):
        r = offsets[i]
        pos[i] = pf + r
        Jv[i] = J[:3] - _skew(r) @ J[3:]
        vel[i] = Jv[i] @ nu
        bias[i] = acc[:3] + _cross(acc[3:], r) + _cross(w, _cross(w, r))
    return pos, vel, Jv, bias
