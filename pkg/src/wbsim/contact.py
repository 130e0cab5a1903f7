"""Ground contact: vertices, detection, reaction-force QP, impacts, loop closures.

The ground is the plane ``z = ground_height`` with normal +z.

Reaction forces come from the QP

    minimize    1/2 x'(G + eps I)x + x'b
    subject to  f_z >= 0,  |f_x|, |f_y| <= mu * fhat_z   (per active vertex)

where ``G = A M^-1 A'`` is the Delassus matrix of the stacked constraint rows
(vertex linear Jacobians and loop-closure rows) and ``b`` is their free
acceleration plus Baumgarte terms.  Its optimality conditions are the
acceleration-level Signorini conditions for the normal rows and a
maximal-dissipation friction law for the tangential rows.  The friction
bound uses ``fhat_z``, the normal force of the previous pass; passes repeat
until the normal forces stop changing, so the final forces sit inside the
friction pyramid of their own normal components.  Closure wrenches are
unconstrained variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._kernels import _cross
from .errors import DimensionError, QPInfeasible, SingularMassMatrix
from .kindyn import KinDynQuantities
from .model import Rectangular, RobotModel, Spherical
from .qpsolver import _STATUS, QpStatus, friction_fixed_point
from .spatial import rotation_log

_NB = dict(cache=True, nogil=True)


@dataclass(frozen=True)
class ContactParams:
    mu: float = 0.5
    ground_height: float = 0.0
    activation_tol: float = 1e-3
    baumgarte_lambda: float = 20.0
    regularization: float = 1e-6
    impact_damping: float = 1e-10
    friction_iterations: int = 50
    friction_tol: float = 1e-8


@dataclass(frozen=True)
class ContactVertex:
    foot: str
    index: int
    position: np.ndarray
    velocity: np.ndarray
    jacobian: np.ndarray
    bias: np.ndarray

    @property
    def id(self) -> tuple:
        return (self.foot, self.index)


@dataclass(frozen=True)
class ClosureConstraint:
    name: str
    jacobian: np.ndarray
    bias: np.ndarray
    error: np.ndarray
    velocity: np.ndarray


@dataclass
class ContactResult:
    active: list = field(default_factory=list)
    forces: dict = field(default_factory=dict)
    closure_wrenches: dict = field(default_factory=dict)
    impulse_applied: bool = False
    qp_status: QpStatus = QpStatus.OPTIMAL
    generalized_force: np.ndarray | None = None
    qp_iterations: int = 0
    friction_passes: int = 0

    @property
    def total_normal_force(self) -> float:
        return float(sum(f[2] for f in self.forces.values()))

    def cone_slack(self, mu: float) -> float:
        """Smallest margin to the friction pyramid over all forces (>= 0 inside)."""
        worst = np.inf
        for f in self.forces.values():
            worst = min(worst, f[2], mu * f[2] - abs(f[0]), mu * f[2] - abs(f[1]))
        return float(worst)


# --------------------------------------------------------------------------- #
# vertices


@dataclass(frozen=True)
class VertexTable:
    """Static description of every contact vertex of a model.

    ``frame[i]`` indexes the kindyn frame list; ``local[i]`` is the vertex
    (rectangular) or sphere centre (spherical) in the foot frame;
    ``radius[i] > 0`` marks a spherical vertex.
    """

    ids: tuple
    frame: np.ndarray
    local: np.ndarray
    radius: np.ndarray
    order: np.ndarray  # permutation sorting vertices by (foot name, index)

    @classmethod
    def build(cls, model: RobotModel, frame_names) -> "VertexTable":
        frame_names = list(frame_names)
        ids, frame, local, radius = [], [], [], []
        for foot in model.feet:
            try:
                k = frame_names.index(foot.link_name)
            except ValueError:
                raise DimensionError(f"foot frame {foot.link_name!r} was not evaluated") from None
            geom = foot.geometry
            if isinstance(geom, Rectangular):
                pts, rad = geom.vertices(), 0.0
            elif isinstance(geom, Spherical):
                pts, rad = np.asarray(geom.center_offset, dtype=float)[None, :], float(geom.radius)
            else:
                raise TypeError(f"unsupported foot geometry {type(geom).__name__}")
            for i, pt in enumerate(pts):
                ids.append((foot.link_name, i))
                frame.append(k)
                local.append(pt)
                radius.append(rad)
        order = np.array(sorted(range(len(ids)), key=ids.__getitem__), dtype=np.int64)
        return cls(
            tuple(ids), np.array(frame, dtype=np.int64), np.array(local, dtype=float).reshape(-1, 3),
            np.array(radius, dtype=float), order,
        )

    def evaluate(self, kindyn: KinDynQuantities):
        """``(position, velocity, jacobian, bias)`` arrays for all vertices."""
        return vertex_kinematics(
            kindyn.frame_rotations, kindyn.frame_positions, kindyn.jacobians, kindyn.bias_accelerations,
            np.ascontiguousarray(kindyn.nu), self.frame, self.local, self.radius,
        )


@njit(**_NB)
def vertex_kinematics(FR, Fp, J, acc, nu, vframe, vlocal, vradius):
    """World position, velocity, linear Jacobian and bias acceleration per vertex.

    A spherical vertex is the lowest point of its sphere.  It slides over the
    sphere surface, so its normal acceleration is the centre's: the
    centripetal term of a body-fixed point is kept only tangentially.
    """
    nvtx = vframe.shape[0]
    nv = nu.shape[0]
    pos = np.empty((nvtx, 3))
    vel = np.empty((nvtx, 3))
    Jv = np.empty((nvtx, 3, nv))
    bias = np.empty((nvtx, 3))
    for i in range(nvtx):
        k = vframe[i]
        r = np.empty(3)
        for a in range(3):
            r[a] = FR[k, a, 0] * vlocal[i, 0] + FR[k, a, 1] * vlocal[i, 1] + FR[k, a, 2] * vlocal[i, 2]
        if vradius[i] > 0.0:
            r[2] -= vradius[i]
        w = np.zeros(3)
        for c in range(nv):
            # linear rows shifted to the vertex: J_lin + J_ang x r
            jx, jy, jz = J[k, 3, c], J[k, 4, c], J[k, 5, c]
            Jv[i, 0, c] = J[k, 0, c] + jy * r[2] - jz * r[1]
            Jv[i, 1, c] = J[k, 1, c] + jz * r[0] - jx * r[2]
            Jv[i, 2, c] = J[k, 2, c] + jx * r[1] - jy * r[0]
            w[0] += jx * nu[c]
            w[1] += jy * nu[c]
            w[2] += jz * nu[c]
        for a in range(3):
            pos[i, a] = Fp[k, a] + r[a]
            s = 0.0
            for c in range(nv):
                s += Jv[i, a, c] * nu[c]
            vel[i, a] = s
        cent = _cross(w, _cross(w, r))
        if vradius[i] > 0.0:
            cent[2] = 0.0
        bias[i] = acc[k, :3] + _cross(acc[k, 3:], r) + cent
    return pos, vel, Jv, bias


def contact_vertices(model: RobotModel, state, kindyn: KinDynQuantities) -> list[ContactVertex]:
    """World-frame contact vertices of every foot, in model foot order."""
    if kindyn.nu.shape[0] != model.nv:
        raise DimensionError(f"kindyn velocity has {kindyn.nu.shape[0]} entries, model expects {model.nv}")
    table = VertexTable.build(model, kindyn.frame_names)
    pos, vel, Jv, bias = table.evaluate(kindyn)
    return [ContactVertex(f, i, pos[k], vel[k], Jv[k], bias[k]) for k, (f, i) in enumerate(table.ids)]


def detect_active_set(vertices, ground_height: float = 0.0, activation_tol: float = 1e-3) -> list:
    """Ids ``(foot, index)`` of vertices within ``activation_tol`` of the ground."""
    return sorted(v.id for v in vertices if v.position[2] - ground_height <= activation_tol)


def loop_closure_constraints(model: RobotModel, state, kindyn: KinDynQuantities) -> list[ClosureConstraint]:
    out = []
    nu = kindyn.nu
    for c in model.loop_closures:
        a, b = kindyn.index(c.frame_a), kindyn.index(c.frame_b)
        J = kindyn.jacobians[a] - kindyn.jacobians[b]
        bias = kindyn.bias_accelerations[a] - kindyn.bias_accelerations[b]
        pos_err = kindyn.frame_positions[a] - kindyn.frame_positions[b]
        if c.orientation:
            rot_err = rotation_log(kindyn.frame_rotations[a] @ kindyn.frame_rotations[b].T)
            err = np.concatenate([pos_err, rot_err])
        else:
            J, bias, err = J[:3], bias[:3], pos_err
        out.append(ClosureConstraint(c.name, J, bias, err, J @ nu))
    return out


# --------------------------------------------------------------------------- #
# compiled solves


@njit(**_NB)
def _chol_solve(L, B):
    """Solve L L' X = B for a lower-triangular L; B is (n, k)."""
    n, k = B.shape
    X = B.copy()
    for col in range(k):
        for i in range(n):
            s = X[i, col]
            for j in range(i):
                s -= L[i, j] * X[j, col]
            X[i, col] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = X[i, col]
            for j in range(i + 1, n):
                s -= L[j, i] * X[j, col]
            X[i, col] = s / L[i, i]
    return X


@njit(**_NB)
def contact_dynamics(M, h, gen, Jv, gap, vel, bias, CJ, cbias, cvel, cerr, mu, lam, eps,
                     fhat, x, fix, max_passes, fp_tol, tol):
    """Contact forces and the resulting generalized acceleration.

    Vertex rows are ``Jv`` (k, 3, nv) with gaps above ground ``gap``;
    closure rows are ``CJ`` (r, nv).  Returns ``(x, fix, status, iterations,
    passes, converged, generalized_contact_force, nudot)``.
    """
    nv = M.shape[0]
    nvert = Jv.shape[0]
    nc = CJ.shape[0]
    d = 3 * nvert + nc
    L = np.linalg.cholesky(M)
    rhs = np.empty((nv, 1))
    for i in range(nv):
        rhs[i, 0] = gen[i] - h[i]
    free = np.ascontiguousarray(_chol_solve(L, rhs)[:, 0])
    if d == 0:
        return x, fix, 0, 0, 0, True, np.zeros(nv), free
    A = np.empty((d, nv))
    target = np.empty(d)
    for i in range(nvert):
        for a in range(3):
            A[3 * i + a] = Jv[i, a]
            target[3 * i + a] = bias[i, a] + 2.0 * lam * vel[i, a]
        target[3 * i + 2] += lam * lam * gap[i]
    for r in range(nc):
        A[3 * nvert + r] = CJ[r]
        target[3 * nvert + r] = cbias[r] + 2.0 * lam * cvel[r] + lam * lam * cerr[r]
    MinvAt = _chol_solve(L, np.ascontiguousarray(A.T))
    G = A @ MinvAt
    Q = 0.5 * (G + G.T)
    for i in range(d):
        Q[i, i] += eps
    b = A @ free + target
    x, fix, status, iters, passes, converged = friction_fixed_point(
        Q, b, nvert, mu, fhat, x, fix, max_passes, fp_tol, 10 * d + 50, tol
    )
    for i in range(nvert):
        fz = max(x[3 * i + 2], 0.0)
        cap = mu * fz
        x[3 * i + 2] = fz
        x[3 * i] = min(max(x[3 * i], -cap), cap)
        x[3 * i + 1] = min(max(x[3 * i + 1], -cap), cap)
    genforce = A.T @ x
    nudot = free + MinvAt @ x
    return x, fix, status, iters, passes, converged, genforce, nudot


@njit(**_NB)
def impact_velocity(M, Jc, nu, damping):
    """``nu - M^-1 Jc' (Jc M^-1 Jc' + damping I)^-1 Jc nu``."""
    L = np.linalg.cholesky(M)
    MinvJt = _chol_solve(L, np.ascontiguousarray(Jc.T))
    G = Jc @ MinvJt
    for i in range(G.shape[0]):
        G[i, i] += damping
    impulse = np.linalg.solve(G, Jc @ nu)
    return nu - MinvJt @ impulse


def _check_mass(M):
    if not np.all(np.isfinite(M)):
        raise SingularMassMatrix("mass matrix has non-finite entries")


def resolve_impacts(kindyn: KinDynQuantities, active_vertices, new_vertices, nu=None,
                    closures=(), damping: float = 1e-10, mass_matrix=None) -> np.ndarray:
    """Post-impact velocity for a perfectly inelastic impact.

    The impulse acts on every currently active vertex (all three directions)
    and on loop-closure rows:
    ``nu+ = nu- - M^-1 Jc' (Jc M^-1 Jc' + damping I)^-1 Jc nu-``.
    With no newly active vertex the velocity is returned unchanged.
    """
    nu = kindyn.nu if nu is None else np.asarray(nu, dtype=float)
    M = kindyn.M if mass_matrix is None else mass_matrix
    if nu.shape != (M.shape[0],):
        raise DimensionError(f"velocity has shape {nu.shape}, mass matrix {M.shape}")
    if not len(new_vertices):
        return nu.copy()
    rows = [v.jacobian for v in active_vertices] + [c.jacobian for c in closures]
    Jc = np.ascontiguousarray(np.vstack(rows))
    if Jc.shape[1] != nu.shape[0]:
        raise DimensionError(f"constraint Jacobian has {Jc.shape[1]} columns, velocity {nu.shape[0]}")
    _check_mass(M)
    try:
        return impact_velocity(M, Jc, nu, float(damping))
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(f"impact solve failed: {exc}") from exc


class ContactSolver:
    """Reaction-force solver that keeps warm-start data between steps."""

    def __init__(self, params: ContactParams | None = None):
        self.params = params or ContactParams()
        self.reset()

    def reset(self):
        self._layout = None
        self._x = self._fix = None
        self._normals = {}

    def solve(self, kindyn: KinDynQuantities, vertices, closures, generalized_force, mass_matrix=None):
        """Forces for the active ``vertices`` and ``closures``.

        ``generalized_force`` is the applied generalized force excluding
        contacts (``S' tau`` plus external wrenches).  Returns the
        :class:`ContactResult`; its forces are world-frame 3-vectors keyed
        by vertex id.
        """
        return self.solve_dynamics(kindyn, vertices, closures, generalized_force, mass_matrix)[0]

    def solve_dynamics(self, kindyn, vertices, closures, generalized_force, mass_matrix=None):
        """Like :meth:`solve`, also returning the generalized acceleration."""
        vertices = list(vertices)
        nv = kindyn.M.shape[0]
        if vertices:
            ids = [v.id for v in vertices]
            Jv = np.array([v.jacobian for v in vertices])
            z = np.array([v.position[2] for v in vertices])
            vel = np.array([v.velocity for v in vertices])
            bias = np.array([v.bias for v in vertices])
        else:
            ids, Jv, z, vel, bias = [], np.zeros((0, 3, nv)), np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3))
        M = kindyn.M if mass_matrix is None else mass_matrix
        return self.solve_arrays(M, kindyn.h, generalized_force, ids, Jv, z, vel, bias, closures)

    def solve_arrays(self, M, h, generalized_force, ids, Jv, z, vel, bias, closures=()):
        """Array form of :meth:`solve_dynamics` used by the stepper."""
        prm = self.params
        nv = M.shape[0]
        gen = np.asarray(generalized_force, dtype=float)
        if gen.shape != (nv,):
            raise DimensionError(f"generalized force needs {nv} entries, got {gen.shape}")
        if Jv.shape[1:] != (3, nv):
            raise DimensionError(f"vertex Jacobians must be (k, 3, {nv}), got {Jv.shape}")
        closures = list(closures)
        if closures:
            CJ = np.vstack([c.jacobian for c in closures])
            cb = np.concatenate([c.bias for c in closures])
            cv = np.concatenate([c.velocity for c in closures])
            ce = np.concatenate([c.error for c in closures])
        else:
            CJ, cb, cv, ce = np.zeros((0, nv)), np.zeros(0), np.zeros(0), np.zeros(0)
        nvert = len(ids)
        d = 3 * nvert + CJ.shape[0]
        layout = (tuple(ids), tuple(c.name for c in closures))
        if layout == self._layout:
            x0, fix0 = self._x.copy(), self._fix.copy()
        else:
            x0, fix0 = np.zeros(d), np.zeros(d, dtype=np.int64)
        fhat = np.array([self._normals.get(i, 0.0) for i in ids], dtype=float)
        _check_mass(M)
        try:
            x, fix, code, iters, passes, converged, genforce, nudot = contact_dynamics(
                M, h, gen, Jv, z - prm.ground_height, vel, bias, CJ, cb, cv, ce, prm.mu,
                prm.baumgarte_lambda, prm.regularization, fhat, x0, fix0,
                prm.friction_iterations, prm.friction_tol, 1e-9,
            )
        except np.linalg.LinAlgError as exc:
            raise SingularMassMatrix(f"contact solve failed: {exc}") from exc
        status = _STATUS[code]
        if status is QpStatus.INFEASIBLE:
            raise QPInfeasible("contact QP reported infeasible bounds")
        if status is QpStatus.OPTIMAL:
            self._layout, self._x, self._fix = layout, x.copy(), fix
            if not converged:
                status = QpStatus.MAX_ITER
        else:
            self._layout = None
        forces = {i: x[3 * k : 3 * k + 3].copy() for k, i in enumerate(ids)}
        self._normals = {i: f[2] for i, f in forces.items()}
        wrenches = {}
        k = 3 * nvert
        for c in closures:
            n = c.jacobian.shape[0]
            wrenches[c.name] = x[k : k + n].copy()
            k += n
        result = ContactResult(
            active=list(ids),
            forces=forces,
            closure_wrenches=wrenches,
            qp_status=status,
            generalized_force=genforce,
            qp_iterations=int(iters),
            friction_passes=int(passes),
        )
        return result, nudot


def solve_contact_forces(kindyn: KinDynQuantities, active_vertices, closure_constraints, generalized_force,
                         mu: float, params: ContactParams | None = None) -> ContactResult:
    """One-shot (cold-started) contact force solve; see :class:`ContactSolver`."""
    base = params or ContactParams()
    prm = ContactParams(**{**base.__dict__, "mu": float(mu)})
    return ContactSolver(prm).solve(kindyn, active_vertices, closure_constraints, generalized_force)
