"""Robot descriptions: URDF ingestion, validation and the compiled kinematic tree.

A :class:`RobotModel` keeps the description as parsed (links, joints, feet,
loop closures).  The numerical algorithms work on :attr:`RobotModel.tree`, a
compact array form where fixed joints are fused into their parent body.
"""
from __future__ import annotations

import functools
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import KinematicsError, ParseError, ValidationError
from .spatial import rpy_to_matrix

JOINT_KINDS = ("revolute", "prismatic", "fixed")
_STRUCTURAL = {
    "UNKNOWN_LINK",
    "MULTIPLE_PARENTS",
    "CYCLE",
    "NO_ROOT",
    "MULTIPLE_ROOTS",
    "DISCONNECTED",
    "DUPLICATE_NAME",
    "UNKNOWN_FOOT_LINK",
    "UNKNOWN_CLOSURE_FRAME",
    "UNKNOWN_FRAME_LINK",
}


def _frozen(a, shape=None):
    a = np.array(a, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Transform:
    """Rigid transform ``x_parent = rotation @ x_child + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: _frozen(np.eye(3)))
    translation: np.ndarray = field(default_factory=lambda: _frozen(np.zeros(3)))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def from_xyz_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)):
        return cls(rpy_to_matrix(rpy), np.asarray(xyz, dtype=float))

    def compose(self, other: "Transform") -> "Transform":
        return Transform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Transform":
        Rt = self.rotation.T
        return Transform(Rt, -Rt @ self.translation)

    def apply(self, point):
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def matrix(self) -> np.ndarray:
        H = np.eye(4)
        H[:3, :3] = self.rotation
        H[:3, 3] = self.translation
        return H


@dataclass(frozen=True)
class Link:
    name: str
    mass: float = 0.0
    inertia: np.ndarray = field(default_factory=lambda: _frozen(np.zeros((3, 3))))
    com_offset: np.ndarray = field(default_factory=lambda: _frozen(np.zeros(3)))

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "inertia", _frozen(self.inertia, (3, 3)))
        object.__setattr__(self, "com_offset", _frozen(self.com_offset, (3,)))


@dataclass(frozen=True)
class Joint:
    name: str
    kind: str
    parent_link: str
    child_link: str
    axis: np.ndarray = field(default_factory=lambda: _frozen([1.0, 0.0, 0.0]))
    origin: Transform = field(default_factory=Transform)
    position_limits: tuple = (-np.inf, np.inf)
    effort_limit: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "axis", _frozen(self.axis, (3,)))
        lo, hi = self.position_limits
        object.__setattr__(self, "position_limits", (float(lo), float(hi)))
        object.__setattr__(self, "effort_limit", float(self.effort_limit))


@dataclass(frozen=True)
class Rectangular:
    """Flat sole; contact vertices sit at its four corners."""

    length: float
    width: float
    sole_height: float = 0.0

    def vertices(self) -> np.ndarray:
        a, b, h = 0.5 * self.length, 0.5 * self.width, self.sole_height
        return np.array([[a, b, h], [a, -b, h], [-a, -b, h], [-a, b, h]])


@dataclass(frozen=True)
class Spherical:
    radius: float
    center_offset: np.ndarray = field(default_factory=lambda: _frozen(np.zeros(3)))

    def __post_init__(self):
        object.__setattr__(self, "center_offset", _frozen(self.center_offset, (3,)))


FootGeometry = Rectangular | Spherical


@dataclass(frozen=True)
class Foot:
    link_name: str
    geometry: FootGeometry

    @property
    def vertex_count(self) -> int:
        return 4 if isinstance(self.geometry, Rectangular) else 1


@dataclass(frozen=True)
class LoopClosure:
    """Two frames held coincident.

    With ``orientation=False`` only the frame origins are tied together (a
    spherical closure, which is also what a planar revolute loop needs).
    """

    frame_a: str
    frame_b: str
    orientation: bool = True

    @property
    def rows(self) -> int:
        return 6 if self.orientation else 3

    @property
    def name(self) -> str:
        return f"{self.frame_a}~{self.frame_b}"


@dataclass(frozen=True)
class Frame:
    """Named frame rigidly attached to a link."""

    name: str
    link: str
    transform: Transform = field(default_factory=Transform)


@dataclass(frozen=True)
class Violation:
    code: str
    element: str
    detail: str = ""


@dataclass(frozen=True)
class KinematicTree:
    """Array form of a model with fixed joints fused away.

    Body 0 is the base.  Body ``i > 0`` is moved by degree of freedom ``i - 1``
    and ``parent[i] < i``.
    """

    body_links: tuple
    dof_names: tuple
    parent: np.ndarray
    jtype: np.ndarray  # 0 revolute, 1 prismatic
    axis: np.ndarray
    tree_R: np.ndarray
    tree_p: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    frame_names: tuple
    frame_body: np.ndarray
    frame_R: np.ndarray
    frame_p: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    effort: np.ndarray

    @functools.cached_property
    def frame_index(self) -> dict:
        return {name: i for i, name in enumerate(self.frame_names)}

    @property
    def n_bodies(self) -> int:
        return len(self.body_links)


@dataclass(frozen=True)
class RobotModel:
    links: tuple
    joints: tuple
    base_link: str
    floating: bool = True
    feet: tuple = ()
    loop_closures: tuple = ()
    frames: tuple = ()
    name: str = "robot"

    @property
    def dof_joints(self) -> tuple:
        return tuple(j for j in self.joints if j.kind != "fixed")

    @property
    def n_dof(self) -> int:
        return len(self.dof_joints)

    @property
    def nv(self) -> int:
        return self.n_dof + (6 if self.floating else 0)

    @property
    def nq(self) -> int:
        return self.n_dof + (7 if self.floating else 0)

    @property
    def base_offset(self) -> int:
        """Index of the first joint coordinate inside the generalized velocity."""
        return 6 if self.floating else 0

    @property
    def total_mass(self) -> float:
        return float(sum(link.mass for link in self.links))

    @property
    def vertex_count(self) -> int:
        return sum(f.vertex_count for f in self.feet)

    def link(self, name: str) -> Link:
        for link in self.links:
            if link.name == name:
                return link
        raise KeyError(name)

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.dof_joints):
            if j.name == name:
                return i
        raise KeyError(name)

    @functools.cached_property
    def tree(self) -> KinematicTree:
        return _build_tree(self)


# --------------------------------------------------------------------------- #
# URDF parsing


def _floats(text, n, what):
    try:
        vals = [float(v) for v in text.split()]
    except (ValueError, AttributeError) as exc:
        raise ParseError(f"bad numeric list for {what}: {text!r}") from exc
    if len(vals) != n:
        raise ParseError(f"{what} needs {n} values, got {len(vals)}")
    return vals


def _attr_float(elem, name, what, default=None):
    raw = elem.get(name)
    if raw is None:
        if default is None:
            raise ParseError(f"missing attribute {name!r} on {what}")
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ParseError(f"bad number {raw!r} for {name} on {what}") from exc


def _origin(elem, what):
    if elem is None:
        return Transform()
    xyz = _floats(elem.get("xyz", "0 0 0"), 3, f"{what} origin xyz")
    rpy = _floats(elem.get("rpy", "0 0 0"), 3, f"{what} origin rpy")
    return Transform.from_xyz_rpy(xyz, rpy)


def _parse_link(elem) -> Link:
    name = elem.get("name")
    if not name:
        raise ParseError("link without a name")
    inertial = elem.find("inertial")
    if inertial is None:
        return Link(name)
    mass_el = inertial.find("mass")
    if mass_el is None:
        raise ParseError(f"link {name!r}: inertial without <mass>")
    mass = _attr_float(mass_el, "value", f"link {name!r} mass")
    frame = _origin(inertial.find("origin"), f"link {name!r} inertial")
    inertia_el = inertial.find("inertia")
    if inertia_el is None:
        raise ParseError(f"link {name!r}: inertial without <inertia>")
    g = {k: _attr_float(inertia_el, k, f"link {name!r} inertia", 0.0) for k in ("ixx", "ixy", "ixz", "iyy", "iyz", "izz")}
    I = np.array(
        [
            [g["ixx"], g["ixy"], g["ixz"]],
            [g["ixy"], g["iyy"], g["iyz"]],
            [g["ixz"], g["iyz"], g["izz"]],
        ]
    )
    R = frame.rotation
    return Link(name, mass, R @ I @ R.T, frame.translation)


def _parse_joint(elem) -> Joint:
    name = elem.get("name")
    kind = elem.get("type")
    if not name or not kind:
        raise ParseError("joint needs both name and type attributes")
    if kind == "continuous":
        kind = "revolute"
        continuous = True
    else:
        continuous = False
    if kind not in JOINT_KINDS:
        raise ParseError(f"joint {name!r}: unsupported type {kind!r}")
    parent = elem.find("parent")
    child = elem.find("child")
    if parent is None or child is None or not parent.get("link") or not child.get("link"):
        raise ParseError(f"joint {name!r}: missing parent or child link")
    axis_el = elem.find("axis")
    axis = np.array(_floats(axis_el.get("xyz", "1 0 0"), 3, f"joint {name!r} axis")) if axis_el is not None else np.array([1.0, 0.0, 0.0])
    norm = np.linalg.norm(axis)
    if norm > 0.0:
        axis = axis / norm
    limits = (-np.inf, np.inf)
    effort = np.inf
    limit_el = elem.find("limit")
    if limit_el is not None:
        effort = _attr_float(limit_el, "effort", f"joint {name!r} limit", np.inf)
        if not continuous:
            limits = (
                _attr_float(limit_el, "lower", f"joint {name!r} limit", -np.inf),
                _attr_float(limit_el, "upper", f"joint {name!r} limit", np.inf),
            )
    elif kind != "fixed" and not continuous:
        raise ParseError(f"joint {name!r}: {kind} joint requires a <limit> element")
    return Joint(name, kind, parent.get("link"), child.get("link"), axis, _origin(elem.find("origin"), f"joint {name!r}"), limits, effort)


def _coerce_foot(spec) -> Foot:
    if isinstance(spec, Foot):
        return spec
    spec = dict(spec)
    link = spec.pop("link", None) or spec.pop("link_name", None)
    if link is None:
        raise ParseError("foot entry needs a link name")
    shape = spec.pop("shape", "rectangular")
    try:
        if shape == "rectangular":
            geom = Rectangular(float(spec["length"]), float(spec["width"]), float(spec.get("sole_height", 0.0)))
        elif shape == "spherical":
            geom = Spherical(float(spec["radius"]), spec.get("center_offset", (0.0, 0.0, 0.0)))
        else:
            raise ParseError(f"unknown foot shape {shape!r}")
    except KeyError as exc:
        raise ParseError(f"foot {link!r} lacks {exc.args[0]!r}") from exc
    return Foot(link, geom)


def _coerce_closure(spec, joints_by_name):
    """Returns (closure, frames_to_add, joint_to_cut)."""
    if isinstance(spec, LoopClosure):
        return spec, (), None
    spec = dict(spec)
    if "joint" in spec:
        jname = spec["joint"]
        joint = joints_by_name.get(jname)
        if joint is None:
            raise KinematicsError(f"loop closure cuts unknown joint {jname!r}")
        if joint.kind == "prismatic":
            raise KinematicsError(f"cannot close a loop through prismatic joint {jname!r}")
        fa = Frame(f"{jname}::parent", joint.parent_link, joint.origin)
        fb = Frame(f"{jname}::child", joint.child_link, Transform())
        return LoopClosure(fa.name, fb.name, joint.kind == "fixed"), (fa, fb), jname
    return LoopClosure(spec["frame_a"], spec["frame_b"], bool(spec.get("orientation", True))), (), None


def load_model(urdf_text: str, options: Mapping | None = None, **kwargs) -> RobotModel:
    """Parse a URDF document into a validated :class:`RobotModel`.

    ``options`` (or keyword arguments) may hold ``floating`` (default True),
    ``feet`` (:class:`Foot` objects or dicts with ``link``, ``shape`` and the
    geometry fields), ``loop_closures`` (:class:`LoopClosure` objects or dicts
    with ``frame_a``/``frame_b``/``orientation``, or ``{"joint": name}`` to cut
    a joint that closes a cycle in the URDF graph) and ``frames``.
    """
    opts = dict(options or {})
    opts.update(kwargs)
    try:
        root = ET.fromstring(urdf_text)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from exc
    if root.tag != "robot":
        raise ParseError(f"root element is <{root.tag}>, expected <robot>")

    links = [_parse_link(e) for e in root.findall("link")]
    joints = [_parse_joint(e) for e in root.findall("joint")]
    if not links:
        raise ParseError("robot has no links")

    joints_by_name = {j.name: j for j in joints}
    closures, extra_frames, cut = [], [], set()
    for spec in opts.get("loop_closures", ()):
        closure, frames, jname = _coerce_closure(spec, joints_by_name)
        closures.append(closure)
        extra_frames.extend(frames)
        if jname is not None:
            cut.add(jname)
    joints = [j for j in joints if j.name not in cut]
    extra_frames.extend(opts.get("frames", ()))

    link_names = [l.name for l in links]
    problems = _structure_violations(link_names, joints)
    if problems:
        raise KinematicsError("; ".join(f"{v.code}: {v.element} {v.detail}".strip() for v in problems))

    base = _find_root(link_names, joints)
    links, joints = _depth_first(base, links, joints)
    model = RobotModel(
        links=tuple(links),
        joints=tuple(joints),
        base_link=base,
        floating=bool(opts.get("floating", True)),
        feet=tuple(_coerce_foot(f) for f in opts.get("feet", ())),
        loop_closures=tuple(closures),
        frames=tuple(extra_frames),
        name=root.get("name", "robot"),
    )
    violations = validate_model(model)
    if violations:
        structural = [v for v in violations if v.code in _STRUCTURAL]
        if structural:
            raise KinematicsError("; ".join(f"{v.code}: {v.element}" for v in structural))
        raise ValidationError("; ".join(f"{v.code}: {v.element}" for v in violations), violations)
    return model


def _find_root(link_names, joints):
    children = {j.child_link for j in joints}
    roots = [n for n in link_names if n not in children]
    return roots[0]


def _depth_first(base, links, joints):
    by_name = {l.name: l for l in links}
    children = {}
    for j in joints:
        children.setdefault(j.parent_link, []).append(j)
    out_links, out_joints = [], []
    stack = [base]
    while stack:
        name = stack.pop()
        out_links.append(by_name[name])
        kids = children.get(name, [])
        for j in kids:
            out_joints.append(j)
        # reversed push keeps document order on the way out
        for j in reversed(kids):
            stack.append(j.child_link)
    # joints must follow link DFS order: joint i precedes its child's subtree
    order = {l.name: i for i, l in enumerate(out_links)}
    out_joints.sort(key=lambda j: order[j.child_link])
    return out_links, out_joints


def _structure_violations(link_names, joints) -> list[Violation]:
    out = []
    seen = set()
    for n in link_names:
        if n in seen:
            out.append(Violation("DUPLICATE_NAME", n, "link name used twice"))
        seen.add(n)
    known = set(link_names)
    parents = {}
    for j in joints:
        for ln in (j.parent_link, j.child_link):
            if ln not in known:
                out.append(Violation("UNKNOWN_LINK", j.name, f"references missing link {ln!r}"))
        if j.child_link in parents:
            out.append(Violation("MULTIPLE_PARENTS", j.child_link, f"joints {parents[j.child_link]!r} and {j.name!r}"))
        else:
            parents[j.child_link] = j.name
    if out:
        return out
    parent_of = {j.child_link: j.parent_link for j in joints}
    roots = [n for n in link_names if n not in parent_of]
    # cycles: follow parent pointers
    for n in link_names:
        visited = set()
        cur = n
        while cur in parent_of:
            if cur in visited:
                out.append(Violation("CYCLE", n, "joint graph contains a cycle"))
                break
            visited.add(cur)
            cur = parent_of[cur]
        if out:
            break
    if not roots and not out:
        out.append(Violation("NO_ROOT", "", "every link has a parent"))
    elif len(roots) > 1:
        out.append(Violation("MULTIPLE_ROOTS", ",".join(roots), "joint graph is disconnected"))
    return out


def validate_model(model: RobotModel) -> list[Violation]:
    """Every invariant violation of ``model``; an empty list means valid."""
    out = _structure_violations([l.name for l in model.links], list(model.joints))
    names = {l.name for l in model.links}
    if model.base_link not in names:
        out.append(Violation("UNKNOWN_LINK", model.base_link, "base link not in model"))
    for link in model.links:
        if not np.isfinite(link.mass) or link.mass < 0.0:
            out.append(Violation("NEGATIVE_MASS", link.name, f"mass {link.mass}"))
            continue
        I = link.inertia
        if not np.allclose(I, I.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(I).max()))):
            out.append(Violation("NON_SYMMETRIC_INERTIA", link.name))
            continue
        if link.mass > 0.0:
            eig = np.linalg.eigvalsh(0.5 * (I + I.T))
            if eig[0] <= 0.0:
                out.append(Violation("NON_PD_INERTIA", link.name, f"smallest eigenvalue {eig[0]:g}"))
    for j in model.joints:
        if j.kind not in JOINT_KINDS:
            out.append(Violation("BAD_JOINT_KIND", j.name, j.kind))
        if j.kind != "fixed" and abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
            out.append(Violation("BAD_AXIS", j.name, f"axis norm {np.linalg.norm(j.axis):g}"))
        lo, hi = j.position_limits
        if lo > hi:
            out.append(Violation("BAD_LIMITS", j.name, f"lower {lo} > upper {hi}"))
    frame_names = set(names)
    for fr in model.frames:
        if fr.link not in names:
            out.append(Violation("UNKNOWN_FRAME_LINK", fr.name, f"link {fr.link!r}"))
        frame_names.add(fr.name)
    for foot in model.feet:
        if foot.link_name not in frame_names:
            out.append(Violation("UNKNOWN_FOOT_LINK", foot.link_name))
        g = foot.geometry
        if isinstance(g, Rectangular):
            if not (g.length > 0.0 and g.width > 0.0):
                out.append(Violation("BAD_FOOT_GEOMETRY", foot.link_name, "length and width must be positive"))
        elif isinstance(g, Spherical):
            if not g.radius > 0.0:
                out.append(Violation("BAD_FOOT_GEOMETRY", foot.link_name, "radius must be positive"))
        else:
            out.append(Violation("BAD_FOOT_GEOMETRY", foot.link_name, f"unknown geometry {type(g).__name__}"))
    for c in model.loop_closures:
        for fname in (c.frame_a, c.frame_b):
            if fname not in frame_names:
                out.append(Violation("UNKNOWN_CLOSURE_FRAME", fname))
    return out


# --------------------------------------------------------------------------- #
# Compiled tree


def _build_tree(model: RobotModel) -> KinematicTree:
    problems = [v for v in validate_model(model) if v.code in _STRUCTURAL]
    if problems:
        raise KinematicsError("; ".join(f"{v.code}: {v.element}" for v in problems))
    link_by = {l.name: l for l in model.links}
    children = {}
    for j in model.joints:
        children.setdefault(j.parent_link, []).append(j)

    # link name -> (body index, transform body<-link)
    placement = {}
    body_links, dof_joints, parent, tree_T = [], [], [], []
    fused = []  # per body: list of (link, transform)

    def visit(link_name, body, T_bl):
        placement[link_name] = (body, T_bl)
        fused[body].append((link_by[link_name], T_bl))
        for j in children.get(link_name, []):
            if j.kind == "fixed":
                visit(j.child_link, body, T_bl.compose(j.origin))
            else:
                idx = len(body_links)
                body_links.append(j.child_link)
                dof_joints.append(j)
                parent.append(body)
                tree_T.append(T_bl.compose(j.origin))
                fused.append([])
                visit(j.child_link, idx, Transform())

    body_links.append(model.base_link)
    dof_joints.append(None)
    parent.append(-1)
    tree_T.append(Transform())
    fused.append([])
    visit(model.base_link, 0, Transform())

    nb = len(body_links)
    mass = np.zeros(nb)
    com = np.zeros((nb, 3))
    inertia = np.zeros((nb, 3, 3))
    for b, parts in enumerate(fused):
        m = sum(l.mass for l, _ in parts)
        if m <= 0.0:
            continue
        cs = [T.apply(l.com_offset) for l, T in parts]
        c = sum(l.mass * ci for (l, _), ci in zip(parts, cs)) / m
        I = np.zeros((3, 3))
        for (l, T), ci in zip(parts, cs):
            d = ci - c
            I += T.rotation @ l.inertia @ T.rotation.T + l.mass * (float(d @ d) * np.eye(3) - np.outer(d, d))
        mass[b], com[b], inertia[b] = m, c, I

    frame_names, frame_body, frame_R, frame_p = [], [], [], []
    for link in model.links:
        b, T = placement[link.name]
        frame_names.append(link.name)
        frame_body.append(b)
        frame_R.append(T.rotation)
        frame_p.append(T.translation)
    for fr in model.frames:
        b, T = placement[fr.link]
        T = T.compose(fr.transform)
        frame_names.append(fr.name)
        frame_body.append(b)
        frame_R.append(T.rotation)
        frame_p.append(T.translation)

    joints = dof_joints[1:]
    ro = lambda a, dt=float: _ro(np.array(a, dtype=dt))
    return KinematicTree(
        body_links=tuple(body_links),
        dof_names=tuple(j.name for j in joints),
        parent=ro(parent, np.int64),
        jtype=ro([0] + [0 if j.kind == "revolute" else 1 for j in joints], np.int64),
        axis=ro([[1.0, 0.0, 0.0]] + [list(j.axis) for j in joints]).reshape(nb, 3),
        tree_R=ro([T.rotation for T in tree_T]).reshape(nb, 3, 3),
        tree_p=ro([T.translation for T in tree_T]).reshape(nb, 3),
        mass=_ro(mass),
        com=_ro(com),
        inertia=_ro(inertia),
        frame_names=tuple(frame_names),
        frame_body=ro(frame_body, np.int64),
        frame_R=ro(frame_R).reshape(-1, 3, 3),
        frame_p=ro(frame_p).reshape(-1, 3),
        lower=ro([j.position_limits[0] for j in joints]),
        upper=ro([j.position_limits[1] for j in joints]),
        effort=ro([j.effort_limit for j in joints]),
    )


def _ro(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def tree_depth(model: RobotModel) -> int:
    """Number of links on the longest base-to-leaf path."""
    children = {}
    for j in model.joints:
        children.setdefault(j.parent_link, []).append(j.child_link)

    def depth(name):
        return 1 + max((depth(c) for c in children.get(name, ())), default=0)

    return depth(model.base_link)


def load_model_file(path, options: Mapping | None = None, **kwargs) -> RobotModel:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read(), options, **kwargs)


def with_feet(model: RobotModel, feet: Sequence) -> RobotModel:
    """Copy of ``model`` with a different feet list (validated)."""
    import dataclasses

    new = dataclasses.replace(model, feet=tuple(_coerce_foot(f) for f in feet))
    bad = validate_model(new)
    if bad:
        raise ValidationError("; ".join(f"{v.code}: {v.element}" for v in bad), bad)
    return new
