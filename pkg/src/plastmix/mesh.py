"""Quadrilateral meshes with 1-irregular hanging nodes.

A mesh stores vertices, counterclockwise element connectivity, a per-element
polynomial degree and refinement level, boundary tags per boundary edge, and
hanging-node relations (child vertex -> parent edge endpoints).  Meshes are
immutable; `refine` and the degree utilities return new meshes.
"""

import json

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "DIRICHLET",
    "NEUMANN",
    "INTERIOR",
    "Mesh",
    "ElementMap",
    "element_map",
    "build_rectangle_mesh",
    "refine",
    "with_degrees",
    "enrich_degrees",
]

DIRICHLET = "DIRICHLET"
NEUMANN = "NEUMANN"
INTERIOR = "INTERIOR"

#: local edges of a quad, in counterclockwise traversal order
LOCAL_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))


def _key(a, b):
    return (a, b) if a < b else (b, a)


def _rkey(x, y):
    return (round(float(x), 10), round(float(y), 10))


class ElementMap:
    """Bilinear map F_T from the reference square to a quadrilateral."""

    def __init__(self, corners):
        v = np.asarray(corners, dtype=float)
        self.corners = v
        self.c0 = 0.25 * (v[0] + v[1] + v[2] + v[3])
        self.c1 = 0.25 * (-v[0] + v[1] + v[2] - v[3])
        self.c2 = 0.25 * (-v[0] - v[1] + v[2] + v[3])
        self.c3 = 0.25 * (v[0] - v[1] + v[2] - v[3])
        scale = max(np.max(np.abs(v - self.c0)), 1e-300)
        self.is_affine = bool(np.max(np.abs(self.c3)) < 1e-12 * scale)

    def map_points(self, ref):
        ref = np.atleast_2d(ref)
        xi = ref[:, :1]
        eta = ref[:, 1:2]
        return self.c0 + xi * self.c1 + eta * self.c2 + xi * eta * self.c3

    def jacobian(self, ref):
        ref = np.atleast_2d(ref)
        n = len(ref)
        jac = np.empty((n, 2, 2))
        jac[:, :, 0] = self.c1 + ref[:, 1:2] * self.c3
        jac[:, :, 1] = self.c2 + ref[:, 0:1] * self.c3
        return jac

    def det(self, ref):
        jac = self.jacobian(ref)
        return jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]

    def inverse(self, points, tol=1e-12, maxit=30):
        """Map physical points back to reference coordinates (Newton)."""
        points = np.atleast_2d(points)
        ref = np.zeros_like(points)
        for _ in range(maxit):
            res = self.map_points(ref) - points
            if np.max(np.abs(res)) < tol * max(1.0, np.max(np.abs(points))):
                break
            jac = self.jacobian(ref)
            ref = ref - np.linalg.solve(jac, res[:, :, None])[:, :, 0]
        return ref


class Mesh:
    def __init__(self, vertices, elements, degrees, levels, boundary_tags,
                 hanging):
        self.vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        self.elements = np.asarray(elements, dtype=np.int64).reshape(-1, 4)
        self.degrees = np.asarray(degrees, dtype=np.int64).copy()
        self.levels = np.asarray(levels, dtype=np.int64).copy()
        self.boundary_tags = dict(boundary_tags)
        self.hanging = {int(v): (int(a), int(b))
                        for v, (a, b) in dict(hanging).items()}
        self._tree = None
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self):
        owners = {}
        for t, el in enumerate(self.elements):
            for le, (i, j) in enumerate(LOCAL_EDGES):
                owners.setdefault(_key(el[i], el[j]), []).append((t, le))
        self.facet_owners = owners
        self.parent_mid = {}
        self.half_parent = {}
        for v, (a, b) in self.hanging.items():
            pk = _key(a, b)
            self.parent_mid[pk] = v
            self.half_parent[_key(a, v)] = pk
            self.half_parent[_key(b, v)] = pk
        self._validate()

    def _validate(self):
        for key, own in self.facet_owners.items():
            if len(own) > 2:
                raise ValueError(f"facet {key} shared by >2 elements")
            if len(own) == 1 and key not in self.boundary_tags \
                    and key not in self.parent_mid \
                    and key not in self.half_parent:
                raise ValueError(f"dangling facet {key}")
        for pk, vm in self.parent_mid.items():
            if pk not in self.facet_owners or len(self.facet_owners[pk]) != 1:
                raise ValueError(f"hanging parent edge {pk} not a facet")
            a, b = pk
            for half in (_key(a, vm), _key(vm, b)):
                if half in self.parent_mid:
                    raise ValueError("mesh is not 1-irregular")
                if half not in self.facet_owners:
                    raise ValueError(f"missing half facet {half}")
        # convexity / orientation
        for t in range(self.n_elements):
            v = self.vertices[self.elements[t]]
            for c in range(4):
                e1 = v[(c + 1) % 4] - v[c]
                e2 = v[(c + 3) % 4] - v[c]
                if e1[0] * e2[1] - e1[1] * e2[0] <= 0:
                    raise ValueError(f"element {t} is degenerate or not CCW")
        for ta, tb in self.neighbor_pairs():
            if abs(int(self.degrees[ta]) - int(self.degrees[tb])) > 1:
                raise ValueError("neighbor degrees differ by more than 1")

    # -- basic queries -----------------------------------------------------

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def element_corners(self, t):
        return self.vertices[self.elements[t]]

    def element_area(self, t):
        v = self.element_corners(t)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def element_size(self, t):
        v = self.element_corners(t)
        return float(max(np.linalg.norm(v[(c + 1) % 4] - v[c])
                         for c in range(4)))

    def centroid(self, t):
        return self.element_corners(t).mean(axis=0)

    @property
    def domain_area(self):
        return sum(self.element_area(t) for t in range(self.n_elements))

    def facet_key(self, t, le):
        i, j = LOCAL_EDGES[le]
        el = self.elements[t]
        return _key(el[i], el[j])

    def neighbor_pairs(self):
        """Pairs of elements sharing a facet, including across hanging edges."""
        pairs = []
        for key, own in self.facet_owners.items():
            if len(own) == 2:
                pairs.append((own[0][0], own[1][0]))
        for pk, vm in self.parent_mid.items():
            tc = self.facet_owners[pk][0][0]
            a, b = pk
            for half in (_key(a, vm), _key(vm, b)):
                for tf, _ in self.facet_owners[half]:
                    pairs.append((tc, tf))
        return pairs

    def boundary_facets(self, tag=None):
        if tag is None:
            return list(self.boundary_tags.items())
        return [k for k, v in self.boundary_tags.items() if v == tag]

    def _is_rectilinear(self):
        if not hasattr(self, "_rectilinear"):
            v = self.vertices[self.elements]           # (ne, 4, 2)
            ok = (np.allclose(v[:, 0, 1], v[:, 1, 1])
                  and np.allclose(v[:, 1, 0], v[:, 2, 0])
                  and np.allclose(v[:, 2, 1], v[:, 3, 1])
                  and np.allclose(v[:, 3, 0], v[:, 0, 0]))
            self._rectilinear = bool(ok)
            if ok:
                self._bbox = np.stack([v[:, 0, 0], v[:, 0, 1],
                                       v[:, 2, 0], v[:, 2, 1]], axis=1)
        return self._rectilinear

    def locate(self, points):
        """Element id containing each point (ties broken arbitrarily)."""
        points = np.atleast_2d(points)
        if self._tree is None:
            cents = np.array([self.centroid(t) for t in range(self.n_elements)])
            self._tree = cKDTree(cents)
        k = min(16, self.n_elements)
        _, cand = self._tree.query(points, k=k)
        cand = np.atleast_2d(cand.reshape(len(points), -1))
        out = np.full(len(points), -1, dtype=np.int64)
        if self._is_rectilinear():
            # vectorized bounding-box containment over candidate ranks
            bb = self._bbox
            scale = max(1.0, float(np.max(np.abs(self.vertices))))
            tol = 1e-9 * scale
            px, py = points[:, 0], points[:, 1]
            for r in range(cand.shape[1]):
                miss = out < 0
                if not miss.any():
                    break
                els = cand[miss, r]
                inside = ((bb[els, 0] - tol <= px[miss])
                          & (px[miss] <= bb[els, 2] + tol)
                          & (bb[els, 1] - tol <= py[miss])
                          & (py[miss] <= bb[els, 3] + tol))
                idx = np.nonzero(miss)[0][inside]
                out[idx] = els[inside]
            if (out < 0).any():
                raise ValueError("some points not found in mesh")
            return out
        for i, pt in enumerate(points):
            for t in cand[i]:
                emap = element_map(self, int(t))
                ref = emap.inverse(pt[None, :])[0]
                if np.max(np.abs(ref)) <= 1.0 + 1e-9:
                    out[i] = t
                    break
            if out[i] < 0:
                raise ValueError(f"point {pt} not found in mesh")
        return out

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {
            "vertices": self.vertices.tolist(),
            "elements": self.elements.tolist(),
            "degrees": self.degrees.tolist(),
            "levels": self.levels.tolist(),
            "boundary_tags": [[int(a), int(b), tag]
                              for (a, b), tag in sorted(self.boundary_tags.items())],
            "hanging": [[int(v), int(a), int(b)]
                        for v, (a, b) in sorted(self.hanging.items())],
        }

    @classmethod
    def from_dict(cls, d):
        tags = {(a, b): tag for a, b, tag in d["boundary_tags"]}
        hanging = {v: (a, b) for v, a, b in d["hanging"]}
        return cls(d["vertices"], d["elements"], d["degrees"], d["levels"],
                   tags, hanging)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def element_map(mesh, t):
    return ElementMap(mesh.element_corners(t))


def build_rectangle_mesh(rect, nx, ny, p=1, tag_fn=None):
    """Uniform tensor mesh of an axis-aligned rectangle (x0, y0, x1, y1).

    `tag_fn(midpoint)` returns the tag of a boundary edge; defaults to
    DIRICHLET everywhere.
    """
    x0, y0, x1, y1 = rect
    if nx < 1 or ny < 1 or p < 1:
        raise ValueError("nx, ny, p must be >= 1")
    if x1 <= x0 or y1 <= y0:
        raise ValueError("degenerate rectangle")
    if tag_fn is None:
        tag_fn = lambda mid: DIRICHLET  # noqa: E731
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    verts = np.array([(x, y) for y in ys for x in xs])

    def vid(i, j):
        return j * (nx + 1) + i

    elements = []
    for j in range(ny):
        for i in range(nx):
            elements.append([vid(i, j), vid(i + 1, j),
                             vid(i + 1, j + 1), vid(i, j + 1)])
    elements = np.array(elements)
    tags = {}
    for el in elements:
        for i, j in LOCAL_EDGES:
            a, b = el[i], el[j]
            mid = 0.5 * (verts[a] + verts[b])
            on_bnd = (abs(mid[0] - x0) < 1e-12 or abs(mid[0] - x1) < 1e-12
                      or abs(mid[1] - y0) < 1e-12 or abs(mid[1] - y1) < 1e-12)
            if on_bnd:
                tags[_key(a, b)] = tag_fn(mid)
    ne = len(elements)
    return Mesh(verts, elements, np.full(ne, p), np.zeros(ne, dtype=int),
                tags, {})


def refine(mesh, marked):
    """Split marked elements into 4; add closure splits to stay 1-irregular."""
    marked = set(int(t) for t in marked)
    if not marked:
        return mesh
    split = set()
    stack = list(marked)
    while stack:
        t = stack.pop()
        if t in split:
            continue
        split.add(t)
        # if t sits on the fine side of a hanging edge, the coarse neighbor
        # must be split first, else the coarse edge gets two hanging nodes
        for le in range(4):
            key = mesh.facet_key(t, le)
            pk = mesh.half_parent.get(key)
            if pk is not None:
                tc = mesh.facet_owners[pk][0][0]
                if tc not in split:
                    stack.append(int(tc))

    verts = [tuple(v) for v in mesh.vertices]
    coord_id = {_rkey(x, y): i for i, (x, y) in enumerate(verts)}

    def vid(x, y):
        k = _rkey(x, y)
        i = coord_id.get(k)
        if i is None:
            i = len(verts)
            verts.append((float(x), float(y)))
            coord_id[k] = i
        return i

    new_elements = []
    new_deg = []
    new_lev = []
    for t in range(mesh.n_elements):
        el = mesh.elements[t]
        if t not in split:
            new_elements.append(list(el))
            new_deg.append(int(mesh.degrees[t]))
            new_lev.append(int(mesh.levels[t]))
            continue
        v = mesh.vertices
        mids = []
        for i, j in LOCAL_EDGES:
            m = 0.5 * (v[el[i]] + v[el[j]])
            mids.append(vid(m[0], m[1]))
        c = 0.25 * (v[el[0]] + v[el[1]] + v[el[2]] + v[el[3]])
        cid = vid(c[0], c[1])
        m01, m12, m23, m30 = mids
        children = [
            [el[0], m01, cid, m30],
            [m01, el[1], m12, cid],
            [cid, m12, el[2], m23],
            [m30, cid, m23, el[3]],
        ]
        for ch in children:
            new_elements.append(ch)
            new_deg.append(int(mesh.degrees[t]))
            new_lev.append(int(mesh.levels[t]) + 1)

    new_elements = np.array(new_elements)
    # facet ownership of the new mesh
    owners = {}
    for t, el in enumerate(new_elements):
        for i, j in LOCAL_EDGES:
            owners.setdefault(_key(el[i], el[j]), []).append(t)

    varr = np.array(verts)
    new_tags = {}
    for (a, b), tag in mesh.boundary_tags.items():
        if (a, b) in owners:
            new_tags[(a, b)] = tag
        else:
            m = 0.5 * (varr[a] + varr[b])
            vm = coord_id.get(_rkey(m[0], m[1]))
            if vm is None:
                raise RuntimeError("boundary edge lost its midpoint")
            new_tags[_key(a, vm)] = tag
            new_tags[_key(vm, b)] = tag

    hanging = {}
    for (a, b), own in owners.items():
        if len(own) != 1 or (a, b) in new_tags:
            continue
        m = 0.5 * (varr[a] + varr[b])
        vm = coord_id.get(_rkey(m[0], m[1]))
        if vm is not None and _key(a, vm) in owners and _key(vm, b) in owners:
            hanging[vm] = (a, b)

    return Mesh(varr, new_elements, new_deg, new_lev, new_tags, hanging)


def with_degrees(mesh, degrees):
    return Mesh(mesh.vertices, mesh.elements, degrees, mesh.levels,
                mesh.boundary_tags, mesh.hanging)


def enrich_degrees(mesh, marked):
    """Raise the degree of marked elements by 1, then restore comparability
    (neighbor degrees differ at most 1) by raising the lower degree."""
    deg = mesh.degrees.copy()
    for t in marked:
        deg[t] += 1
    pairs = mesh.neighbor_pairs()
    changed = True
    while changed:
        changed = False
        for ta, tb in pairs:
            if deg[ta] - deg[tb] > 1:
                deg[tb] = deg[ta] - 1
                changed = True
            elif deg[tb] - deg[ta] > 1:
                deg[ta] = deg[tb] - 1
                changed = True
    return with_degrees(mesh, deg)
