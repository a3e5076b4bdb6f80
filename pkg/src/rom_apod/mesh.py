"""Structured periodic tetrahedral meshes of the cube [0, kappa]^3.

The box is cut into n^3 axis-aligned cubes and every cube is split into
six tetrahedra sharing the main diagonal.  Opposite faces of the box are
identified, so the mesh carries n^3 degrees of freedom; elements keep a
geometric copy of their (possibly wrapped) vertex coordinates so local
quantities are computed on the true simplex shape.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# The six tetrahedra of the Kuhn split, one per ordering of the axes.
# Odd permutations list their middle vertices swapped so every element
# comes out positively oriented.
_KUHN_PERMS = (
    (0, 1, 2, +1),
    (0, 2, 1, -1),
    (1, 0, 2, -1),
    (1, 2, 0, +1),
    (2, 0, 1, +1),
    (2, 1, 0, -1),
)


@dataclass
class Mesh:
    """Periodic uniform tetrahedral mesh.

    Attributes
    ----------
    n : int
        Number of subdivisions per axis; the mesh has n**3 nodes.
    kappa : float
        Edge length of the periodic box.
    vertices : ndarray, shape (n**3, 3)
        Node coordinates, node i at ((i % n), (i // n) % n, i // n**2) * kappa / n.
    elements : ndarray, shape (6 * n**3, 4)
        Node indices per tetrahedron, wrapped periodically.
    element_coords : ndarray, shape (6 * n**3, 4, 3)
        Unwrapped vertex coordinates of each tetrahedron.
    h : float
        Largest element diameter.
    """

    n: int
    kappa: float
    vertices: np.ndarray
    elements: np.ndarray
    element_coords: np.ndarray
    h: float

    @property
    def num_dofs(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    def node_index(self, ix, iy, iz):
        """Map (possibly out-of-range) integer lattice coordinates to a node index."""
        n = self.n
        return (ix % n) + n * (iy % n) + n * n * (iz % n)


def build_mesh(n: int, kappa: float) -> Mesh:
    """Build the periodic Kuhn-split mesh with n subdivisions per axis.

    Parameters
    ----------
    n : int
        Subdivisions per axis, n >= 1.
    kappa : float
        Box edge length, > 0.
    """
    if n < 1:
        raise ValueError(f"mesh subdivision count must be >= 1, got {n}")
    if not kappa > 0.0:
        raise ValueError(f"box edge length must be positive, got {kappa}")

    spacing = kappa / n
    node = np.arange(n ** 3)
    ix = node % n
    iy = (node // n) % n
    iz = node // (n * n)
    vertices = np.stack([ix, iy, iz], axis=1) * spacing

    cube = np.arange(n ** 3)
    corner = np.stack([cube % n, (cube // n) % n, cube // (n * n)], axis=1)

    # Integer corner offsets of the four vertices of each of the six tets.
    offsets = np.zeros((6, 4, 3), dtype=np.int64)
    for m, (p, q, _r, sign) in enumerate(_KUHN_PERMS):
        d1 = np.zeros(3, dtype=np.int64)
        d1[p] = 1
        d2 = d1.copy()
        d2[q] = 1
        if sign > 0:
            offsets[m, 1], offsets[m, 2] = d1, d2
        else:
            offsets[m, 1], offsets[m, 2] = d2, d1
        offsets[m, 3] = 1

    # lattice[c, m, v, :] = corner of cube c plus offset of tet m, vertex v
    lattice = corner[:, None, None, :] + offsets[None, :, :, :]
    lattice = lattice.reshape(-1, 4, 3)
    elements = (lattice[..., 0] % n) + n * (lattice[..., 1] % n) + n * n * (lattice[..., 2] % n)
    element_coords = lattice.astype(np.float64) * spacing

    h = float(np.sqrt(3.0) * spacing)

    for a in (vertices, elements, element_coords):
        a.setflags(write=False)
    return Mesh(n=n, kappa=float(kappa), vertices=vertices, elements=elements,
                element_coords=element_coords, h=h)


def tet_volumes(coords: np.ndarray) -> np.ndarray:
    """Signed volumes det([v1-v0, v2-v0, v3-v0]) / 6 for a (..., 4, 3) array of tets."""
    edges = coords[..., 1:, :] - coords[..., :1, :]
    return np.linalg.det(edges) / 6.0


def interpolation_matrix(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    """Nodal interpolation from the coarse space into a nested fine space.

    Evaluates the coarse piecewise-linear basis at every fine node, so the
    matrix reproduces coarse functions exactly.  Requires fine.n to be a
    multiple of coarse.n and matching box sizes.

    Returns
    -------
    csr_matrix, shape (fine.num_dofs, coarse.num_dofs)
        At most 4 entries per row, each row summing to 1.
    """
    if fine.kappa != coarse.kappa:
        raise ValueError("meshes cover different boxes, cannot interpolate")
    if fine.n % coarse.n != 0:
        raise ValueError(
            f"fine mesh n={fine.n} is not a refinement of coarse n={coarse.n}")

    s = fine.n // coarse.n
    nf = fine.n
    node = np.arange(nf ** 3)
    lat = np.stack([node % nf, (node // nf) % nf, node // (nf * nf)], axis=1)
    cube = lat // s
    t = (lat % s) / float(s)

    # Which Kuhn tet of the coarse cube holds the point: sort local
    # coordinates descending; ties sit on shared faces where the weights
    # of the ambiguous vertices vanish, so any stable order works.
    order = np.argsort(-t, axis=1, kind="stable")
    tsrt = np.take_along_axis(t, order, axis=1)

    w = np.empty((node.size, 4))
    w[:, 0] = 1.0 - tsrt[:, 0]
    w[:, 1] = tsrt[:, 0] - tsrt[:, 1]
    w[:, 2] = tsrt[:, 1] - tsrt[:, 2]
    w[:, 3] = tsrt[:, 2]

    e = np.eye(3, dtype=np.int64)
    v0 = cube
    v1 = v0 + e[order[:, 0]]
    v2 = v1 + e[order[:, 1]]
    v3 = v0 + 1

    nc = coarse.n
    cols = np.empty((node.size, 4), dtype=np.int64)
    for j, v in enumerate((v0, v1, v2, v3)):
        cols[:, j] = (v[:, 0] % nc) + nc * (v[:, 1] % nc) + nc * nc * (v[:, 2] % nc)

    rows = np.repeat(node, 4)
    P = sp.coo_matrix((w.ravel(), (rows, cols.ravel())),
                      shape=(fine.num_dofs, coarse.num_dofs)).tocsr()
    P.eliminate_zeros()
    P.sort_indices()
    return P


def dump_mesh(mesh: Mesh, path) -> None:
    """Write the connectivity as text: a "ntets ndofs" header, then one
    element per line as four node indices.  Debugging aid only."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_elements} {mesh.num_dofs}\n")
        for el in mesh.elements:
            fh.write(f"{el[0]} {el[1]} {el[2]} {el[3]}\n")
