"""Legacy ASCII VTK output for simplicial meshes."""

import numpy as np

_CELL_TYPE = {2: 5, 3: 10}  # triangle, tetrahedron


def write_vtk(path, mesh, cell_data=None, point_data=None, title="mtfem mesh"):
    """Write ``mesh`` as a VTK 2.0 unstructured grid with optional scalar
    fields (dicts of name -> array)."""
    cell_data = cell_data or {}
    point_data = point_data or {}
    V = mesh.vertices
    pts = np.zeros((V.shape[0], 3))
    pts[:, : mesh.dim] = V
    nc, k = mesh.cells.shape
    lines = ["# vtk DataFile Version 2.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {pts.shape[0]} double")
    lines.extend(" ".join(f"{c:.16g}" for c in p) for p in pts)
    lines.append(f"CELLS {nc} {nc * (k + 1)}")
    lines.extend(f"{k} " + " ".join(str(int(i)) for i in c) for c in mesh.cells)
    lines.append(f"CELL_TYPES {nc}")
    lines.extend([str(_CELL_TYPE[mesh.dim])] * nc)
    if cell_data:
        lines.append(f"CELL_DATA {nc}")
        for name, vals in cell_data.items():
            vals = np.asarray(vals, dtype=float).ravel()
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.10g}" for v in vals)
    if point_data:
        lines.append(f"POINT_DATA {pts.shape[0]}")
        for name, vals in point_data.items():
            vals = np.asarray(vals, dtype=float).ravel()
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.10g}" for v in vals)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_vtk_counts(path):
    """Number of points and cells in a legacy file written by
    :func:`write_vtk` (used for round-trip checks)."""
    npts = ncells = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("POINTS"):
                npts = int(line.split()[1])
            elif line.startswith("CELLS"):
                ncells = int(line.split()[1])
    return npts, ncells
