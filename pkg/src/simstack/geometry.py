"""Transmit-array and metasurface-layer geometry.

A transmitter is a small uniform planar array (UPA) at z = 0 feeding a stack
of L programmable metasurface layers. Layer l sits at z = sigma + (l-1)*s,
where sigma is the array-to-first-layer standoff and s the inter-layer
spacing. Meta-atoms on each layer form a centered rectangular grid; the 2-D
cell (q_x, q_y) maps to the 1-D index q = q_x * qy_count + q_y (row-major).

All coordinates and lengths are in meters.
"""

from dataclasses import dataclass
import math

import numpy as np

# propagation speed used to convert carrier frequency to wavelength
C0 = 3.0e8


@dataclass(frozen=True)
class LayerGrid:
    """One metasurface layer: a qx_count x qy_count grid with pitch `spacing`,
    centered on the stack axis, at distance `z_offset` from the array plane."""

    qx_count: int
    qy_count: int
    spacing: float
    z_offset: float

    def __post_init__(self):
        if self.qx_count < 1 or self.qy_count < 1:
            raise ValueError("grid counts must be >= 1")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if self.z_offset <= 0:
            raise ValueError("layer z_offset must be positive")

    @property
    def count(self):
        return self.qx_count * self.qy_count

    def atom_index(self, qx, qy):
        if not (0 <= qx < self.qx_count and 0 <= qy < self.qy_count):
            raise IndexError(f"cell ({qx}, {qy}) outside {self.qx_count}x{self.qy_count} grid")
        return qx * self.qy_count + qy

    def atom_cell(self, q):
        """Inverse of atom_index."""
        if not (0 <= q < self.count):
            raise IndexError(f"atom index {q} out of range for {self.count} cells")
        return divmod(q, self.qy_count)

    def atom_position(self, q):
        """Transverse (x, y) of atom q; the grid centroid sits at (0, 0)."""
        qx, qy = self.atom_cell(q)
        x = (qx - (self.qx_count - 1) / 2.0) * self.spacing
        y = (qy - (self.qy_count - 1) / 2.0) * self.spacing
        return (x, y)

    def positions(self):
        """All atom coordinates as a (count, 2) array, in index order."""
        xs = (np.arange(self.qx_count) - (self.qx_count - 1) / 2.0) * self.spacing
        ys = (np.arange(self.qy_count) - (self.qy_count - 1) / 2.0) * self.spacing
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _centered_square_array(n, spacing):
    # most-square factorization: n=4 -> 2x2, n=2 -> 1x2 line
    rows = math.isqrt(n)
    while n % rows:
        rows -= 1
    cols = n // rows
    xs = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    ys = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return tuple((float(x), float(y)) for x, y in zip(gx.ravel(), gy.ravel()))


@dataclass(frozen=True)
class SimGeometry:
    """Immutable description of the full transmitter geometry.

    array_positions      transverse (x, y) of the N antennas at z = 0
    array_to_first_layer standoff sigma between array and layer 1
    inter_layer_spacing  spacing s between consecutive layers
    layers               L LayerGrid entries, z_offset = sigma + (l-1)*s
    carrier_frequency    f0 in Hz; wavelength = C0 / f0
    antenna_effective_area / meta_atom_area
                         radiating areas entering the coupling coefficients
    antenna_spacing      UPA pitch (kept for bookkeeping/serialization)
    """

    array_positions: tuple
    array_to_first_layer: float
    inter_layer_spacing: float
    layers: tuple
    carrier_frequency: float
    antenna_effective_area: float
    meta_atom_area: float
    antenna_spacing: float

    def __post_init__(self):
        if len(self.layers) == 0:
            raise ValueError("geometry needs at least one layer")
        if self.array_to_first_layer <= 0 or self.inter_layer_spacing <= 0:
            raise ValueError("axial spacings must be positive")
        if self.carrier_frequency <= 0:
            raise ValueError("carrier frequency must be positive")
        if self.antenna_effective_area <= 0 or self.meta_atom_area <= 0:
            raise ValueError("radiating areas must be positive")
        sigma, s = self.array_to_first_layer, self.inter_layer_spacing
        for i, grid in enumerate(self.layers):
            expect = sigma + i * s
            if abs(grid.z_offset - expect) > 1e-9 * max(1.0, expect):
                raise ValueError(
                    f"layer {i + 1} z_offset {grid.z_offset} != sigma + {i}*s = {expect}")

    @property
    def n_antennas(self):
        return len(self.array_positions)

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def wavelength(self):
        return C0 / self.carrier_frequency

    def antenna_xy(self):
        return np.asarray(self.array_positions, dtype=float)


def make_geometry(n_antennas, antenna_spacing, array_to_first_layer,
                  inter_layer_spacing, n_layers, layer_cells, cell_spacing,
                  carrier_frequency, antenna_effective_area, meta_atom_area):
    """Build a SimGeometry from scalar parameters (all lengths in meters).

    layer_cells is either one (qx, qy) pair used for every layer, or a
    sequence of n_layers pairs for per-layer cell counts.
    """
    if np.isscalar(layer_cells[0]):
        cells = [tuple(layer_cells)] * n_layers
    else:
        cells = [tuple(c) for c in layer_cells]
    if len(cells) != n_layers:
        raise ValueError(f"{len(cells)} cell-count pairs for {n_layers} layers")
    grids = tuple(
        LayerGrid(qx, qy, cell_spacing,
                  array_to_first_layer + i * inter_layer_spacing)
        for i, (qx, qy) in enumerate(cells))
    return SimGeometry(
        array_positions=_centered_square_array(n_antennas, antenna_spacing),
        array_to_first_layer=array_to_first_layer,
        inter_layer_spacing=inter_layer_spacing,
        layers=grids,
        carrier_frequency=carrier_frequency,
        antenna_effective_area=antenna_effective_area,
        meta_atom_area=meta_atom_area,
        antenna_spacing=antenna_spacing,
    )


def pairwise_distance_array_to_layer(geometry, n, q):
    """Distance from antenna n to atom q of the first layer:
    sqrt((xq - xn)^2 + (yq - yn)^2 + sigma^2) >= sigma."""
    xn, yn = geometry.array_positions[n]
    xq, yq = geometry.layers[0].atom_position(q)
    sigma = geometry.array_to_first_layer
    return math.sqrt((xq - xn) ** 2 + (yq - yn) ** 2 + sigma ** 2)


def pairwise_distance_layer_to_layer(geometry, ell, q_prev, q):
    """Distance from atom q_prev on layer ell-1 to atom q on layer ell
    (ell is 1-based, ell >= 2): sqrt(dx^2 + dy^2 + s^2) >= s."""
    if not (2 <= ell <= geometry.n_layers):
        raise IndexError(f"layer index {ell} out of range 2..{geometry.n_layers}")
    xa, ya = geometry.layers[ell - 2].atom_position(q_prev)
    xb, yb = geometry.layers[ell - 1].atom_position(q)
    s = geometry.inter_layer_spacing
    return math.sqrt((xb - xa) ** 2 + (yb - ya) ** 2 + s ** 2)


def transverse_distances(src_xy, dst_xy, axial):
    """(len(src), len(dst)) matrix of 3-D distances between two parallel
    planes separated by `axial`."""
    dx = dst_xy[None, :, 0] - src_xy[:, None, 0]
    dy = dst_xy[None, :, 1] - src_xy[:, None, 1]
    return np.sqrt(dx * dx + dy * dy + axial * axial)
