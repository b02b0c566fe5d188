//! Structured Q1 meshes: the periodic unit cell Y = (0,1)^d and
//! non-periodic box domains for the macro / fine-scale problems.
//!
//! Meshes are uniform tensor grids, so nothing is stored besides the
//! resolution: coordinates, connectivity and the periodic node
//! identification are all computed on the fly. Distinct (master) node
//! ids already have the periodic identification folded in, which makes
//! periodicity exact by construction in every assembled system.

use crate::error::HomogError;

/// Structured mesh of a d-dimensional box, optionally with periodic
/// identification of opposite faces (unit-cell meshes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicMesh {
    /// Spatial dimension, 2 or 3.
    pub d: usize,
    /// Elements per axis; `n[2] == 1` in 2D.
    pub n: [usize; 3],
    /// Domain extent per axis; `lengths[2] == 1.0` in 2D (unused).
    pub lengths: [f64; 3],
    /// Whether opposite faces are identified (unit-cell mesh).
    pub periodic: bool,
}

/// Uniform periodic mesh of the unit cell Y = (0,1)^d.
pub fn build_unit_cell_mesh(d: usize, n: usize) -> Result<PeriodicMesh, HomogError> {
    if d != 2 && d != 3 {
        return Err(HomogError::ValidationError(format!(
            "dimension must be 2 or 3, got {d}"
        )));
    }
    if n < 4 {
        return Err(HomogError::InvalidResolution(format!(
            "unit cell needs n >= 4, got {n}"
        )));
    }
    let nz = if d == 3 { n } else { 1 };
    Ok(PeriodicMesh {
        d,
        n: [n, n, nz],
        lengths: [1.0, 1.0, 1.0],
        periodic: true,
    })
}

/// Non-periodic mesh of the box domain prod_k (0, L_k) with n elements
/// per axis.
pub fn build_box_mesh(d: usize, lengths: &[f64], n: usize) -> Result<PeriodicMesh, HomogError> {
    if d != 2 && d != 3 {
        return Err(HomogError::ValidationError(format!(
            "dimension must be 2 or 3, got {d}"
        )));
    }
    if lengths.len() != d {
        return Err(HomogError::ValidationError(format!(
            "expected {d} lengths, got {}",
            lengths.len()
        )));
    }
    if n < 4 {
        return Err(HomogError::InvalidResolution(format!(
            "box mesh needs n >= 4, got {n}"
        )));
    }
    let mut l = [1.0, 1.0, 1.0];
    for (k, &lk) in lengths.iter().enumerate() {
        if !(lk > 0.0) || !lk.is_finite() {
            return Err(HomogError::InvalidResolution(format!(
                "box length {k} must be positive, got {lk}"
            )));
        }
        l[k] = lk;
    }
    let nz = if d == 3 { n } else { 1 };
    Ok(PeriodicMesh {
        d,
        n: [n, n, nz],
        lengths: l,
        periodic: false,
    })
}

impl PeriodicMesh {
    /// Grid spacing along `axis`.
    #[inline]
    pub fn h(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.n[axis] as f64
    }

    /// Volume (area in 2D) of every element.
    #[inline]
    pub fn element_volume(&self) -> f64 {
        (0..self.d).map(|a| self.h(a)).product()
    }

    /// Total domain measure.
    pub fn domain_volume(&self) -> f64 {
        (0..self.d).map(|a| self.lengths[a]).product()
    }

    /// Number of elements.
    #[inline]
    pub fn num_elements(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Distinct nodes per axis (after periodic identification).
    #[inline]
    pub fn nodes_per_axis(&self) -> [usize; 3] {
        let mut np = [1, 1, 1];
        for a in 0..self.d {
            np[a] = if self.periodic { self.n[a] } else { self.n[a] + 1 };
        }
        np
    }

    /// Number of distinct nodes.
    pub fn num_nodes(&self) -> usize {
        let np = self.nodes_per_axis();
        np[0] * np[1] * np[2]
    }

    /// Nodes per element (4 quad, 8 hex).
    #[inline]
    pub fn nodes_per_element(&self) -> usize {
        1 << self.d
    }

    /// Flat element index from per-axis element coordinates.
    #[inline]
    pub fn element_index(&self, c: [usize; 3]) -> usize {
        debug_assert!(c[0] < self.n[0] && c[1] < self.n[1] && c[2] < self.n[2]);
        c[0] + self.n[0] * (c[1] + self.n[1] * c[2])
    }

    /// Per-axis element coordinates from the flat index.
    #[inline]
    pub fn element_coords(&self, e: usize) -> [usize; 3] {
        let i = e % self.n[0];
        let j = (e / self.n[0]) % self.n[1];
        let k = e / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    /// Low corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [f64; 3] {
        let c = self.element_coords(e);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = c[a] as f64 * self.h(a);
        }
        x
    }

    /// Centroid of element `e`.
    pub fn element_centroid(&self, e: usize) -> [f64; 3] {
        let c = self.element_coords(e);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = (c[a] as f64 + 0.5) * self.h(a);
        }
        x
    }

    /// Distinct node id for logical grid coordinates (which may sit on
    /// the far faces of a periodic mesh; they wrap to their masters).
    #[inline]
    pub fn node_index(&self, mut g: [usize; 3]) -> usize {
        let np = self.nodes_per_axis();
        if self.periodic {
            for a in 0..self.d {
                if g[a] == self.n[a] {
                    g[a] = 0;
                }
            }
        }
        debug_assert!(g[0] < np[0] && g[1] < np[1] && g[2] < np[2]);
        g[0] + np[0] * (g[1] + np[1] * g[2])
    }

    /// Per-axis grid coordinates of a distinct node.
    #[inline]
    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let np = self.nodes_per_axis();
        [node % np[0], (node / np[0]) % np[1], node / (np[0] * np[1])]
    }

    /// Coordinates of a distinct node (masters live on the low faces).
    pub fn node_position(&self, node: usize) -> [f64; 3] {
        let g = self.node_coords(node);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = g[a] as f64 * self.h(a);
        }
        x
    }

    /// Distinct node ids of the corners of element `e`, in local order
    /// `local = dx + 2*dy + 4*dz`.
    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let c = self.element_coords(e);
        let mut out = [0usize; 8];
        let count = self.nodes_per_element();
        for local in 0..count {
            let g = [
                c[0] + (local & 1),
                c[1] + ((local >> 1) & 1),
                c[2] + ((local >> 2) & 1),
            ];
            out[local] = self.node_index(g);
        }
        out
    }

    /// True if the distinct node lies on the outer boundary (box meshes
    /// only; periodic meshes have no boundary).
    pub fn is_boundary_node(&self, node: usize) -> bool {
        if self.periodic {
            return false;
        }
        let g = self.node_coords(node);
        (0..self.d).any(|a| g[a] == 0 || g[a] == self.n[a])
    }

    /// Boundary faces of a box mesh as (element, axis, side) with
    /// side 0 = low face, 1 = high face. Empty for periodic meshes.
    pub fn boundary_faces(&self) -> Vec<(usize, usize, usize)> {
        let mut faces = Vec::new();
        if self.periodic {
            return faces;
        }
        for e in 0..self.num_elements() {
            let c = self.element_coords(e);
            for a in 0..self.d {
                if c[a] == 0 {
                    faces.push((e, a, 0));
                }
                if c[a] == self.n[a] - 1 {
                    faces.push((e, a, 1));
                }
            }
        }
        faces
    }

    /// Outward unit normal of a boundary face.
    pub fn face_normal(&self, axis: usize, side: usize) -> [f64; 3] {
        let mut nrm = [0.0; 3];
        nrm[axis] = if side == 0 { -1.0 } else { 1.0 };
        nrm
    }

    /// Measure of a boundary face normal to `axis` (length in 2D,
    /// area in 3D).
    pub fn face_measure(&self, axis: usize) -> f64 {
        (0..self.d).filter(|&a| a != axis).map(|a| self.h(a)).product()
    }

    /// Element containing point `x` (clamped to the domain) together
    /// with local coordinates in [0,1]^d.
    pub fn locate(&self, x: &[f64; 3]) -> (usize, [f64; 3]) {
        let mut c = [0usize; 3];
        let mut loc = [0.0; 3];
        for a in 0..self.d {
            let h = self.h(a);
            let s = (x[a] / h).floor();
            let i = (s as isize).clamp(0, self.n[a] as isize - 1) as usize;
            c[a] = i;
            loc[a] = ((x[a] - i as f64 * h) / h).clamp(0.0, 1.0);
        }
        (self.element_index(c), loc)
    }
}
