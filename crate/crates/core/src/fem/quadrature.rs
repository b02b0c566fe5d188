//! Q1 shape functions and tensor-product Gauss quadrature on the
//! reference element [0,1]^d. All meshes here are uniform, so one
//! precomputed basis serves every element.

use crate::mesh::PeriodicMesh;

/// One quadrature point: physical weight, shape values, and physical
/// gradients of the up-to-8 local basis functions.
#[derive(Debug, Clone)]
pub struct QuadPoint {
    /// Reference coordinates in [0,1]^d.
    pub loc: [f64; 3],
    /// Physical weight (includes the element volume Jacobian).
    pub w: f64,
    pub n: [f64; 8],
    pub grad: [[f64; 3]; 8],
}

/// Precomputed element basis at the quadrature points.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub d: usize,
    pub nodes: usize,
    pub points: Vec<QuadPoint>,
}

/// 1D Gauss rule on [0,1].
fn gauss_1d(npts: usize) -> Vec<(f64, f64)> {
    match npts {
        1 => vec![(0.5, 1.0)],
        2 => {
            let a = 0.5 / 3.0_f64.sqrt();
            vec![(0.5 - a, 0.5), (0.5 + a, 0.5)]
        }
        3 => {
            let a = 0.5 * 0.6_f64.sqrt();
            vec![
                (0.5 - a, 5.0 / 18.0),
                (0.5, 8.0 / 18.0),
                (0.5 + a, 5.0 / 18.0),
            ]
        }
        _ => panic!("unsupported Gauss rule: {npts}"),
    }
}

/// Shape values of the 2^d local basis functions at reference `loc`.
/// Local numbering: `local = dx + 2*dy + 4*dz`.
pub fn shape_values(d: usize, loc: &[f64; 3]) -> [f64; 8] {
    let mut n = [0.0; 8];
    for local in 0..(1 << d) {
        let mut v = 1.0;
        for a in 0..d {
            let bit = (local >> a) & 1;
            v *= if bit == 1 { loc[a] } else { 1.0 - loc[a] };
        }
        n[local] = v;
    }
    n
}

/// Physical gradients of the local basis functions at reference `loc`
/// for an element with spacings `h`.
pub fn shape_gradients(d: usize, loc: &[f64; 3], h: &[f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for local in 0..(1 << d) {
        for a in 0..d {
            let mut v = 1.0;
            for b in 0..d {
                let bit = (local >> b) & 1;
                if b == a {
                    v *= if bit == 1 { 1.0 } else { -1.0 };
                } else {
                    v *= if bit == 1 { loc[b] } else { 1.0 - loc[b] };
                }
            }
            g[local][a] = v / h[a];
        }
    }
    g
}

impl ElementBasis {
    /// Basis with `npts` Gauss points per axis on the (uniform)
    /// elements of `mesh`.
    pub fn new(mesh: &PeriodicMesh, npts: usize) -> Self {
        let d = mesh.d;
        let h = [mesh.h(0), mesh.h(1), if d == 3 { mesh.h(2) } else { 1.0 }];
        let rule = gauss_1d(npts);
        let vol = mesh.element_volume();
        let mut points = Vec::new();
        let npz = if d == 3 { npts } else { 1 };
        for kz in 0..npz {
            for ky in 0..npts {
                for kx in 0..npts {
                    let (px, wx) = rule[kx];
                    let (py, wy) = rule[ky];
                    let (pz, wz) = if d == 3 { rule[kz] } else { (0.0, 1.0) };
                    let loc = [px, py, pz];
                    points.push(QuadPoint {
                        loc,
                        w: wx * wy * wz * vol,
                        n: shape_values(d, &loc),
                        grad: shape_gradients(d, &loc, &h),
                    });
                }
            }
        }
        ElementBasis {
            d,
            nodes: 1 << d,
            points,
        }
    }
}
