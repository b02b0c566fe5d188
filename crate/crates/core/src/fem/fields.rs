//! Nodal fields with point evaluation and gradient evaluation through
//! the Q1 shape functions. Periodic fields wrap their argument into the
//! unit cell before lookup.

use crate::fem::quadrature::{shape_gradients, shape_values};
use crate::mesh::PeriodicMesh;

/// Scalar Q1 field: one value per distinct node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub mesh: PeriodicMesh,
    pub values: Vec<f64>,
}

/// Vector Q1 field: `d` interleaved values per distinct node
/// (`dof = node * d + comp`).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub mesh: PeriodicMesh,
    pub values: Vec<f64>,
}

fn wrap(mesh: &PeriodicMesh, x: &[f64; 3]) -> [f64; 3] {
    let mut y = *x;
    if mesh.periodic {
        for a in 0..mesh.d {
            y[a] = y[a].rem_euclid(mesh.lengths[a]);
        }
    }
    y
}

fn spacings(mesh: &PeriodicMesh) -> [f64; 3] {
    [
        mesh.h(0),
        mesh.h(1),
        if mesh.d == 3 { mesh.h(2) } else { 1.0 },
    ]
}

impl ScalarField {
    pub fn zeros(mesh: PeriodicMesh) -> Self {
        let n = mesh.num_nodes();
        ScalarField {
            mesh,
            values: vec![0.0; n],
        }
    }

    /// Value inside element `e` at reference coordinates `loc`.
    pub fn eval_local(&self, e: usize, loc: &[f64; 3]) -> f64 {
        let n = shape_values(self.mesh.d, loc);
        let nodes = self.mesh.element_nodes(e);
        (0..self.mesh.nodes_per_element())
            .map(|a| n[a] * self.values[nodes[a]])
            .sum()
    }

    /// Gradient inside element `e` at reference coordinates `loc`.
    pub fn grad_local(&self, e: usize, loc: &[f64; 3]) -> [f64; 3] {
        let h = spacings(&self.mesh);
        let g = shape_gradients(self.mesh.d, loc, &h);
        let nodes = self.mesh.element_nodes(e);
        let mut out = [0.0; 3];
        for a in 0..self.mesh.nodes_per_element() {
            let v = self.values[nodes[a]];
            for k in 0..self.mesh.d {
                out[k] += v * g[a][k];
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        let y = wrap(&self.mesh, x);
        let (e, loc) = self.mesh.locate(&y);
        self.eval_local(e, &loc)
    }

    pub fn grad(&self, x: &[f64; 3]) -> [f64; 3] {
        let y = wrap(&self.mesh, x);
        let (e, loc) = self.mesh.locate(&y);
        self.grad_local(e, &loc)
    }
}

impl VectorField {
    pub fn zeros(mesh: PeriodicMesh) -> Self {
        let n = mesh.num_nodes() * mesh.d;
        VectorField {
            mesh,
            values: vec![0.0; n],
        }
    }

    pub fn eval_local(&self, e: usize, loc: &[f64; 3]) -> [f64; 3] {
        let d = self.mesh.d;
        let n = shape_values(d, loc);
        let nodes = self.mesh.element_nodes(e);
        let mut out = [0.0; 3];
        for a in 0..self.mesh.nodes_per_element() {
            for k in 0..d {
                out[k] += n[a] * self.values[nodes[a] * d + k];
            }
        }
        out
    }

    /// Full gradient tensor grad[i][j] = du_i/dx_j at (e, loc).
    pub fn grad_local(&self, e: usize, loc: &[f64; 3]) -> [[f64; 3]; 3] {
        let d = self.mesh.d;
        let h = spacings(&self.mesh);
        let g = shape_gradients(d, loc, &h);
        let nodes = self.mesh.element_nodes(e);
        let mut out = [[0.0; 3]; 3];
        for a in 0..self.mesh.nodes_per_element() {
            for i in 0..d {
                let v = self.values[nodes[a] * d + i];
                for j in 0..d {
                    out[i][j] += v * g[a][j];
                }
            }
        }
        out
    }

    /// Symmetric gradient D(u) = (grad u + grad u^T) / 2 at (e, loc).
    pub fn strain_local(&self, e: usize, loc: &[f64; 3]) -> [[f64; 3]; 3] {
        let g = self.grad_local(e, loc);
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = 0.5 * (g[i][j] + g[j][i]);
            }
        }
        s
    }

    pub fn eval(&self, x: &[f64; 3]) -> [f64; 3] {
        let y = wrap(&self.mesh, x);
        let (e, loc) = self.mesh.locate(&y);
        self.eval_local(e, &loc)
    }

    pub fn strain(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let y = wrap(&self.mesh, x);
        let (e, loc) = self.mesh.locate(&y);
        self.strain_local(e, &loc)
    }
}
