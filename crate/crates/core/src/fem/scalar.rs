//! Scalar diffusion assembly: stiffness for -Div(mu grad phi), forcing
//! terms, boundary flux loads, and the zero-mean Neumann solve shared by
//! the scalar cell problems and the (macro / fine-scale) potential
//! problems.

use crate::error::HomogError;
use crate::fem::fields::ScalarField;
use crate::fem::quadrature::{shape_values, ElementBasis};
use crate::fem::solver::{solve_cg, SolveInfo};
use crate::fem::sparse::SparseMatrix;
use crate::mesh::PeriodicMesh;

/// Stiffness matrix sum_e mu_e int_e grad N_a . grad N_b for an
/// element-wise constant scalar coefficient.
pub fn assemble_scalar_diffusion(mesh: &PeriodicMesh, mu: &[f64]) -> SparseMatrix {
    assemble_scalar_anisotropic(mesh, &|e| {
        let mut m = [[0.0; 3]; 3];
        for a in 0..mesh.d {
            m[a][a] = mu[e];
        }
        m
    })
}

/// Stiffness matrix for a (possibly anisotropic) element-wise constant
/// coefficient matrix M(e): sum_e int_e (M grad N_a) . grad N_b.
pub fn assemble_scalar_anisotropic(
    mesh: &PeriodicMesh,
    coeff: &dyn Fn(usize) -> [[f64; 3]; 3],
) -> SparseMatrix {
    let basis = ElementBasis::new(mesh, 2);
    let nn = mesh.nodes_per_element();
    let mut trip = Vec::with_capacity(mesh.num_elements() * nn * nn);
    for e in 0..mesh.num_elements() {
        let m = coeff(e);
        let nodes = mesh.element_nodes(e);
        let mut ke = [[0.0_f64; 8]; 8];
        for qp in &basis.points {
            for a in 0..nn {
                // (M grad N_a)
                let mut mg = [0.0; 3];
                for i in 0..mesh.d {
                    for j in 0..mesh.d {
                        mg[i] += m[i][j] * qp.grad[a][j];
                    }
                }
                for b in 0..nn {
                    let mut s = 0.0;
                    for i in 0..mesh.d {
                        s += mg[i] * qp.grad[b][i];
                    }
                    ke[a][b] += qp.w * s;
                }
            }
        }
        for a in 0..nn {
            for b in 0..nn {
                trip.push((nodes[a], nodes[b], ke[a][b]));
            }
        }
    }
    let n = mesh.num_nodes();
    SparseMatrix::from_triplets(n, n, trip, true).expect("scalar stiffness is symmetric")
}

/// Load vector f_a = -sum_e mu_e int_e dN_a/dy_axis, the forcing of the
/// scalar cell problem -Div[mu (e_axis + grad omega)] = 0.
pub fn assemble_cell_gradient_rhs(mesh: &PeriodicMesh, mu: &[f64], axis: usize) -> Vec<f64> {
    let basis = ElementBasis::new(mesh, 2);
    let nn = mesh.nodes_per_element();
    let mut rhs = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element_nodes(e);
        for qp in &basis.points {
            for a in 0..nn {
                rhs[nodes[a]] -= qp.w * mu[e] * qp.grad[a][axis];
            }
        }
    }
    rhs
}

/// Neumann load int_{boundary} (k . n) N_a ds on a box mesh.
pub fn assemble_boundary_flux_rhs(
    mesh: &PeriodicMesh,
    k: &dyn Fn(&[f64; 3]) -> [f64; 3],
) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.num_nodes()];
    let gauss = [0.5 - 0.5 / 3.0_f64.sqrt(), 0.5 + 0.5 / 3.0_f64.sqrt()];
    for (e, axis, side) in mesh.boundary_faces() {
        let nodes = mesh.element_nodes(e);
        let origin = mesh.element_origin(e);
        let nrm = mesh.face_normal(axis, side);
        let area = mesh.face_measure(axis);
        let tangents: Vec<usize> = (0..mesh.d).filter(|&a| a != axis).collect();
        // Tensor-product 2-point rule over the face.
        let npts = 1 << tangents.len();
        for q in 0..npts {
            let mut loc = [0.0; 3];
            loc[axis] = side as f64;
            let mut w = area;
            for (t, &ta) in tangents.iter().enumerate() {
                loc[ta] = gauss[(q >> t) & 1];
                w *= 0.5;
            }
            let mut x = [0.0; 3];
            for a in 0..mesh.d {
                x[a] = origin[a] + loc[a] * mesh.h(a);
            }
            let kv = k(&x);
            let kn: f64 = (0..mesh.d).map(|a| kv[a] * nrm[a]).sum();
            let n = shape_values(mesh.d, &loc);
            for a in 0..mesh.nodes_per_element() {
                rhs[nodes[a]] += w * kn * n[a];
            }
        }
    }
    rhs
}

/// Lumped-mass weight of every distinct node (sum of |e|/2^d over
/// adjacent elements). Used for weighted means and nodal L2 norms.
pub fn lumped_node_weights(mesh: &PeriodicMesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.num_nodes()];
    let share = mesh.element_volume() / mesh.nodes_per_element() as f64;
    for e in 0..mesh.num_elements() {
        for &node in &mesh.element_nodes(e)[..mesh.nodes_per_element()] {
            w[node] += share;
        }
    }
    w
}

/// Subtract the weighted mean so the field lies in H^1 / R.
pub fn make_zero_mean(values: &mut [f64], weights: &[f64]) {
    let wsum: f64 = weights.iter().sum();
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    for v in values.iter_mut() {
        *v -= mean;
    }
}

/// Solve the singular Neumann/periodic problem A phi = rhs on the
/// quotient space (kernel = constants) and return the zero-mean field.
pub fn solve_scalar_neumann(
    mesh: &PeriodicMesh,
    a: &SparseMatrix,
    rhs: &[f64],
    tol: f64,
    context: &str,
) -> Result<(ScalarField, SolveInfo), HomogError> {
    let nullspace = vec![vec![1.0; a.nrows]];
    let (mut x, info) = solve_cg(a, rhs, tol, &nullspace, context)?;
    let w = lumped_node_weights(mesh);
    make_zero_mean(&mut x, &w);
    Ok((
        ScalarField {
            mesh: *mesh,
            values: x,
        },
        info,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_mesh, build_unit_cell_mesh};

    #[test]
    fn constant_kernel() {
        let mesh = build_unit_cell_mesh(2, 4).unwrap();
        let mu = vec![1.0; mesh.num_elements()];
        let a = assemble_scalar_diffusion(&mesh, &mu);
        // Row sums are zero: constants lie in the kernel.
        let ones = vec![1.0; a.nrows];
        let mut y = vec![0.0; a.nrows];
        a.matvec(&ones, &mut y);
        for v in y {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn scaling_linearity() {
        let mesh = build_unit_cell_mesh(2, 6).unwrap();
        let mu1 = vec![1.0; mesh.num_elements()];
        let muc = vec![3.7; mesh.num_elements()];
        let a1 = assemble_scalar_diffusion(&mesh, &mu1);
        let ac = assemble_scalar_diffusion(&mesh, &muc);
        for (v1, vc) in a1.vals.iter().zip(&ac.vals) {
            assert!((vc - 3.7 * v1).abs() < 1e-14);
        }
    }

    #[test]
    fn layered_matrix_is_symmetric() {
        let mesh = build_unit_cell_mesh(2, 8).unwrap();
        let mu: Vec<f64> = (0..mesh.num_elements())
            .map(|e| {
                if mesh.element_centroid(e)[0] < 0.5 {
                    1.0
                } else {
                    3.0
                }
            })
            .collect();
        let a = assemble_scalar_diffusion(&mesh, &mu);
        assert!(a.symmetry_deviation() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn cell_gradient_rhs_vanishes_for_constant_mu() {
        // With mu constant, mu * e_i is divergence-free on the torus:
        // the load is exactly zero (periodic cancellation).
        let mesh = build_unit_cell_mesh(2, 4).unwrap();
        let mu = vec![2.0; mesh.num_elements()];
        let rhs = assemble_cell_gradient_rhs(&mesh, &mu, 0);
        for v in rhs {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn boundary_flux_of_solenoidal_field_sums_to_zero() {
        let mesh = build_box_mesh(2, &[1.0, 1.0], 8).unwrap();
        let rhs = assemble_boundary_flux_rhs(&mesh, &|_x| [1.0, 0.0, 0.0]);
        let total: f64 = rhs.iter().sum();
        assert!(total.abs() < 1e-13, "constant k has zero net flux");
        // And the load is supported on the two x-faces with opposite
        // sign, total magnitude |int_{x=1} N| = 1.
        let pos: f64 = rhs.iter().filter(|&&v| v > 0.0).sum();
        assert!((pos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lumped_weights_sum_to_domain_volume() {
        for periodic in [true, false] {
            let mesh = if periodic {
                build_unit_cell_mesh(2, 6).unwrap()
            } else {
                build_box_mesh(2, &[2.0, 1.0], 6).unwrap()
            };
            let w = lumped_node_weights(&mesh);
            let s: f64 = w.iter().sum();
            assert!((s - mesh.domain_volume()).abs() < 1e-12);
        }
    }
}
