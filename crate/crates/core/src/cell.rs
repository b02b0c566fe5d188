//! Unit-cell problems and effective tensors.
//!
//! Three families of periodic cell problems are solved on Y = (0,1)^d:
//!  * scalar potential correctors omega^i:  -Div[mu (e^i + grad omega^i)] = 0,
//!  * viscous correctors (chi^ij, q^ij):    Div[D(P^ij - chi^ij) - q^ij I] = 0
//!    in Y_f with P^ij - chi^ij rigid in Y_s,
//!  * magnetic stress correctors (xi^ij, r^ij):
//!    Div[D(xi^ij) - r^ij I + tau^ij] = 0 in Y_f, xi^ij rigid in Y_s,
//! from which the effective permeability mu_eff, the effective
//! viscosity N (energy form) and the magneto-viscous coupling B^ij are
//! assembled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::HomogError;
use crate::fem::fields::{ScalarField, VectorField};
use crate::fem::quadrature::ElementBasis;
use crate::fem::scalar::{
    assemble_cell_gradient_rhs, assemble_scalar_diffusion, solve_scalar_neumann,
};
use crate::fem::solver::SolveInfo;
use crate::fem::stokes::{
    assemble_divergence, assemble_pressure_stab, assemble_strain_forcing, assemble_viscous,
    build_stokes_dofs, energy_identity, pressure_nullspace, reduce_saddle, rigid_motion,
    solve_saddle, translation_nullspace, EnergyCheck, Rank4, RigidMode, RigidMotion, StokesDofs,
    ViscousCoeff, PENALTY_FACTOR,
};
use crate::material::MaterialField;
use crate::mesh::PeriodicMesh;

/// Independent index pairs (i <= j) in solve order.
pub fn index_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..d {
        for j in i..d {
            v.push((i, j));
        }
    }
    v
}

/// P^ij_k(y) = y_j delta_ik.
pub fn p_tensor(i: usize, j: usize, y: &[f64; 3]) -> [f64; 3] {
    let mut p = [0.0; 3];
    p[i] = y[j];
    p
}

/// Q^ij = D(P^ij): Q^ij_mn = (d_im d_jn + d_in d_jm) / 2.
pub fn q_tensor(i: usize, j: usize) -> [[f64; 3]; 3] {
    let mut q = [[0.0; 3]; 3];
    q[i][j] += 0.5;
    q[j][i] += 0.5;
    q
}

#[derive(Debug, Clone)]
pub struct ScalarCellSolution {
    pub axis: usize,
    pub omega: ScalarField,
    pub info: SolveInfo,
}

#[derive(Debug, Clone)]
pub struct ViscousCellSolution {
    pub i: usize,
    pub j: usize,
    pub chi: VectorField,
    pub q: ScalarField,
    pub rigid: Option<RigidMotion>,
    pub energy: EnergyCheck,
    pub info: SolveInfo,
}

#[derive(Debug, Clone)]
pub struct MagneticCellSolution {
    pub i: usize,
    pub j: usize,
    pub xi: VectorField,
    pub r: ScalarField,
    pub rigid: Option<RigidMotion>,
    pub energy: EnergyCheck,
    pub info: SolveInfo,
}

/// All cell solutions on one mesh/material.
pub struct CellSolutionSet {
    pub mesh: PeriodicMesh,
    pub material: MaterialField,
    pub mode: RigidMode,
    pub tol: f64,
    pub scalar: Vec<ScalarCellSolution>,
    /// Independent pairs in `index_pairs` order.
    pub viscous: Vec<ViscousCellSolution>,
    pub magnetic: Vec<MagneticCellSolution>,
}

impl CellSolutionSet {
    fn pair_slot(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        index_pairs(self.mesh.d)
            .iter()
            .position(|&p| p == (a, b))
            .expect("valid index pair")
    }

    /// chi^ij = chi^ji: the (j,i) solution is the stored (i,j) one.
    pub fn viscous(&self, i: usize, j: usize) -> &ViscousCellSolution {
        &self.viscous[self.pair_slot(i, j)]
    }

    pub fn magnetic(&self, i: usize, j: usize) -> &MagneticCellSolution {
        &self.magnetic[self.pair_slot(i, j)]
    }
}

/// Solve the scalar cell problem for axis `i`.
pub fn solve_scalar_cell(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    axis: usize,
    tol: f64,
) -> Result<ScalarCellSolution, HomogError> {
    let a = assemble_scalar_diffusion(mesh, &material.mu);
    let rhs = assemble_cell_gradient_rhs(mesh, &material.mu, axis);
    let (omega, info) =
        solve_scalar_neumann(mesh, &a, &rhs, tol, &format!("scalar cell problem omega^{axis}"))?;
    Ok(ScalarCellSolution { axis, omega, info })
}

/// tau^ij = mu [(e^i + grad omega^i) x (e^j + grad omega^j)
///              - (1/2) (e^i + grad omega^i).(e^j + grad omega^j) I]
/// evaluated inside element `e` at reference coordinates `loc`.
pub fn tau_at(
    material: &MaterialField,
    scalars: &[ScalarCellSolution],
    i: usize,
    j: usize,
    e: usize,
    loc: &[f64; 3],
) -> [[f64; 3]; 3] {
    let d = scalars[i].omega.mesh.d;
    let gi = scalars[i].omega.grad_local(e, loc);
    let gj = scalars[j].omega.grad_local(e, loc);
    let mut mi = gi;
    let mut mj = gj;
    mi[i] += 1.0;
    mj[j] += 1.0;
    let mut dotp = 0.0;
    for a in 0..d {
        dotp += mi[a] * mj[a];
    }
    let mu = material.mu[e];
    let mut t = [[0.0; 3]; 3];
    for a in 0..d {
        for b in 0..d {
            t[a][b] = mu * mi[a] * mj[b];
        }
        t[a][a] -= 0.5 * mu * dotp;
    }
    t
}

/// Effective permeability by both the symmetric (energy) and the
/// linear-average formulas.
#[derive(Debug, Clone, Serialize)]
pub struct MuEffResult {
    /// Symmetric form (the reported value).
    pub value: [[f64; 3]; 3],
    /// Linear-average form mu_eff e_k = <mu (e_k + grad omega^k)>.
    pub linear: [[f64; 3]; 3],
    /// Max entrywise disagreement of the two formulas.
    pub mismatch: f64,
}

pub fn compute_mu_eff(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    scalars: &[ScalarCellSolution],
) -> Result<MuEffResult, HomogError> {
    let d = mesh.d;
    let basis = ElementBasis::new(mesh, 2);
    let mut sym = [[0.0; 3]; 3];
    let mut lin = [[0.0; 3]; 3];
    for e in 0..mesh.num_elements() {
        let mu = material.mu[e];
        for qp in &basis.points {
            let mut m = [[0.0; 3]; 3]; // m[k] = e_k + grad omega^k
            for k in 0..d {
                m[k] = scalars[k].omega.grad_local(e, &qp.loc);
                m[k][k] += 1.0;
            }
            for jj in 0..d {
                for k in 0..d {
                    let mut dotp = 0.0;
                    for a in 0..d {
                        dotp += m[jj][a] * m[k][a];
                    }
                    sym[jj][k] += qp.w * mu * dotp;
                    lin[jj][k] += qp.w * mu * m[k][jj];
                }
            }
        }
    }
    let mut mismatch = 0.0_f64;
    for jj in 0..d {
        for k in 0..d {
            mismatch = mismatch.max((sym[jj][k] - lin[jj][k]).abs());
        }
    }
    if mismatch > 1e-6 {
        return Err(HomogError::FormulaMismatch(format!(
            "permeability formulas disagree by {mismatch:.3e} (under-converged cell solve?)"
        )));
    }
    Ok(MuEffResult {
        value: sym,
        linear: lin,
        mismatch,
    })
}

fn viscous_coefficients(material: &MaterialField, mode: RigidMode) -> Vec<f64> {
    material
        .solid
        .iter()
        .map(|&s| {
            if !s {
                1.0
            } else if mode == RigidMode::Penalty {
                PENALTY_FACTOR
            } else {
                0.0
            }
        })
        .collect()
}

fn cell_nullspace(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    dofs: &StokesDofs,
    mode: RigidMode,
) -> Vec<Vec<f64>> {
    let mut null = translation_nullspace(mesh, dofs);
    // Constant pressure is in the discrete kernel only when the
    // divergence form annihilates constants (no free velocity on the
    // staircase interface).
    if mode == RigidMode::Eliminate || !material.has_solid() {
        null.push(pressure_nullspace(dofs));
    }
    null
}

/// Lumped node weights restricted to fluid elements (pressure lives in
/// L^2 of the fluid region).
pub fn fluid_pressure_weights(mesh: &PeriodicMesh, fluid: &[bool]) -> Vec<f64> {
    let mut w = vec![0.0; mesh.num_nodes()];
    let share = mesh.element_volume() / mesh.nodes_per_element() as f64;
    for e in 0..mesh.num_elements() {
        if fluid[e] {
            for &node in &mesh.element_nodes(e)[..mesh.nodes_per_element()] {
                w[node] += share;
            }
        }
    }
    w
}

/// Subtract the fluid-region mean from a pressure field without
/// touching excluded (solid-interior) nodes.
pub fn zero_mean_pressure(values: &mut [f64], weights: &[f64]) {
    let wsum: f64 = weights.iter().sum();
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    for (v, &w) in values.iter_mut().zip(weights) {
        if w > 0.0 {
            *v -= mean;
        }
    }
}

/// Solve the viscous cell problem for pair (i, j), i <= j.
pub fn solve_viscous_cell(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    i: usize,
    j: usize,
    mode: RigidMode,
    tol: f64,
) -> Result<ViscousCellSolution, HomogError> {
    let d = mesh.d;
    // For i = j the raw target strain Q^ii has trace 1, which is
    // incompatible with div chi = 0 on a periodic cell once the rigid
    // constraint pins D(chi) = Q inside the particle (the particle
    // boundary would need net flux |Y_s|). Shift the target by its
    // trace: the shift lives in the pure-trace direction and never
    // couples to the trace-free macroscopic strain, while making the
    // problem well posed and mode-independent.
    let trq = if i == j { 1.0 / d as f64 } else { 0.0 };
    let offset = |node: usize, comp: usize| -> f64 {
        let y = mesh.node_position(node);
        p_tensor(i, j, &y)[comp] - trq * y[comp]
    };
    let dofs = build_stokes_dofs(mesh, material, mode, Some(&offset), -1.0)?;
    let two_nu = viscous_coefficients(material, mode);
    let a = assemble_viscous(mesh, &ViscousCoeff::Isotropic(two_nu.clone()));
    let b = assemble_divergence(mesh, &dofs.fluid);
    let c = assemble_pressure_stab(mesh, &dofs.fluid);
    let mut q = q_tensor(i, j);
    for k in 0..d {
        q[k][k] -= trq;
    }
    // Forcing int coeff_e dev(Q^ij) : D(v); coeff matches the viscous
    // block (1 on fluid, penalty factor on penalized solid, skipped
    // when eliminated).
    let active: Vec<bool> = two_nu.iter().map(|&v| v != 0.0).collect();
    let f = assemble_strain_forcing(mesh, &active, &|e, _qp| {
        let mut m = q;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= two_nu[e];
            }
        }
        m
    }, 1.0, 2);
    let g = vec![0.0; mesh.num_nodes()];
    let mut sys = reduce_saddle(&a, &b, &c, &f, &g, &dofs)?;
    sys.nullspace = cell_nullspace(mesh, material, &dofs, mode);
    let (u_red, p_red, info) =
        solve_saddle(&sys, tol, &format!("viscous cell problem chi^{i}{j}"))?;
    let energy = energy_identity(&sys, &u_red, &p_red);

    let mut chi_vals = dofs.ru.expand(&u_red);
    // Zero-mean per component (translations are in the kernel, so this
    // stays a solution); the rigid translation shifts accordingly.
    let nn = mesh.num_nodes();
    let mut means = [0.0; 3];
    for k in 0..d {
        let mean: f64 = (0..nn).map(|n| chi_vals[n * d + k]).sum::<f64>() / nn as f64;
        for n in 0..nn {
            chi_vals[n * d + k] -= mean;
        }
        means[k] = mean;
    }
    let rigid = dofs.rigid.first().map(|grp| {
        let mut m = rigid_motion(&dofs, grp, &u_red, d);
        for k in 0..d {
            // chi = P - (U + ...) and chi -> chi - c shifts U -> U + c.
            m.u[k] += means[k];
        }
        m
    });

    let mut q_vals = dofs.rp.expand(&p_red);
    zero_mean_pressure(&mut q_vals, &fluid_pressure_weights(mesh, &dofs.fluid));

    Ok(ViscousCellSolution {
        i,
        j,
        chi: VectorField {
            mesh: *mesh,
            values: chi_vals,
        },
        q: ScalarField {
            mesh: *mesh,
            values: q_vals,
        },
        rigid,
        energy,
        info,
    })
}

/// Solve the magnetic cell problem for pair (i, j), i <= j, forced by
/// tau^ij built from the scalar solutions.
pub fn solve_magnetic_cell(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    scalars: &[ScalarCellSolution],
    i: usize,
    j: usize,
    mode: RigidMode,
    tol: f64,
) -> Result<MagneticCellSolution, HomogError> {
    let d = mesh.d;
    let dofs = build_stokes_dofs(mesh, material, mode, None, 1.0)?;
    let two_nu = viscous_coefficients(material, mode);
    let a = assemble_viscous(mesh, &ViscousCoeff::Isotropic(two_nu));
    let b = assemble_divergence(mesh, &dofs.fluid);
    let c = assemble_pressure_stab(mesh, &dofs.fluid);
    // Weak form: int (D(xi) + tau) : D(v) - int r Div v = 0, so the
    // load is -int tau : D(v) over the fluid (admissible v are rigid on
    // the solid).
    let f = assemble_strain_forcing(
        mesh,
        &dofs.fluid,
        &|e, qp| tau_at(material, scalars, i, j, e, &qp.loc),
        -1.0,
        2,
    );
    let g = vec![0.0; mesh.num_nodes()];
    let mut sys = reduce_saddle(&a, &b, &c, &f, &g, &dofs)?;
    sys.nullspace = cell_nullspace(mesh, material, &dofs, mode);
    let (u_red, p_red, info) =
        solve_saddle(&sys, tol, &format!("magnetic cell problem xi^{i}{j}"))?;
    let energy = energy_identity(&sys, &u_red, &p_red);

    let mut xi_vals = dofs.ru.expand(&u_red);
    let nn = mesh.num_nodes();
    let mut means = [0.0; 3];
    for k in 0..d {
        let mean: f64 = (0..nn).map(|n| xi_vals[n * d + k]).sum::<f64>() / nn as f64;
        for n in 0..nn {
            xi_vals[n * d + k] -= mean;
        }
        means[k] = mean;
    }
    let rigid = dofs.rigid.first().map(|grp| {
        let mut m = rigid_motion(&dofs, grp, &u_red, d);
        for k in 0..d {
            m.u[k] -= means[k];
        }
        m
    });
    let mut r_vals = dofs.rp.expand(&p_red);
    zero_mean_pressure(&mut r_vals, &fluid_pressure_weights(mesh, &dofs.fluid));

    Ok(MagneticCellSolution {
        i,
        j,
        xi: VectorField {
            mesh: *mesh,
            values: xi_vals,
        },
        r: ScalarField {
            mesh: *mesh,
            values: r_vals,
        },
        rigid,
        energy,
        info,
    })
}

/// Effective viscosity: energy form (the reported value), the literal
/// direct strain average (diagnostic; identical only for particle-free
/// cells, where both reduce to Q^ij : Q^mn), and their gap.
#[derive(Debug, Clone, Serialize)]
pub struct NResult {
    pub value: Box<Rank4>,
    pub direct: Box<Rank4>,
    pub mismatch: f64,
    pub direct_asymmetry: f64,
}

pub fn compute_n(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    viscous: &[ViscousCellSolution],
) -> Result<NResult, HomogError> {
    let d = mesh.d;
    let pairs = index_pairs(d);
    debug_assert_eq!(viscous.len(), pairs.len());
    let basis = ElementBasis::new(mesh, 2);
    let nqp = basis.points.len();
    let ne = mesh.num_elements();

    // D(P^ij - chi^ij) at every quadrature point, per pair.
    let mut strains: Vec<Vec<[[f64; 3]; 3]>> = Vec::with_capacity(pairs.len());
    for (slot, &(i, j)) in pairs.iter().enumerate() {
        let q = q_tensor(i, j);
        let mut s = Vec::with_capacity(ne * nqp);
        for e in 0..ne {
            for qp in &basis.points {
                let dchi = viscous[slot].chi.strain_local(e, &qp.loc);
                let mut v = [[0.0; 3]; 3];
                for a in 0..d {
                    for b in 0..d {
                        v[a][b] = q[a][b] - dchi[a][b];
                    }
                }
                s.push(v);
            }
        }
        strains.push(s);
    }

    let mut energy = vec![0.0; pairs.len() * pairs.len()];
    let mut direct = vec![[[0.0_f64; 3]; 3]; pairs.len()];
    for e in 0..ne {
        for (k, qp) in basis.points.iter().enumerate() {
            let idx = e * nqp + k;
            for p in 0..pairs.len() {
                let sp = &strains[p][idx];
                for a in 0..d {
                    for b in 0..d {
                        direct[p][a][b] += qp.w * sp[a][b];
                    }
                }
                for q in p..pairs.len() {
                    let sq = &strains[q][idx];
                    let mut dotp = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            dotp += sp[a][b] * sq[a][b];
                        }
                    }
                    energy[p * pairs.len() + q] += qp.w * dotp;
                }
            }
        }
    }

    // Spread the pair values over all index permutations.
    let mut n4: Box<Rank4> = Box::new([[[[0.0; 3]; 3]; 3]; 3]);
    let mut nd: Box<Rank4> = Box::new([[[[0.0; 3]; 3]; 3]; 3]);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        for (q, &(m, n)) in pairs.iter().enumerate() {
            let v = energy[p.min(q) * pairs.len() + p.max(q)];
            for (ii, jj) in [(i, j), (j, i)] {
                for (mm, nn) in [(m, n), (n, m)] {
                    n4[ii][jj][mm][nn] = v;
                }
            }
        }
    }
    // Direct form: N^{ij}_{mn} = <D(P^ij - chi^ij)>_{mn}; not symmetric
    // under (ij) <-> (mn) in general.
    let mut direct_asymmetry = 0.0_f64;
    for (p, &(i, j)) in pairs.iter().enumerate() {
        for (ii, jj) in [(i, j), (j, i)] {
            for m in 0..d {
                for n in 0..d {
                    nd[ii][jj][m][n] = direct[p][m][n];
                }
            }
        }
    }
    let mut mismatch = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            for m in 0..d {
                for n in 0..d {
                    mismatch = mismatch.max((n4[i][j][m][n] - nd[i][j][m][n]).abs());
                    direct_asymmetry =
                        direct_asymmetry.max((nd[i][j][m][n] - nd[m][n][i][j]).abs());
                }
            }
        }
    }
    if !material.has_solid() && mismatch > 1e-6 {
        return Err(HomogError::FormulaMismatch(format!(
            "effective-viscosity formulas disagree by {mismatch:.3e} on a particle-free cell"
        )));
    }
    Ok(NResult {
        value: n4,
        direct: nd,
        mismatch,
        direct_asymmetry,
    })
}

/// Coupling matrices B^{ij} = <D(xi^ij) + tau^ij> (raw) and their
/// (i,j)-symmetrization.
#[derive(Debug, Clone, Serialize)]
pub struct BResult {
    pub raw: Box<Rank4>,
    pub symmetrized: Box<Rank4>,
}

pub fn compute_b(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    scalars: &[ScalarCellSolution],
    magnetic: &[MagneticCellSolution],
) -> BResult {
    let d = mesh.d;
    let pairs = index_pairs(d);
    let basis = ElementBasis::new(mesh, 2);
    let mut raw: Box<Rank4> = Box::new([[[[0.0; 3]; 3]; 3]; 3]);
    for (slot, &(i, j)) in pairs.iter().enumerate() {
        let mut bij = [[0.0_f64; 3]; 3];
        for e in 0..mesh.num_elements() {
            for qp in &basis.points {
                let dxi = magnetic[slot].xi.strain_local(e, &qp.loc);
                let t = tau_at(material, scalars, i, j, e, &qp.loc);
                for a in 0..d {
                    for b in 0..d {
                        bij[a][b] += qp.w * (dxi[a][b] + t[a][b]);
                    }
                }
            }
        }
        // tau^{ji} = (tau^{ij})^T and xi^{ji} = xi^{ij}: B^{ji} = (B^{ij})^T.
        for a in 0..d {
            for b in 0..d {
                raw[i][j][a][b] = bij[a][b];
                raw[j][i][a][b] = bij[b][a];
            }
        }
    }
    let mut symmetrized: Box<Rank4> = Box::new([[[[0.0; 3]; 3]; 3]; 3]);
    for i in 0..d {
        for j in 0..d {
            for a in 0..d {
                for b in 0..d {
                    symmetrized[i][j][a][b] = 0.5 * (raw[i][j][a][b] + raw[j][i][a][b]);
                }
            }
        }
    }
    BResult { raw, symmetrized }
}

/// Invariant checks recorded alongside the tensors.
#[derive(Debug, Clone, Serialize)]
pub struct TensorChecks {
    pub mu_formula_mismatch: f64,
    pub mu_symmetry_deviation: f64,
    pub mu_min_eigenvalue: f64,
    pub contrast_bound: f64,
    /// min over k of (<mu> - mu_eff_kk): the Voigt upper bound margin.
    pub voigt_margin: f64,
    pub n_formula_mismatch: f64,
    pub n_direct_asymmetry: f64,
    /// min of N zeta eta zeta eta over 1000 seeded random unit pairs.
    pub legendre_hadamard_min: f64,
    /// max |tr B^{ii}| (trace-free tau + incompressibility).
    pub b_trace_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectiveTensors {
    pub d: usize,
    pub mu_eff: [[f64; 3]; 3],
    pub mu_eff_linear: [[f64; 3]; 3],
    pub n: Box<Rank4>,
    pub n_direct: Box<Rank4>,
    pub b_raw: Box<Rank4>,
    pub b_symmetrized: Box<Rank4>,
    pub checks: TensorChecks,
}

/// Smallest eigenvalue of a symmetric d x d matrix (closed form in 2D,
/// cyclic Jacobi in 3D).
pub fn min_eigenvalue(m: &[[f64; 3]; 3], d: usize) -> f64 {
    if d == 2 {
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        tr / 2.0 - disc
    } else {
        let mut a = *m;
        for _sweep in 0..50 {
            let mut off = 0.0_f64;
            for p in 0..3 {
                for q in (p + 1)..3 {
                    off = off.max(a[p][q].abs());
                }
            }
            if off < 1e-14 {
                break;
            }
            for p in 0..3 {
                for q in (p + 1)..3 {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..3 {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..3 {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        a[0][0].min(a[1][1]).min(a[2][2])
    }
}

/// Minimum of N^{ij}_{mn} z_i e_j z_m e_n over random unit pairs
/// (fixed-seed stream, so reports are reproducible bit for bit).
pub fn legendre_hadamard_min(n4: &Rank4, d: usize, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ce11);
    let unit = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        loop {
            let mut v = [0.0_f64; 3];
            let mut n2 = 0.0_f64;
            for item in v.iter_mut().take(d) {
                *item = rng.gen_range(-1.0..1.0);
                n2 += *item * *item;
            }
            if n2 > 0.01 && n2 <= 1.0 {
                let n = n2.sqrt();
                for item in v.iter_mut().take(d) {
                    *item /= n;
                }
                return v;
            }
        }
    };
    let mut min = f64::INFINITY;
    for _ in 0..samples {
        let z = unit(&mut rng);
        let t = unit(&mut rng);
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        s += n4[i][j][m][n] * z[i] * t[j] * z[m] * t[n];
                    }
                }
            }
        }
        min = min.min(s);
    }
    min
}

/// Assemble every effective tensor with its invariant checks.
pub fn compute_effective_tensors(cells: &CellSolutionSet) -> Result<EffectiveTensors, HomogError> {
    let mesh = &cells.mesh;
    let d = mesh.d;
    let mu = compute_mu_eff(mesh, &cells.material, &cells.scalar)?;
    let n = compute_n(mesh, &cells.material, &cells.viscous)?;
    let b = compute_b(mesh, &cells.material, &cells.scalar, &cells.magnetic);

    let mut mu_sym_dev = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            mu_sym_dev = mu_sym_dev.max((mu.value[i][j] - mu.value[j][i]).abs());
        }
    }
    let mean_mu = cells.material.mean_mu(mesh);
    let mut voigt = f64::INFINITY;
    for k in 0..d {
        voigt = voigt.min(mean_mu - mu.value[k][k]);
    }
    let mut b_trace = 0.0_f64;
    for i in 0..d {
        let mut tr = 0.0;
        for a in 0..d {
            tr += b.raw[i][i][a][a];
        }
        b_trace = b_trace.max(tr.abs());
    }

    let checks = TensorChecks {
        mu_formula_mismatch: mu.mismatch,
        mu_symmetry_deviation: mu_sym_dev,
        mu_min_eigenvalue: min_eigenvalue(&mu.value, d),
        contrast_bound: cells.material.lambda,
        voigt_margin: voigt,
        n_formula_mismatch: n.mismatch,
        n_direct_asymmetry: n.direct_asymmetry,
        legendre_hadamard_min: legendre_hadamard_min(&n.value, d, 1000),
        b_trace_max: b_trace,
    };
    Ok(EffectiveTensors {
        d,
        mu_eff: mu.value,
        mu_eff_linear: mu.linear,
        n: n.value,
        n_direct: n.direct,
        b_raw: b.raw,
        b_symmetrized: b.symmetrized,
        checks,
    })
}

/// Run the full set of cell problems.
pub fn solve_cell_problems(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    mode: RigidMode,
    tol: f64,
) -> Result<CellSolutionSet, HomogError> {
    let d = mesh.d;
    let mut scalar = Vec::with_capacity(d);
    for axis in 0..d {
        scalar.push(solve_scalar_cell(mesh, material, axis, tol)?);
    }
    let mut viscous = Vec::new();
    let mut magnetic = Vec::new();
    for &(i, j) in &index_pairs(d) {
        viscous.push(solve_viscous_cell(mesh, material, i, j, mode, tol)?);
        magnetic.push(solve_magnetic_cell(mesh, material, &scalar, i, j, mode, tol)?);
    }
    Ok(CellSolutionSet {
        mesh: *mesh,
        material: material.clone(),
        mode,
        tol,
        scalar,
        viscous,
        magnetic,
    })
}
