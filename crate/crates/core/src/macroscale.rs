//! Macroscopic (homogenized) problems on a box domain: the effective
//! potential equation, the effective momentum balance driven by the
//! averaged Maxwell stress, and first-order two-scale reconstruction.

use serde::{Deserialize, Serialize};

use crate::cell::{q_tensor, CellSolutionSet, EffectiveTensors};
use crate::error::HomogError;
use crate::fem::fields::{ScalarField, VectorField};
use crate::fem::scalar::{
    assemble_boundary_flux_rhs, assemble_scalar_anisotropic, lumped_node_weights, make_zero_mean,
    solve_scalar_neumann,
};
use crate::fem::solver::SolveInfo;
use crate::fem::stokes::{
    assemble_body_force, assemble_divergence, assemble_pressure_stab, assemble_stab_force_rhs,
    assemble_strain_forcing, assemble_viscous, build_stokes_dofs, energy_identity,
    pressure_nullspace, reduce_saddle, solve_saddle, EnergyCheck, Rank4, RigidMode, ViscousCoeff,
};
use crate::material::MaterialField;
use crate::mesh::PeriodicMesh;

/// Imposed magnetic flux k on the domain boundary:
/// mu_eff grad phi0 . n = k . n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KSpec {
    /// Uniform flux: phi0 is affine when mu_eff is constant.
    Constant { k: [f64; 3] },
    /// Zero-net-flux trigonometric profile k_i = sin(2 pi x_{i+1} / L_{i+1}).
    Trig,
    /// k(x) = x: net boundary flux d |Omega| != 0 (rejected).
    Radial,
}

impl KSpec {
    pub fn eval(&self, x: &[f64; 3], d: usize, lengths: &[f64; 3]) -> [f64; 3] {
        match self {
            KSpec::Constant { k } => *k,
            KSpec::Trig => {
                let mut k = [0.0; 3];
                for i in 0..d {
                    let j = (i + 1) % d;
                    k[i] = (2.0 * std::f64::consts::PI * x[j] / lengths[j]).sin();
                }
                k
            }
            KSpec::Radial => *x,
        }
    }
}

/// Physical parameters of the macroscopic flow problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MacroParams {
    pub re: f64,
    pub fr: f64,
    pub s: f64,
    pub g: [f64; 3],
}

/// Smallest eigenvalue of a small symmetric matrix (cyclic Jacobi).
fn sym_min_eig(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[p][q].abs());
            }
        }
        if off < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k][p], m[k][q]);
                    m[k][p] = c * akp - s * akq;
                    m[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * apk - s * aqk;
                    m[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).fold(f64::INFINITY, f64::min)
}

/// Voigt matrix of the quadratic form E : N : E over symmetric E
/// (independent entries as coordinates, off-diagonal weight 2).
pub fn n_voigt_min_eig(n4: &Rank4, d: usize) -> f64 {
    let pairs = crate::cell::index_pairs(d);
    let w = |&(i, j): &(usize, usize)| if i == j { 1.0 } else { 2.0 };
    let m: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| {
            pairs
                .iter()
                .map(|q| w(p) * w(q) * n4[p.0][p.1][q.0][q.1])
                .collect()
        })
        .collect();
    sym_min_eig(&m)
}

/// Solve -Div(mu_eff grad phi0) = 0 with Neumann data k.n on a box mesh.
pub fn solve_macro_potential(
    mesh: &PeriodicMesh,
    mu_eff: &[[f64; 3]; 3],
    k: &KSpec,
    tol: f64,
) -> Result<(ScalarField, SolveInfo), HomogError> {
    let d = mesh.d;
    let eig = crate::cell::min_eigenvalue(mu_eff, d);
    if eig <= 1e-12 {
        return Err(HomogError::NotSPD(format!(
            "effective permeability has min eigenvalue {eig:.3e}"
        )));
    }
    let a = assemble_scalar_anisotropic(mesh, &|_e| *mu_eff);
    let rhs = assemble_boundary_flux_rhs(mesh, &|x| k.eval(x, d, &mesh.lengths));
    // Pure Neumann compatibility: the total boundary flux must vanish.
    let total: f64 = rhs.iter().sum();
    let scale: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if total.abs() > 1e-10 * scale {
        return Err(HomogError::IncompatibleFlux(format!(
            "net boundary flux {total:.3e} (relative to load magnitude {scale:.3e})"
        )));
    }
    solve_scalar_neumann(mesh, &a, &rhs, tol, "macroscopic potential")
}

/// Solution of the homogenized momentum balance.
pub struct MacroFlow {
    pub u0: VectorField,
    pub pi0: ScalarField,
    pub info: SolveInfo,
    pub energy: EnergyCheck,
}

/// Solve the homogenized Stokes system
///   -Div[(2/Re) N : D(u0) - pi0 I + S Bsym^{ij} di phi0 dj phi0]
///     = (1/Fr^2) g,  Div u0 = 0,  u0 = 0 on the boundary.
pub fn solve_macro_flow(
    mesh: &PeriodicMesh,
    tensors: &EffectiveTensors,
    params: &MacroParams,
    phi0: &ScalarField,
    tol: f64,
) -> Result<MacroFlow, HomogError> {
    let d = mesh.d;
    let eig = n_voigt_min_eig(&tensors.n, d);
    if eig <= 1e-12 {
        return Err(HomogError::NotSPD(format!(
            "effective viscosity has min Voigt eigenvalue {eig:.3e}"
        )));
    }
    let all_fluid = MaterialField {
        mu: vec![1.0; mesh.num_elements()],
        solid: vec![false; mesh.num_elements()],
        lambda: 1.0,
    };
    let dofs = build_stokes_dofs(mesh, &all_fluid, RigidMode::Eliminate, None, 1.0)?;
    let a = assemble_viscous(
        mesh,
        &ViscousCoeff::Tensor {
            n4: tensors.n.clone(),
            scale: 2.0 / params.re,
        },
    );
    let b = assemble_divergence(mesh, &dofs.fluid);
    let c = assemble_pressure_stab(mesh, &dofs.fluid);

    let mut gravity = [0.0; 3];
    for i in 0..d {
        gravity[i] = params.g[i] / (params.fr * params.fr);
    }
    let mut f = assemble_body_force(mesh, &dofs.fluid, &gravity);
    // Averaged Maxwell stress, moved to the left in the weak form:
    // + int S Bsym^{ij} di phi0 dj phi0 : D(v).
    let s = params.s;
    let bsym = &tensors.b_symmetrized;
    let maxwell = assemble_strain_forcing(
        mesh,
        &dofs.fluid,
        &|e, qp| {
            let gp = phi0.grad_local(e, &qp.loc);
            let mut m = [[0.0; 3]; 3];
            for i in 0..d {
                for j in 0..d {
                    let c = s * gp[i] * gp[j];
                    if c == 0.0 {
                        continue;
                    }
                    for a in 0..d {
                        for b in 0..d {
                            m[a][b] += c * bsym[i][j][a][b];
                        }
                    }
                }
            }
            m
        },
        -1.0,
        3,
    );
    for (fi, mi) in f.iter_mut().zip(&maxwell) {
        *fi += mi;
    }
    let g_rhs = assemble_stab_force_rhs(mesh, &dofs.fluid, &gravity);
    let mut sys = reduce_saddle(&a, &b, &c, &f, &g_rhs, &dofs)?;
    sys.nullspace = vec![pressure_nullspace(&dofs)];
    let (u_red, p_red, info) = solve_saddle(&sys, tol, "macroscopic flow")?;
    let energy = energy_identity(&sys, &u_red, &p_red);

    let u_vals = dofs.ru.expand(&u_red);
    let mut p_vals = dofs.rp.expand(&p_red);
    make_zero_mean(&mut p_vals, &lumped_node_weights(mesh));
    Ok(MacroFlow {
        u0: VectorField {
            mesh: *mesh,
            values: u_vals,
        },
        pi0: ScalarField {
            mesh: *mesh,
            values: p_vals,
        },
        info,
        energy,
    })
}

/// Combined macroscopic state.
pub struct MacroState {
    pub mesh: PeriodicMesh,
    pub params: MacroParams,
    pub phi0: ScalarField,
    pub phi0_info: SolveInfo,
    pub flow: MacroFlow,
}

pub fn solve_macro(
    mesh: &PeriodicMesh,
    tensors: &EffectiveTensors,
    params: &MacroParams,
    k: &KSpec,
    tol: f64,
) -> Result<MacroState, HomogError> {
    let (phi0, phi0_info) = solve_macro_potential(mesh, &tensors.mu_eff, k, tol)?;
    let flow = solve_macro_flow(mesh, tensors, params, &phi0, tol)?;
    Ok(MacroState {
        mesh: *mesh,
        params: *params,
        phi0,
        phi0_info,
        flow,
    })
}

/// Pointwise Maxwell stress T(m) = s * mu * (m (x) m - |m|^2 / 2 I).
pub fn maxwell_stress(s: f64, mu: f64, m: &[f64; 3], d: usize) -> [[f64; 3]; 3] {
    let mut n2 = 0.0;
    for a in 0..d {
        n2 += m[a] * m[a];
    }
    let mut t = [[0.0; 3]; 3];
    for a in 0..d {
        for b in 0..d {
            t[a][b] = s * mu * m[a] * m[b];
        }
        t[a][a] -= 0.5 * s * mu * n2;
    }
    t
}

/// First-order two-scale reconstruction: evaluators take the macro
/// point x and use y = x / eps folded into the unit cell.
pub struct ReconstructedFields<'a> {
    pub cells: &'a CellSolutionSet,
    pub state: &'a MacroState,
    pub eps: f64,
}

impl<'a> ReconstructedFields<'a> {
    pub fn new(cells: &'a CellSolutionSet, state: &'a MacroState, eps: f64) -> Self {
        ReconstructedFields { cells, state, eps }
    }

    fn fast(&self, x: &[f64; 3]) -> [f64; 3] {
        let d = self.state.mesh.d;
        let mut y = [0.0; 3];
        for a in 0..d {
            y[a] = (x[a] / self.eps).rem_euclid(1.0);
        }
        y
    }

    /// phi1(x, x/eps) = omega^i(y) di phi0(x).
    pub fn phi1(&self, x: &[f64; 3]) -> f64 {
        let d = self.state.mesh.d;
        let y = self.fast(x);
        let gp = self.state.phi0.grad(x);
        (0..d)
            .map(|i| self.cells.scalar[i].omega.eval(&y) * gp[i])
            .sum()
    }

    /// grad_y phi1(x, x/eps).
    pub fn grad_y_phi1(&self, x: &[f64; 3]) -> [f64; 3] {
        let d = self.state.mesh.d;
        let y = self.fast(x);
        let gp = self.state.phi0.grad(x);
        let mut out = [0.0; 3];
        for i in 0..d {
            let g = self.cells.scalar[i].omega.grad(&y);
            for a in 0..d {
                out[a] += gp[i] * g[a];
            }
        }
        out
    }

    /// Corrected magnetic field m = grad phi0(x) + grad_y phi1(x, x/eps).
    pub fn magnetic_field(&self, x: &[f64; 3]) -> [f64; 3] {
        let d = self.state.mesh.d;
        let gp = self.state.phi0.grad(x);
        let gy = self.grad_y_phi1(x);
        let mut m = [0.0; 3];
        for a in 0..d {
            m[a] = gp[a] + gy[a];
        }
        m
    }

    /// u1(x, x/eps) = -D(u0)_ij chi^ij + (Re/2) S di phi0 dj phi0 xi^ij.
    pub fn u1(&self, x: &[f64; 3]) -> [f64; 3] {
        let d = self.state.mesh.d;
        let y = self.fast(x);
        let du = self.state.flow.u0.strain(x);
        let gp = self.state.phi0.grad(x);
        let p = &self.state.params;
        let mut out = [0.0; 3];
        for i in 0..d {
            for j in 0..d {
                let chi = self.cells.viscous(i, j).chi.eval(&y);
                let xi = self.cells.magnetic(i, j).xi.eval(&y);
                let cmag = 0.5 * p.re * p.s * gp[i] * gp[j];
                for a in 0..d {
                    out[a] += -du[i][j] * chi[a] + cmag * xi[a];
                }
            }
        }
        out
    }

    /// D_y u1(x, x/eps) (fast-variable strain of the corrector).
    pub fn strain_y_u1(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let d = self.state.mesh.d;
        let y = self.fast(x);
        let du = self.state.flow.u0.strain(x);
        let gp = self.state.phi0.grad(x);
        let p = &self.state.params;
        let mut out = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                let dchi = self.cells.viscous(i, j).chi.strain(&y);
                let dxi = self.cells.magnetic(i, j).xi.strain(&y);
                let cmag = 0.5 * p.re * p.s * gp[i] * gp[j];
                for a in 0..d {
                    for b in 0..d {
                        out[a][b] += -du[i][j] * dchi[a][b] + cmag * dxi[a][b];
                    }
                }
            }
        }
        out
    }

    /// Oscillatory pressure p0(x, x/eps) =
    ///   (2/Re) D(u0)_ij q^ij + S di phi0 dj phi0 r^ij + pi0(x).
    pub fn p0(&self, x: &[f64; 3]) -> f64 {
        let d = self.state.mesh.d;
        let y = self.fast(x);
        let du = self.state.flow.u0.strain(x);
        let gp = self.state.phi0.grad(x);
        let p = &self.state.params;
        let mut out = self.state.flow.pi0.eval(x);
        for i in 0..d {
            for j in 0..d {
                out += (2.0 / p.re) * du[i][j] * self.cells.viscous(i, j).q.eval(&y)
                    + p.s * gp[i] * gp[j] * self.cells.magnetic(i, j).r.eval(&y);
            }
        }
        out
    }

    /// Oscillatory Maxwell stress T0(x, x/eps) built from the corrected
    /// field m and the cell permeability mu(y).
    pub fn t0(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let d = self.state.mesh.d;
        let y = self.fast(x);
        let (e, _) = self.cells.mesh.locate(&y);
        let m = self.magnetic_field(x);
        maxwell_stress(self.state.params.s, self.cells.material.mu[e], &m, d)
    }

    /// First-order two-scale viscous stress
    /// (2/Re) [D(u0) contracted with D_y(P - chi) etc.]: the strain the
    /// fine-scale flow should develop, D(u0) + D_y u1 composed through
    /// the cell correctors.
    pub fn total_strain(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let d = self.state.mesh.d;
        let du = self.state.flow.u0.strain(x);
        let dy = self.strain_y_u1(x);
        let mut out = [[0.0; 3]; 3];
        for a in 0..d {
            for b in 0..d {
                out[a][b] = du[a][b] + dy[a][b];
            }
        }
        out
    }
}

/// Average of Q^ij contracted against a constant strain: convenience
/// used in tests of the particle-free effective stress.
pub fn q_contract(d: usize, strain: &[[f64; 3]; 3], i: usize, j: usize) -> f64 {
    let q = q_tensor(i, j);
    let mut s = 0.0;
    for a in 0..d {
        for b in 0..d {
            s += q[a][b] * strain[a][b];
        }
    }
    s
}
