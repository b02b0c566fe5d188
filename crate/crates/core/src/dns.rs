//! Fine-scale (epsilon) problems solved directly on Omega = (0,1)^d,
//! and the corrector study comparing them against the two-scale
//! reconstruction: potential and velocity corrector norms, Maxwell
//! stress gaps, and weak pressure convergence diagnostics.

use serde::Serialize;

use crate::cell::{fluid_pressure_weights, zero_mean_pressure, CellSolutionSet};
use crate::error::HomogError;
use crate::fem::fields::{ScalarField, VectorField};
use crate::fem::quadrature::ElementBasis;
use crate::fem::scalar::{
    assemble_boundary_flux_rhs, assemble_scalar_diffusion, solve_scalar_neumann,
};
use crate::fem::solver::SolveInfo;
use crate::fem::stokes::{
    assemble_body_force, assemble_divergence, assemble_pressure_stab, assemble_stab_force_rhs,
    assemble_strain_forcing, assemble_viscous, build_stokes_dofs, energy_identity,
    pressure_nullspace, reduce_saddle, rigid_motion, solve_saddle, EnergyCheck, RigidMode,
    RigidMotion, ViscousCoeff, PENALTY_FACTOR,
};
use crate::macroscale::{maxwell_stress, KSpec, MacroParams, MacroState, ReconstructedFields};
use crate::material::{assign_material_scaled, GeometrySpec, MaterialField};
use crate::mesh::{build_box_mesh, PeriodicMesh};

/// Fewest elements resolving each unit cell per axis.
pub const MIN_ELEMENTS_PER_CELL: usize = 8;

/// Validate epsilon = 1/m and build the conforming fine-scale mesh with
/// `elements_per_cell` elements per cell per axis.
pub fn build_dns_mesh(
    d: usize,
    eps: f64,
    elements_per_cell: usize,
) -> Result<PeriodicMesh, HomogError> {
    let m = 1.0 / eps;
    if !(eps > 0.0 && eps <= 1.0) || (m - m.round()).abs() > 1e-9 {
        return Err(HomogError::ValidationError(format!(
            "epsilon must be 1/m for integer m, got {eps}"
        )));
    }
    if elements_per_cell < MIN_ELEMENTS_PER_CELL {
        return Err(HomogError::UnderResolved(format!(
            "{elements_per_cell} elements per cell axis (need >= {MIN_ELEMENTS_PER_CELL})"
        )));
    }
    let n = m.round() as usize * elements_per_cell;
    let mut lengths = [1.0; 3];
    if d == 2 {
        lengths[2] = 0.0;
    }
    build_box_mesh(d, &lengths[..d], n)
}

/// Solve the oscillatory-coefficient potential problem
/// -Div[mu(x/eps) grad phi] = 0, mu grad phi . n = k . n, zero mean.
pub fn solve_dns_potential(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    k: &KSpec,
    tol: f64,
) -> Result<(ScalarField, SolveInfo), HomogError> {
    let a = assemble_scalar_diffusion(mesh, &material.mu);
    let rhs = assemble_boundary_flux_rhs(mesh, &|x| k.eval(x, mesh.d, &mesh.lengths));
    let total: f64 = rhs.iter().sum();
    let scale: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if total.abs() > 1e-10 * scale {
        return Err(HomogError::IncompatibleFlux(format!(
            "net boundary flux {total:.3e} (relative to load magnitude {scale:.3e})"
        )));
    }
    solve_scalar_neumann(mesh, &a, &rhs, tol, "fine-scale potential")
}

/// One particle of the fine-scale flow.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Particle {
    pub center: [f64; 3],
    pub motion: RigidMotion,
}

/// Fine-scale flow solution.
pub struct DnsFlow {
    pub u: VectorField,
    pub p: ScalarField,
    pub particles: Vec<Particle>,
    pub energy: EnergyCheck,
    pub info: SolveInfo,
}

/// Solve the rigid-particle Stokes problem
///   -Div[(2/Re) D(u) - p I] = (1/Fr^2) g + Div T(phi) in the fluid,
/// u rigid per particle, u = 0 on the boundary; T is frozen from the
/// already-solved potential (one-way coupling).
pub fn solve_dns_flow(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    params: &MacroParams,
    phi: &ScalarField,
    mode: RigidMode,
    tol: f64,
) -> Result<DnsFlow, HomogError> {
    let d = mesh.d;
    let dofs = build_stokes_dofs(mesh, material, mode, None, 1.0)?;
    let visc = 2.0 / params.re;
    let two_nu: Vec<f64> = material
        .solid
        .iter()
        .map(|&s| {
            if !s {
                visc
            } else if mode == RigidMode::Penalty {
                visc * PENALTY_FACTOR
            } else {
                0.0
            }
        })
        .collect();
    let a = assemble_viscous(mesh, &ViscousCoeff::Isotropic(two_nu));
    let b = assemble_divergence(mesh, &dofs.fluid);
    let c = assemble_pressure_stab(mesh, &dofs.fluid);

    let mut gravity = [0.0; 3];
    for i in 0..d {
        gravity[i] = params.g[i] / (params.fr * params.fr);
    }
    let mut f = assemble_body_force(mesh, &dofs.fluid, &gravity);
    let s = params.s;
    let maxwell = assemble_strain_forcing(
        mesh,
        &dofs.fluid,
        &|e, qp| {
            let g = phi.grad_local(e, &qp.loc);
            maxwell_stress(s, material.mu[e], &g, d)
        },
        -1.0,
        2,
    );
    for (fi, mi) in f.iter_mut().zip(&maxwell) {
        *fi += mi;
    }
    let g_rhs = assemble_stab_force_rhs(mesh, &dofs.fluid, &gravity);
    let mut sys = reduce_saddle(&a, &b, &c, &f, &g_rhs, &dofs)?;
    // Box mesh: no translation kernel. Constant pressure is in the
    // kernel unless penalized solid elements keep free interface DOFs.
    if mode == RigidMode::Eliminate || !material.has_solid() {
        sys.nullspace = vec![pressure_nullspace(&dofs)];
    }
    let (u_red, p_red, info) = solve_saddle(&sys, tol, "fine-scale flow")?;
    let energy = energy_identity(&sys, &u_red, &p_red);

    let u_vals = dofs.ru.expand(&u_red);
    let mut p_vals = dofs.rp.expand(&p_red);
    zero_mean_pressure(&mut p_vals, &fluid_pressure_weights(mesh, &dofs.fluid));
    let particles = dofs
        .rigid
        .iter()
        .map(|grp| Particle {
            center: grp.center,
            motion: rigid_motion(&dofs, grp, &u_red, d),
        })
        .collect();
    Ok(DnsFlow {
        u: VectorField {
            mesh: *mesh,
            values: u_vals,
        },
        p: ScalarField {
            mesh: *mesh,
            values: p_vals,
        },
        particles,
        energy,
        info,
    })
}

/// Full fine-scale state at one epsilon.
pub struct DnsState {
    pub eps: f64,
    pub mesh: PeriodicMesh,
    pub material: MaterialField,
    pub phi: ScalarField,
    pub phi_info: SolveInfo,
    pub flow: DnsFlow,
}

/// Solve potential then flow at one epsilon (one-way coupling).
#[allow(clippy::too_many_arguments)]
pub fn solve_dns(
    d: usize,
    spec: &GeometrySpec,
    eps: f64,
    elements_per_cell: usize,
    params: &MacroParams,
    k: &KSpec,
    mode: RigidMode,
    tol: f64,
) -> Result<DnsState, HomogError> {
    let mesh = build_dns_mesh(d, eps, elements_per_cell)?;
    let material = assign_material_scaled(&mesh, spec, eps, None)?;
    let (phi, phi_info) = solve_dns_potential(&mesh, &material, k, tol)?;
    let flow = solve_dns_flow(&mesh, &material, params, &phi, mode, tol)?;
    Ok(DnsState {
        eps,
        mesh,
        material,
        phi,
        phi_info,
        flow,
    })
}

/// Fixed basket of smooth test functions for the weak pressure
/// diagnostic int (p_eps - pi0) psi dx.
pub fn pressure_basket(x: &[f64; 3]) -> [f64; 5] {
    use std::f64::consts::PI;
    [
        1.0,
        (PI * x[0]).cos(),
        (PI * x[1]).cos(),
        (PI * x[0]).cos() * (PI * x[1]).cos(),
        16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]),
    ]
}

/// Per-epsilon row of the corrector report.
#[derive(Debug, Clone, Serialize)]
pub struct CorrectorEntry {
    pub eps: f64,
    /// || grad phi_eps - grad phi0 - grad_y phi1 ||_{L2}
    pub potential_corrector_l2: f64,
    /// Same norm with phi1 dropped (ablation).
    pub potential_ablation_l2: f64,
    /// || D(u_eps) - D(u0) - D_y(u1) ||_{L2}
    pub velocity_corrector_l2: f64,
    /// || T(phi_eps) - T0 ||_{L1} and L2 (entrywise absolute sums).
    pub stress_gap_l1: f64,
    pub stress_gap_l2: f64,
    /// int (p_eps - pi0) psi_k dx for the fixed basket.
    pub pressure_weak_gaps: [f64; 5],
    /// A priori bound data: ||u_eps||_{H1} + ||p_eps||_{L2} and
    /// ||grad phi_eps||_{L2}.
    pub u_h1: f64,
    pub p_l2: f64,
    pub phi_grad_l2: f64,
    pub flow_energy_residual: f64,
    pub potential_iterations: usize,
    pub flow_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectorReport {
    pub elements_per_cell: usize,
    pub entries: Vec<CorrectorEntry>,
}

/// Compute every corrector norm of one fine-scale state against the
/// reconstruction, with 3-point Gauss per axis on the fine mesh.
pub fn corrector_entry(
    state: &DnsState,
    cells: &CellSolutionSet,
    macro_state: &MacroState,
) -> CorrectorEntry {
    let mesh = &state.mesh;
    let d = mesh.d;
    let recon = ReconstructedFields::new(cells, macro_state, state.eps);
    let basis = ElementBasis::new(mesh, 3);
    let s = macro_state.params.s;

    let mut pot2 = 0.0_f64;
    let mut abl2 = 0.0_f64;
    let mut vel2 = 0.0_f64;
    let mut t_l1 = 0.0_f64;
    let mut t_l2 = 0.0_f64;
    let mut pgaps = [0.0_f64; 5];
    let mut u2 = 0.0_f64;
    let mut gu2 = 0.0_f64;
    let mut p2 = 0.0_f64;
    let mut gphi2 = 0.0_f64;

    for e in 0..mesh.num_elements() {
        let origin = mesh.element_origin(e);
        for qp in &basis.points {
            let mut x = [0.0; 3];
            for a in 0..d {
                x[a] = origin[a] + qp.loc[a] * mesh.h(a);
            }
            let gphi = state.phi.grad_local(e, &qp.loc);
            let g0 = macro_state.phi0.grad(&x);
            let gy = recon.grad_y_phi1(&x);
            let mut dp = 0.0;
            let mut da = 0.0;
            for a in 0..d {
                let diff = gphi[a] - g0[a] - gy[a];
                dp += diff * diff;
                let adiff = gphi[a] - g0[a];
                da += adiff * adiff;
                gphi2 += qp.w * gphi[a] * gphi[a];
            }
            pot2 += qp.w * dp;
            abl2 += qp.w * da;

            let du_eps = state.flow.u.strain_local(e, &qp.loc);
            let du0 = macro_state.flow.u0.strain(&x);
            let dy = recon.strain_y_u1(&x);
            let mut dv = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let diff = du_eps[a][b] - du0[a][b] - dy[a][b];
                    dv += diff * diff;
                }
            }
            vel2 += qp.w * dv;

            let t_eps = maxwell_stress(s, state.material.mu[e], &gphi, d);
            let t0 = recon.t0(&x);
            let mut l1 = 0.0;
            let mut l2 = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let diff = t_eps[a][b] - t0[a][b];
                    l1 += diff.abs();
                    l2 += diff * diff;
                }
            }
            t_l1 += qp.w * l1;
            t_l2 += qp.w * l2;

            let p_eps = state.flow.p.eval_local(e, &qp.loc);
            let pi0 = macro_state.flow.pi0.eval(&x);
            let psi = pressure_basket(&x);
            for (gap, ps) in pgaps.iter_mut().zip(&psi) {
                *gap += qp.w * (p_eps - pi0) * ps;
            }
            p2 += qp.w * p_eps * p_eps;

            let uv = state.flow.u.eval_local(e, &qp.loc);
            let gu = state.flow.u.grad_local(e, &qp.loc);
            for a in 0..d {
                u2 += qp.w * uv[a] * uv[a];
                for b in 0..d {
                    gu2 += qp.w * gu[a][b] * gu[a][b];
                }
            }
        }
    }

    CorrectorEntry {
        eps: state.eps,
        potential_corrector_l2: pot2.sqrt(),
        potential_ablation_l2: abl2.sqrt(),
        velocity_corrector_l2: vel2.sqrt(),
        stress_gap_l1: t_l1,
        stress_gap_l2: t_l2.sqrt(),
        pressure_weak_gaps: pgaps.map(f64::abs),
        u_h1: (u2 + gu2).sqrt(),
        p_l2: p2.sqrt(),
        phi_grad_l2: gphi2.sqrt(),
        flow_energy_residual: state.flow.energy.relative_residual,
        potential_iterations: state.phi_info.iterations,
        flow_iterations: state.flow.info.iterations,
    }
}

/// Run the fine-scale pipeline for every epsilon and collect the report.
#[allow(clippy::too_many_arguments)]
pub fn corrector_study(
    spec: &GeometrySpec,
    cells: &CellSolutionSet,
    macro_state: &MacroState,
    k: &KSpec,
    eps_list: &[f64],
    elements_per_cell: usize,
    mode: RigidMode,
    tol: f64,
) -> Result<CorrectorReport, HomogError> {
    let d = macro_state.mesh.d;
    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let state = solve_dns(
            d,
            spec,
            eps,
            elements_per_cell,
            &macro_state.params,
            k,
            mode,
            tol,
        )?;
        entries.push(corrector_entry(&state, cells, macro_state));
    }
    Ok(CorrectorReport {
        elements_per_cell,
        entries,
    })
}

/// Flux int mu d_axis phi across the cross-section through element
/// column `col` (midplane of the column), for conservation checks.
pub fn cross_section_flux(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    phi: &ScalarField,
    axis: usize,
    col: usize,
) -> f64 {
    let d = mesh.d;
    let basis = ElementBasis::new(mesh, 2);
    let mut flux = 0.0;
    let transverse: f64 = (0..d)
        .filter(|&a| a != axis)
        .map(|a| mesh.h(a))
        .product();
    for e in 0..mesh.num_elements() {
        if mesh.element_coords(e)[axis] != col {
            continue;
        }
        // Average d_axis phi over the element's midplane via the
        // tensor-product points collapsed onto loc[axis] = 0.5.
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for qp in &basis.points {
            let mut loc = qp.loc;
            loc[axis] = 0.5;
            let g = phi.grad_local(e, &loc);
            acc += qp.w * g[axis];
            wsum += qp.w;
        }
        flux += material.mu[e] * (acc / wsum) * transverse;
    }
    flux
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_cell_problems;
    use crate::material::assign_material;
    use crate::mesh::build_unit_cell_mesh;

    fn params(s: f64, g: [f64; 3]) -> MacroParams {
        MacroParams {
            re: 1.0,
            fr: 1.0,
            s,
            g,
        }
    }

    #[test]
    fn mesh_validation() {
        assert!(matches!(
            build_dns_mesh(2, 0.3, 8),
            Err(HomogError::ValidationError(_))
        ));
        assert!(matches!(
            build_dns_mesh(2, 0.25, 4),
            Err(HomogError::UnderResolved(_))
        ));
        let mesh = build_dns_mesh(2, 0.25, 8).unwrap();
        assert_eq!(mesh.n[0], 32);
        assert!(!mesh.periodic);
    }

    #[test]
    fn constant_mu_potential_is_affine() {
        let mesh = build_dns_mesh(2, 0.5, 8).unwrap();
        let spec = GeometrySpec::None { mu: 2.0 };
        let material = assign_material_scaled(&mesh, &spec, 0.5, None).unwrap();
        let k = KSpec::Constant {
            k: [1.0, 0.0, 0.0],
        };
        let (phi, _) = solve_dns_potential(&mesh, &material, &k, 1e-12).unwrap();
        // grad phi = k / mu = (0.5, 0) everywhere.
        let g = phi.grad(&[0.3, 0.8, 0.0]);
        assert!((g[0] - 0.5).abs() < 1e-9 && g[1].abs() < 1e-9, "{g:?}");
    }

    #[test]
    fn layered_cross_section_flux_is_conserved() {
        let spec = GeometrySpec::Layered {
            axis: 0,
            split: 0.5,
            mu: [1.0, 3.0],
        };
        let mesh = build_dns_mesh(2, 0.25, 8).unwrap();
        let material = assign_material_scaled(&mesh, &spec, 0.25, None).unwrap();
        let k = KSpec::Constant {
            k: [1.0, 0.0, 0.0],
        };
        let (phi, _) = solve_dns_potential(&mesh, &material, &k, 1e-12).unwrap();
        for col in [0usize, 7, 16, 25] {
            let f = cross_section_flux(&mesh, &material, &phi, 0, col);
            assert!((f - 1.0).abs() < 1e-6, "flux through column {col}: {f}");
        }
    }

    #[test]
    fn unloaded_flow_with_particles_is_zero() {
        let spec = GeometrySpec::Disk {
            radius: 0.25,
            center: [0.5, 0.5, 0.0],
            mu_fluid: 1.0,
            mu_solid: 2.0,
        };
        let mesh = build_dns_mesh(2, 0.5, 8).unwrap();
        let material = assign_material_scaled(&mesh, &spec, 0.5, None).unwrap();
        let phi = ScalarField::zeros(mesh);
        let flow = solve_dns_flow(
            &mesh,
            &material,
            &params(0.0, [0.0; 3]),
            &phi,
            RigidMode::Eliminate,
            1e-10,
        )
        .unwrap();
        assert_eq!(flow.particles.len(), 4, "2x2 cells with one disk each");
        assert!(flow.u.values.iter().all(|&v| v.abs() < 1e-12));
        for p in &flow.particles {
            assert!(p.motion.u.iter().all(|v| v.abs() < 1e-12));
            assert!(p.motion.r.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn rigid_exactness_and_solid_pressure_zero() {
        let spec = GeometrySpec::Disk {
            radius: 0.3,
            center: [0.5, 0.5, 0.0],
            mu_fluid: 1.0,
            mu_solid: 3.0,
        };
        let eps = 0.5;
        let mesh = build_dns_mesh(2, eps, 10).unwrap();
        let material = assign_material_scaled(&mesh, &spec, eps, None).unwrap();
        let k = KSpec::Constant {
            k: [1.0, 0.0, 0.0],
        };
        let (phi, _) = solve_dns_potential(&mesh, &material, &k, 1e-10).unwrap();
        let flow = solve_dns_flow(
            &mesh,
            &material,
            &params(1.0, [0.0, -1.0, 0.0]),
            &phi,
            RigidMode::Eliminate,
            1e-8,
        )
        .unwrap();
        // Velocity on solid nodes equals the particle's rigid motion
        // exactly (eliminated, not approximated).
        let d = 2;
        for e in 0..mesh.num_elements() {
            if !material.solid[e] {
                continue;
            }
            // Match the element to its particle by centroid.
            let c = mesh.element_centroid(e);
            let p = flow
                .particles
                .iter()
                .min_by(|a, b| {
                    let da: f64 = (0..d).map(|i| (a.center[i] - c[i]).powi(2)).sum();
                    let db: f64 = (0..d).map(|i| (b.center[i] - c[i]).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            for &node in &mesh.element_nodes(e)[..4] {
                let x = mesh.node_position(node);
                let rx = x[0] - p.center[0];
                let ry = x[1] - p.center[1];
                let expect = [
                    p.motion.u[0] - p.motion.r[0] * ry,
                    p.motion.u[1] + p.motion.r[0] * rx,
                ];
                for i in 0..2 {
                    assert!(
                        (flow.u.values[node * 2 + i] - expect[i]).abs() < 1e-13,
                        "rigid velocity must be exact"
                    );
                }
            }
        }
        // Pressure on solid-interior nodes is identically zero.
        let w = fluid_pressure_weights(&mesh, &material.solid.iter().map(|&s| !s).collect::<Vec<_>>());
        for (node, &wn) in w.iter().enumerate() {
            if wn == 0.0 {
                assert_eq!(flow.p.values[node], 0.0);
            }
        }
        assert!(flow.energy.relative_residual < 1e-7);
    }

    #[test]
    fn uniform_medium_correctors_vanish() {
        // mu constant, no particles: phi1 = u1 = 0 and phi_eps = phi0,
        // u_eps and u0 both solve plain Stokes under a gradient load.
        let spec = GeometrySpec::None { mu: 1.0 };
        let cell_mesh = build_unit_cell_mesh(2, 8).unwrap();
        let cell_mat = assign_material(&cell_mesh, &spec, None).unwrap();
        let cells = solve_cell_problems(&cell_mesh, &cell_mat, RigidMode::Eliminate, 1e-11).unwrap();
        let tensors = crate::cell::compute_effective_tensors(&cells).unwrap();
        let macro_mesh = build_box_mesh(2, &[1.0, 1.0], 16).unwrap();
        let k = KSpec::Constant {
            k: [1.0, 0.5, 0.0],
        };
        let p = params(1.0, [0.0, -1.0, 0.0]);
        let macro_state =
            crate::macroscale::solve_macro(&macro_mesh, &tensors, &p, &k, 1e-11).unwrap();
        let report = corrector_study(
            &spec,
            &cells,
            &macro_state,
            &k,
            &[0.5],
            16,
            RigidMode::Eliminate,
            1e-11,
        )
        .unwrap();
        let e = &report.entries[0];
        assert!(e.potential_corrector_l2 <= 1e-7, "{}", e.potential_corrector_l2);
        assert!(e.velocity_corrector_l2 <= 1e-6, "{}", e.velocity_corrector_l2);
        assert!(e.stress_gap_l2 <= 1e-6, "{}", e.stress_gap_l2);
    }

    #[test]
    fn maxwell_stress_closed_forms() {
        // grad phi = e1, mu = 1, S = 1 -> T = diag(1/2, -1/2).
        let t = maxwell_stress(1.0, 1.0, &[1.0, 0.0, 0.0], 2);
        assert!((t[0][0] - 0.5).abs() < 1e-15 && (t[1][1] + 0.5).abs() < 1e-15);
        assert!(t[0][1] == 0.0 && t[1][0] == 0.0);
        // Trace-free in 2D for any argument.
        let t = maxwell_stress(1.7, 2.3, &[0.4, -1.1, 0.0], 2);
        assert!((t[0][0] + t[1][1]).abs() < 1e-14);
        // Quadratic homogeneity: T(2 phi) = 4 T(phi).
        let t2 = maxwell_stress(1.7, 2.3, &[0.8, -2.2, 0.0], 2);
        for a in 0..2 {
            for b in 0..2 {
                assert!((t2[a][b] - 4.0 * t[a][b]).abs() < 1e-13);
            }
        }
    }
}
