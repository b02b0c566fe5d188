//! Pipeline orchestration: cell -> effective tensors -> macro -> dns ->
//! reports, with optional thread-parallel independent solves.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::json;

use homog_core::cell::{
    compute_effective_tensors, solve_magnetic_cell, solve_scalar_cell, solve_viscous_cell,
    index_pairs, CellSolutionSet, EffectiveTensors,
};
use homog_core::dns::{corrector_entry, solve_dns, CorrectorReport, DnsState};
use homog_core::macroscale::{maxwell_stress, solve_macro, MacroParams, MacroState};
use homog_core::material::{assign_material, GeometrySpec, MaterialField};
use homog_core::mesh::{build_box_mesh, build_unit_cell_mesh, PeriodicMesh};
use homog_core::HomogError;

use crate::config::{CommandKind, RunConfig};
use crate::error::CliError;
use crate::output::{corrector_csv, tensors_csv, vtk, write_text, RunLog, VtkField};

/// Map a work list over up to `threads` OS threads, preserving order.
pub fn par_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    if threads <= 1 || n <= 1 {
        return items.into_iter().map(f).collect();
    }
    let slots: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = slots[i].lock().unwrap().take().unwrap();
                let r = f(item);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().unwrap())
        .collect()
}

enum PairTask {
    Viscous(usize, usize),
    Magnetic(usize, usize),
}

enum PairSolution {
    Viscous(homog_core::cell::ViscousCellSolution),
    Magnetic(homog_core::cell::MagneticCellSolution),
}

/// All cell problems, with independent solves distributed over threads.
fn solve_cells(
    mesh: &PeriodicMesh,
    material: &MaterialField,
    cfg: &RunConfig,
    threads: usize,
) -> Result<CellSolutionSet, HomogError> {
    let mode = cfg.rigid_mode.to_core();
    let scalar: Vec<_> = par_map((0..cfg.d).collect(), threads, |axis| {
        solve_scalar_cell(mesh, material, axis, cfg.tol)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut tasks = Vec::new();
    for &(i, j) in &index_pairs(cfg.d) {
        tasks.push(PairTask::Viscous(i, j));
        tasks.push(PairTask::Magnetic(i, j));
    }
    let solved: Vec<Result<PairSolution, HomogError>> = par_map(tasks, threads, |t| match t {
        PairTask::Viscous(i, j) => {
            solve_viscous_cell(mesh, material, i, j, mode, cfg.tol).map(PairSolution::Viscous)
        }
        PairTask::Magnetic(i, j) => solve_magnetic_cell(mesh, material, &scalar, i, j, mode, cfg.tol)
            .map(PairSolution::Magnetic),
    });
    let mut viscous = Vec::new();
    let mut magnetic = Vec::new();
    for s in solved {
        match s? {
            PairSolution::Viscous(v) => viscous.push(v),
            PairSolution::Magnetic(m) => magnetic.push(m),
        }
    }
    Ok(CellSolutionSet {
        mesh: *mesh,
        material: material.clone(),
        mode,
        tol: cfg.tol,
        scalar,
        viscous,
        magnetic,
    })
}

struct CellStage {
    mesh: PeriodicMesh,
    material: MaterialField,
    cells: CellSolutionSet,
    tensors: EffectiveTensors,
    spec: GeometrySpec,
}

fn run_cell_stage(cfg: &RunConfig, threads: usize) -> Result<CellStage, CliError> {
    let spec = cfg.geometry.to_core(cfg.d)?;
    let mesh = build_unit_cell_mesh(cfg.d, cfg.n)?;
    let material = assign_material(&mesh, &spec, cfg.lambda)?;
    let cells = solve_cells(&mesh, &material, cfg, threads)?;
    let tensors = compute_effective_tensors(&cells)?;
    Ok(CellStage {
        mesh,
        material,
        cells,
        tensors,
        spec,
    })
}

fn solve_infos_json(cells: &CellSolutionSet) -> serde_json::Value {
    json!({
        "scalar": cells.scalar.iter().map(|s| json!({
            "axis": s.axis + 1,
            "iterations": s.info.iterations,
            "relative_residual": s.info.relative_residual,
        })).collect::<Vec<_>>(),
        "viscous": cells.viscous.iter().map(|s| json!({
            "i": s.i + 1, "j": s.j + 1,
            "iterations": s.info.iterations,
            "relative_residual": s.info.relative_residual,
            "energy": s.energy,
            "rigid_motion": s.rigid,
        })).collect::<Vec<_>>(),
        "magnetic": cells.magnetic.iter().map(|s| json!({
            "i": s.i + 1, "j": s.j + 1,
            "iterations": s.info.iterations,
            "relative_residual": s.info.relative_residual,
            "energy": s.energy,
            "rigid_motion": s.rigid,
        })).collect::<Vec<_>>(),
    })
}

fn metadata_json(cfg: &RunConfig, hash: &str) -> serde_json::Value {
    json!({
        "config_hash": hash,
        "config": cfg,
        "conventions": {
            "momentum_sign": "-Div[(2/Re) N:D(u0) - pi0 I + S B~^{ij} di phi0 dj phi0] = (1/Fr^2) g",
            "indices": "1-based in artifacts, axes 1..d",
            "corrector_thresholds": "decrease ratios are engineering choices; the underlying theory claims convergence to 0 without a rate",
        },
    })
}

fn macro_params(cfg: &RunConfig) -> MacroParams {
    MacroParams {
        re: cfg.re,
        fr: cfg.fr,
        s: cfg.s,
        g: cfg.g,
    }
}

fn run_macro_stage(cfg: &RunConfig, tensors: &EffectiveTensors) -> Result<MacroState, CliError> {
    let lengths = [1.0; 3];
    let mesh = build_box_mesh(cfg.d, &lengths[..cfg.d], cfg.macro_n)?;
    Ok(solve_macro(
        &mesh,
        tensors,
        &macro_params(cfg),
        &cfg.k,
        cfg.macro_tol,
    )?)
}

fn macro_json(state: &MacroState) -> serde_json::Value {
    json!({
        "n": state.mesh.n[0],
        "potential_iterations": state.phi0_info.iterations,
        "potential_relative_residual": state.phi0_info.relative_residual,
        "flow_iterations": state.flow.info.iterations,
        "flow_relative_residual": state.flow.info.relative_residual,
        "flow_energy": state.flow.energy,
    })
}

fn split_vectors(d: usize, values: &[f64]) -> Vec<[f64; 3]> {
    values
        .chunks(d)
        .map(|c| {
            let mut v = [0.0; 3];
            v[..d].copy_from_slice(c);
            v
        })
        .collect()
}

fn stress_component_names(d: usize) -> Vec<(&'static str, usize, usize)> {
    if d == 2 {
        vec![
            ("maxwell_stress_11", 0, 0),
            ("maxwell_stress_12", 0, 1),
            ("maxwell_stress_22", 1, 1),
        ]
    } else {
        vec![
            ("maxwell_stress_11", 0, 0),
            ("maxwell_stress_12", 0, 1),
            ("maxwell_stress_13", 0, 2),
            ("maxwell_stress_22", 1, 1),
            ("maxwell_stress_23", 1, 2),
            ("maxwell_stress_33", 2, 2),
        ]
    }
}

fn macro_vtk(cfg: &RunConfig, tensors: &EffectiveTensors, state: &MacroState, hash: &str) -> String {
    let mesh = &state.mesh;
    let d = cfg.d;
    let mid = [0.5; 3];
    // Effective Maxwell stress S B~^{ij} di phi0 dj phi0 per element.
    let mut comps: Vec<Vec<f64>> = vec![Vec::with_capacity(mesh.num_elements()); d * (d + 1) / 2];
    for e in 0..mesh.num_elements() {
        let gp = state.phi0.grad_local(e, &mid);
        let mut m = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                let c = cfg.s * gp[i] * gp[j];
                for a in 0..d {
                    for b in 0..d {
                        m[a][b] += c * tensors.b_symmetrized[i][j][a][b];
                    }
                }
            }
        }
        for (slot, &(_, a, b)) in stress_component_names(d).iter().enumerate() {
            comps[slot].push(m[a][b]);
        }
    }
    let mut fields = vec![
        VtkField::PointScalars("phi0", state.phi0.values.clone()),
        VtkField::PointVectors("u0", split_vectors(d, &state.flow.u0.values)),
        VtkField::PointScalars("pi0", state.flow.pi0.values.clone()),
    ];
    for (slot, &(name, _, _)) in stress_component_names(d).iter().enumerate() {
        fields.push(VtkField::CellScalars(name, std::mem::take(&mut comps[slot])));
    }
    vtk(mesh, &fields, hash)
}

fn dns_vtk(cfg: &RunConfig, state: &DnsState, hash: &str) -> String {
    let mesh = &state.mesh;
    let d = cfg.d;
    let mid = [0.5; 3];
    let mut comps: Vec<Vec<f64>> = vec![Vec::with_capacity(mesh.num_elements()); d * (d + 1) / 2];
    for e in 0..mesh.num_elements() {
        let g = state.phi.grad_local(e, &mid);
        let t = maxwell_stress(cfg.s, state.material.mu[e], &g, d);
        for (slot, &(_, a, b)) in stress_component_names(d).iter().enumerate() {
            comps[slot].push(t[a][b]);
        }
    }
    let mut fields = vec![
        VtkField::PointScalars("phi_eps", state.phi.values.clone()),
        VtkField::PointVectors("u_eps", split_vectors(d, &state.flow.u.values)),
        VtkField::PointScalars("p_eps", state.flow.p.values.clone()),
    ];
    for (slot, &(name, _, _)) in stress_component_names(d).iter().enumerate() {
        fields.push(VtkField::CellScalars(name, std::mem::take(&mut comps[slot])));
    }
    vtk(mesh, &fields, hash)
}

fn dns_json(state: &DnsState) -> serde_json::Value {
    json!({
        "eps": state.eps,
        "n": state.mesh.n[0],
        "potential_iterations": state.phi_info.iterations,
        "potential_relative_residual": state.phi_info.relative_residual,
        "flow_iterations": state.flow.info.iterations,
        "flow_relative_residual": state.flow.info.relative_residual,
        "flow_energy": state.flow.energy,
        "particles": state.flow.particles,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialization failed: {e}")))?;
    s.push('\n');
    write_text(path, &s)
}

/// Execute a validated config, writing artifacts to `out`.
pub fn run(cfg: &RunConfig, out: &Path, threads: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    let hash = cfg.hash();
    write_text(&out.join("config.echo.json"), &cfg.echo_json())?;
    let mut log = RunLog::create(&out.join("run.log"))?;
    log.note("start");

    let stage = run_cell_stage(cfg, threads)?;
    log.note("cell problems solved");
    write_text(
        &out.join("effective_tensors.csv"),
        &tensors_csv(&stage.tensors, &hash),
    )?;

    let mut report = json!({
        "metadata": metadata_json(cfg, &hash),
        "cell": {
            "n": cfg.n,
            "solid_volume_fraction": stage.material.solid_volume_fraction(&stage.mesh),
            "mean_mu": stage.material.mean_mu(&stage.mesh),
            "solves": solve_infos_json(&stage.cells),
        },
        "tensors": stage.tensors,
    });

    match cfg.command {
        CommandKind::Cell => {}
        CommandKind::Macro => {
            let state = run_macro_stage(cfg, &stage.tensors)?;
            log.note("macro solved");
            report["macro"] = macro_json(&state);
            if cfg.write_vtk {
                write_text(
                    &out.join("macro_fields.vtk"),
                    &macro_vtk(cfg, &stage.tensors, &state, &hash),
                )?;
            }
        }
        CommandKind::Dns => {
            let params = macro_params(cfg);
            let mode = cfg.rigid_mode.to_core();
            let states: Vec<Result<DnsState, HomogError>> =
                par_map(cfg.eps_list.clone(), threads, |eps| {
                    solve_dns(
                        cfg.d,
                        &stage.spec,
                        eps,
                        cfg.dns_elements_per_cell,
                        &params,
                        &cfg.k,
                        mode,
                        cfg.macro_tol,
                    )
                });
            let mut rows = Vec::new();
            for s in states {
                let state = s?;
                log.note(&format!("dns eps={} solved", state.eps));
                if cfg.write_vtk {
                    let m = (1.0 / state.eps).round() as usize;
                    write_text(
                        &out.join(format!("dns_fields_m{m}.vtk")),
                        &dns_vtk(cfg, &state, &hash),
                    )?;
                }
                rows.push(dns_json(&state));
            }
            report["dns"] = json!(rows);
        }
        CommandKind::Verify => {
            let state = run_macro_stage(cfg, &stage.tensors)?;
            log.note("macro solved");
            report["macro"] = macro_json(&state);
            let mode = cfg.rigid_mode.to_core();
            let entries: Vec<_> = par_map(cfg.eps_list.clone(), threads, |eps| {
                solve_dns(
                    cfg.d,
                    &stage.spec,
                    eps,
                    cfg.dns_elements_per_cell,
                    &state.params,
                    &cfg.k,
                    mode,
                    cfg.macro_tol,
                )
                .map(|dns| corrector_entry(&dns, &stage.cells, &state))
            })
            .into_iter()
            .collect::<Result<_, _>>()?;
            log.note("corrector study complete");
            let corrector = CorrectorReport {
                elements_per_cell: cfg.dns_elements_per_cell,
                entries,
            };
            let corrector_json = json!({
                "metadata": metadata_json(cfg, &hash),
                "report": corrector,
            });
            write_json(&out.join("corrector_report.json"), &corrector_json)?;
            write_text(
                &out.join("corrector_report.csv"),
                &corrector_csv(&corrector, &hash),
            )?;
            report["corrector"] = json!(corrector);
        }
    }

    write_json(&out.join("report.json"), &report)?;
    log.note("done");
    Ok(())
}
