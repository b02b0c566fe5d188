//! Artifact writers: tensors CSV, corrector CSV, legacy ASCII VTK, and
//! the run log. Data files are bit-deterministic (fixed float
//! formatting, fixed iteration order, no timestamps); wall-clock
//! information goes to run.log only.

use std::io::Write;
use std::path::Path;

use homog_core::cell::EffectiveTensors;
use homog_core::dns::CorrectorReport;
use homog_core::mesh::PeriodicMesh;

use crate::error::CliError;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// effective_tensors.csv: schema `tensor,i,j,m,n,value` with 1-based
/// indices and 0 for unused slots; config hash in a leading comment.
pub fn tensors_csv(tensors: &EffectiveTensors, config_hash: &str) -> String {
    let d = tensors.d;
    let mut s = String::new();
    s.push_str(&format!("# config_hash={config_hash}\n"));
    s.push_str("tensor,i,j,m,n,value\n");
    for (name, m) in [
        ("mu_eff", &tensors.mu_eff),
        ("mu_eff_linear", &tensors.mu_eff_linear),
    ] {
        for i in 0..d {
            for j in 0..d {
                s.push_str(&format!("{name},{},{},0,0,{}\n", i + 1, j + 1, fmt(m[i][j])));
            }
        }
    }
    for (name, t) in [
        ("n", &tensors.n),
        ("n_direct", &tensors.n_direct),
        ("b_raw", &tensors.b_raw),
        ("b_symmetrized", &tensors.b_symmetrized),
    ] {
        for i in 0..d {
            for j in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        s.push_str(&format!(
                            "{name},{},{},{},{},{}\n",
                            i + 1,
                            j + 1,
                            m + 1,
                            n + 1,
                            fmt(t[i][j][m][n])
                        ));
                    }
                }
            }
        }
    }
    s
}

/// corrector_report.csv: one row per epsilon.
pub fn corrector_csv(report: &CorrectorReport, config_hash: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!("# config_hash={config_hash}\n"));
    s.push_str(
        "eps,potential_corrector_l2,potential_ablation_l2,velocity_corrector_l2,\
         stress_gap_l1,stress_gap_l2,\
         pressure_weak_gap_1,pressure_weak_gap_2,pressure_weak_gap_3,\
         pressure_weak_gap_4,pressure_weak_gap_5,\
         u_h1,p_l2,phi_grad_l2,flow_energy_residual\n",
    );
    for e in &report.entries {
        let mut row = vec![
            fmt(e.eps),
            fmt(e.potential_corrector_l2),
            fmt(e.potential_ablation_l2),
            fmt(e.velocity_corrector_l2),
            fmt(e.stress_gap_l1),
            fmt(e.stress_gap_l2),
        ];
        row.extend(e.pressure_weak_gaps.iter().map(|&v| fmt(v)));
        row.extend([
            fmt(e.u_h1),
            fmt(e.p_l2),
            fmt(e.phi_grad_l2),
            fmt(e.flow_energy_residual),
        ]);
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Point or cell data attached to a VTK export.
pub enum VtkField {
    PointScalars(&'static str, Vec<f64>),
    PointVectors(&'static str, Vec<[f64; 3]>),
    CellScalars(&'static str, Vec<f64>),
}

/// Legacy ASCII VTK structured-points export of nodal/element data on a
/// box mesh. The config hash is carried in the title line.
pub fn vtk(mesh: &PeriodicMesh, fields: &[VtkField], config_hash: &str) -> String {
    let d = mesh.d;
    let npa = mesh.nodes_per_axis();
    let (nx, ny, nz) = (npa[0], npa[1], if d == 3 { npa[2] } else { 1 });
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&format!("homog fields config_hash={config_hash}\n"));
    s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    s.push_str(&format!("DIMENSIONS {nx} {ny} {nz}\n"));
    s.push_str("ORIGIN 0 0 0\n");
    s.push_str(&format!(
        "SPACING {} {} {}\n",
        fmt(mesh.h(0)),
        fmt(mesh.h(1)),
        if d == 3 { fmt(mesh.h(2)) } else { fmt(1.0) }
    ));

    // VTK orders points x-fastest; map to our node ids explicitly.
    let mut node_order = Vec::with_capacity(nx * ny * nz);
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                node_order.push(mesh.node_index([ix, iy, iz]));
            }
        }
    }
    let mut cell_order = Vec::with_capacity(mesh.num_elements());
    let nze = if d == 3 { mesh.n[2] } else { 1 };
    for iz in 0..nze {
        for iy in 0..mesh.n[1] {
            for ix in 0..mesh.n[0] {
                cell_order.push(mesh.element_index([ix, iy, iz]));
            }
        }
    }

    let mut wrote_point_header = false;
    let mut wrote_cell_header = false;
    for f in fields {
        match f {
            VtkField::PointScalars(name, vals) => {
                if !wrote_point_header {
                    s.push_str(&format!("POINT_DATA {}\n", node_order.len()));
                    wrote_point_header = true;
                }
                s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
                for &node in &node_order {
                    s.push_str(&fmt(vals[node]));
                    s.push('\n');
                }
            }
            VtkField::PointVectors(name, vals) => {
                if !wrote_point_header {
                    s.push_str(&format!("POINT_DATA {}\n", node_order.len()));
                    wrote_point_header = true;
                }
                s.push_str(&format!("VECTORS {name} double\n"));
                for &node in &node_order {
                    let v = vals[node];
                    s.push_str(&format!("{} {} {}\n", fmt(v[0]), fmt(v[1]), fmt(v[2])));
                }
            }
            VtkField::CellScalars(name, vals) => {
                if !wrote_cell_header {
                    s.push_str(&format!("CELL_DATA {}\n", cell_order.len()));
                    wrote_cell_header = true;
                }
                s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
                for &e in &cell_order {
                    s.push_str(&fmt(vals[e]));
                    s.push('\n');
                }
            }
        }
    }
    s
}

/// Append-only wall-clock log (the only artifact allowed to differ
/// between identical runs).
pub struct RunLog {
    file: Option<std::fs::File>,
    start: std::time::Instant,
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        Ok(RunLog {
            file: Some(file),
            start: std::time::Instant::now(),
        })
    }

    pub fn note(&mut self, stage: &str) {
        if let Some(f) = &mut self.file {
            let t = self.start.elapsed().as_secs_f64();
            let _ = writeln!(f, "t={t:.3}s stage={stage}");
        }
    }
}
