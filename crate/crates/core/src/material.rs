//! Material data on a mesh: per-element permeability and the
//! fluid/solid phase split defining Y_s, Y_f and the staircase
//! interface Gamma.

use serde::{Deserialize, Serialize};

use crate::error::HomogError;
use crate::mesh::PeriodicMesh;

/// Parametric microstructure description. Shapes are evaluated by
/// centroid membership (staircase interfaces).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum GeometrySpec {
    /// Uniform fluid, permeability `mu`.
    None { mu: f64 },
    /// Rigid disk (2D) / sphere (3D) of permeability `mu_solid` in a
    /// fluid of permeability `mu_fluid`.
    Disk {
        radius: f64,
        center: [f64; 3],
        mu_fluid: f64,
        mu_solid: f64,
    },
    /// Two fluid layers normal to `axis`: mu[0] for y_axis < split,
    /// mu[1] above. No solid phase.
    Layered { axis: usize, split: f64, mu: [f64; 2] },
    /// 2x2 fluid checkerboard in the first two axes. No solid phase.
    Checkerboard { mu: [f64; 2] },
}

impl GeometrySpec {
    /// Permeability and phase at a point of the unit cell.
    pub fn evaluate(&self, y: &[f64; 3], d: usize) -> (f64, bool) {
        match self {
            GeometrySpec::None { mu } => (*mu, false),
            GeometrySpec::Disk {
                radius,
                center,
                mu_fluid,
                mu_solid,
            } => {
                let mut r2 = 0.0;
                for a in 0..d {
                    r2 += (y[a] - center[a]) * (y[a] - center[a]);
                }
                if r2 < radius * radius {
                    (*mu_solid, true)
                } else {
                    (*mu_fluid, false)
                }
            }
            GeometrySpec::Layered { axis, split, mu } => {
                if y[*axis] < *split {
                    (mu[0], false)
                } else {
                    (mu[1], false)
                }
            }
            GeometrySpec::Checkerboard { mu } => {
                let i = (2.0 * y[0]).floor() as i64;
                let j = (2.0 * y[1]).floor() as i64;
                (mu[((i + j).rem_euclid(2)) as usize], false)
            }
        }
    }

    /// True if the spec carries a solid phase.
    pub fn has_solid(&self) -> bool {
        matches!(self, GeometrySpec::Disk { .. })
    }

    /// Largest contrast the spec's permeability values need.
    pub fn natural_contrast(&self) -> f64 {
        let vals: Vec<f64> = match self {
            GeometrySpec::None { mu } => vec![*mu],
            GeometrySpec::Disk {
                mu_fluid, mu_solid, ..
            } => vec![*mu_fluid, *mu_solid],
            GeometrySpec::Layered { mu, .. } | GeometrySpec::Checkerboard { mu } => mu.to_vec(),
        };
        vals.iter().fold(1.0_f64, |m, &v| m.max(v).max(1.0 / v))
    }

    fn validate_shape(&self, mesh: &PeriodicMesh) -> Result<(), HomogError> {
        match self {
            GeometrySpec::None { mu } => positive(*mu, "mu"),
            GeometrySpec::Disk {
                radius,
                mu_fluid,
                mu_solid,
                ..
            } => {
                positive(*mu_fluid, "mu_fluid")?;
                positive(*mu_solid, "mu_solid")?;
                if !(*radius > 0.0 && *radius < 0.5) {
                    return Err(HomogError::ValidationError(format!(
                        "disk radius must be in (0, 0.5), got {radius}"
                    )));
                }
                Ok(())
            }
            GeometrySpec::Layered { axis, split, mu } => {
                positive(mu[0], "mu[0]")?;
                positive(mu[1], "mu[1]")?;
                if *axis >= mesh.d {
                    return Err(HomogError::ValidationError(format!(
                        "layer axis {axis} out of range for d = {}",
                        mesh.d
                    )));
                }
                // Snap requirement: the split must sit on a grid line so
                // the layered oracle is exact up to solver tolerance.
                let s = split * mesh.n[*axis] as f64;
                if (s - s.round()).abs() > 1e-9 || !(*split > 0.0 && *split < 1.0) {
                    return Err(HomogError::ValidationError(format!(
                        "layer split {split} does not lie on a grid line of n = {}",
                        mesh.n[*axis]
                    )));
                }
                Ok(())
            }
            GeometrySpec::Checkerboard { mu } => {
                positive(mu[0], "mu[0]")?;
                positive(mu[1], "mu[1]")?;
                if mesh.n[0] % 2 != 0 || mesh.n[1] % 2 != 0 {
                    return Err(HomogError::ValidationError(format!(
                        "checkerboard needs even n, got {}",
                        mesh.n[0]
                    )));
                }
                Ok(())
            }
        }
    }
}

fn positive(v: f64, name: &str) -> Result<(), HomogError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HomogError::ValidationError(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Per-element permeability and phase flags.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub mu: Vec<f64>,
    pub solid: Vec<bool>,
    /// Contrast bound Lambda with 1/Lambda <= mu_e <= Lambda.
    pub lambda: f64,
}

impl MaterialField {
    /// Solid volume fraction |Y_s| / |domain|.
    pub fn solid_volume_fraction(&self, mesh: &PeriodicMesh) -> f64 {
        let ns = self.solid.iter().filter(|&&s| s).count();
        ns as f64 * mesh.element_volume() / mesh.domain_volume()
    }

    /// Mean permeability (arithmetic average over the domain).
    pub fn mean_mu(&self, mesh: &PeriodicMesh) -> f64 {
        let sum: f64 = self.mu.iter().sum();
        sum * mesh.element_volume() / mesh.domain_volume()
    }

    pub fn has_solid(&self) -> bool {
        self.solid.iter().any(|&s| s)
    }
}

/// Assign material data on a unit-cell mesh by centroid membership.
///
/// `lambda` overrides the contrast bound; by default the smallest bound
/// admitting the spec's own values is used.
pub fn assign_material(
    mesh: &PeriodicMesh,
    spec: &GeometrySpec,
    lambda: Option<f64>,
) -> Result<MaterialField, HomogError> {
    spec.validate_shape(mesh)?;
    let lambda = lambda.unwrap_or_else(|| spec.natural_contrast());
    let ne = mesh.num_elements();
    let mut mu = Vec::with_capacity(ne);
    let mut solid = Vec::with_capacity(ne);
    for e in 0..ne {
        let c = mesh.element_centroid(e);
        let (m, s) = spec.evaluate(&c, mesh.d);
        if m > lambda + 1e-14 || m < 1.0 / lambda - 1e-14 {
            return Err(HomogError::ContrastViolation(format!(
                "mu = {m} outside [{:.6}, {lambda}]",
                1.0 / lambda
            )));
        }
        mu.push(m);
        solid.push(s);
    }
    let field = MaterialField { mu, solid, lambda };
    check_solid_interior(mesh, &field)?;
    if spec.has_solid() && field.has_solid() {
        let comps = solid_components(mesh, &field.solid);
        if comps.len() != 1 {
            return Err(HomogError::ValidationError(format!(
                "solid phase must be one connected component, found {}",
                comps.len()
            )));
        }
    }
    Ok(field)
}

/// Assign oscillatory material data mu(x / eps mod 1) on a box mesh
/// (the fine-scale problem): each element is classified by the unit-cell
/// image of its centroid.
pub fn assign_material_scaled(
    mesh: &PeriodicMesh,
    spec: &GeometrySpec,
    eps: f64,
    lambda: Option<f64>,
) -> Result<MaterialField, HomogError> {
    let lambda = lambda.unwrap_or_else(|| spec.natural_contrast());
    let ne = mesh.num_elements();
    let mut mu = Vec::with_capacity(ne);
    let mut solid = Vec::with_capacity(ne);
    for e in 0..ne {
        let c = mesh.element_centroid(e);
        let mut y = [0.0; 3];
        for a in 0..mesh.d {
            y[a] = (c[a] / eps).rem_euclid(1.0);
        }
        let (m, s) = spec.evaluate(&y, mesh.d);
        mu.push(m);
        solid.push(s);
    }
    Ok(MaterialField { mu, solid, lambda })
}

/// Every solid element must keep a 2h margin to the cell boundary so
/// Y_f stays connected and Gamma avoids the periodicity seam.
fn check_solid_interior(mesh: &PeriodicMesh, field: &MaterialField) -> Result<(), HomogError> {
    for e in 0..mesh.num_elements() {
        if !field.solid[e] {
            continue;
        }
        let c = mesh.element_coords(e);
        for a in 0..mesh.d {
            if c[a] < 2 || c[a] + 3 > mesh.n[a] {
                return Err(HomogError::SolidTouchesBoundary(format!(
                    "solid element at grid position {:?} is within 2h of the boundary",
                    &c[..mesh.d]
                )));
            }
        }
    }
    Ok(())
}

/// Face-connected components of the solid element set (one per
/// particle). Used for validation on unit cells and for per-particle
/// rigid groups in the fine-scale problem.
pub fn solid_components(mesh: &PeriodicMesh, solid: &[bool]) -> Vec<Vec<usize>> {
    let ne = mesh.num_elements();
    let mut comp = vec![usize::MAX; ne];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for start in 0..ne {
        if !solid[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = Vec::new();
        let mut stack = vec![start];
        comp[start] = id;
        while let Some(e) = stack.pop() {
            members.push(e);
            let c = mesh.element_coords(e);
            for a in 0..mesh.d {
                for step in [-1isize, 1] {
                    let ca = c[a] as isize + step;
                    // Solid never touches the boundary, so no wrap.
                    if ca < 0 || ca >= mesh.n[a] as isize {
                        continue;
                    }
                    let mut cn = c;
                    cn[a] = ca as usize;
                    let en = mesh.element_index(cn);
                    if solid[en] && comp[en] == usize::MAX {
                        comp[en] = id;
                        stack.push(en);
                    }
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}
