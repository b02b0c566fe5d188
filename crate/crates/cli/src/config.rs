//! Run configuration: JSON parsing, defaults, validation and the
//! canonical echo-back whose SHA-256 is stamped into every artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use homog_core::macroscale::KSpec;
use homog_core::material::GeometrySpec;
use homog_core::HomogError;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Cell,
    Macro,
    Dns,
    Verify,
}

impl std::fmt::Display for CommandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CommandKind::Cell => "cell",
            CommandKind::Macro => "macro",
            CommandKind::Dns => "dns",
            CommandKind::Verify => "verify",
        };
        f.write_str(s)
    }
}

/// Geometry as written in config files. Axes here are 1-based; the
/// conversion to the 0-based core convention happens in `to_core`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    None {
        #[serde(default = "one")]
        mu: f64,
    },
    Disk {
        radius: f64,
        #[serde(default = "default_center")]
        center: [f64; 3],
        #[serde(default = "one")]
        mu_fluid: f64,
        #[serde(default = "one")]
        mu_solid: f64,
    },
    Layered {
        /// 1-based layer normal axis.
        #[serde(default = "one_usize")]
        axis: usize,
        #[serde(default = "half")]
        split: f64,
        mu: [f64; 2],
    },
    Checkerboard {
        mu: [f64; 2],
    },
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig::None { mu: 1.0 }
    }
}

impl GeometryConfig {
    pub fn to_core(&self, d: usize) -> Result<GeometrySpec, HomogError> {
        Ok(match *self {
            GeometryConfig::None { mu } => GeometrySpec::None { mu },
            GeometryConfig::Disk {
                radius,
                center,
                mu_fluid,
                mu_solid,
            } => GeometrySpec::Disk {
                radius,
                center,
                mu_fluid,
                mu_solid,
            },
            GeometryConfig::Layered { axis, split, mu } => {
                if axis == 0 || axis > d {
                    return Err(HomogError::ValidationError(format!(
                        "layer axis must be in 1..={d}, got {axis}"
                    )));
                }
                GeometrySpec::Layered {
                    axis: axis - 1,
                    split,
                    mu,
                }
            }
            GeometryConfig::Checkerboard { mu } => GeometrySpec::Checkerboard { mu },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RigidModeConfig {
    #[default]
    Eliminate,
    Penalty,
}

impl RigidModeConfig {
    pub fn to_core(self) -> homog_core::fem::stokes::RigidMode {
        match self {
            RigidModeConfig::Eliminate => homog_core::fem::stokes::RigidMode::Eliminate,
            RigidModeConfig::Penalty => homog_core::fem::stokes::RigidMode::Penalty,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn default_center() -> [f64; 3] {
    [0.5, 0.5, 0.5]
}
fn default_d() -> usize {
    2
}
fn default_n() -> usize {
    64
}
fn default_macro_n() -> usize {
    16
}
fn default_epc() -> usize {
    16
}
fn default_eps_list() -> Vec<f64> {
    vec![0.5, 0.25, 0.125]
}
fn default_tol() -> f64 {
    1e-10
}
fn default_macro_tol() -> f64 {
    1e-8
}
fn default_g() -> [f64; 3] {
    [0.0, -1.0, 0.0]
}
fn default_k() -> KSpec {
    KSpec::Constant {
        k: [1.0, 0.0, 0.0],
    }
}
fn default_vtk() -> bool {
    true
}

/// Full run configuration with every default filled in explicitly when
/// parsed, so the echo-back round-trips losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Unit-cell resolution (elements per axis).
    #[serde(default = "default_n")]
    pub n: usize,
    /// Macro box resolution.
    #[serde(default = "default_macro_n")]
    pub macro_n: usize,
    /// Fine-scale elements per unit cell per axis.
    #[serde(default = "default_epc")]
    pub dns_elements_per_cell: usize,
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    /// Cell-problem solver tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Macro / fine-scale solver tolerance.
    #[serde(default = "default_macro_tol")]
    pub macro_tol: f64,
    #[serde(default = "one")]
    pub re: f64,
    #[serde(default = "one")]
    pub fr: f64,
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default = "default_g")]
    pub g: [f64; 3],
    #[serde(default = "default_k")]
    pub k: KSpec,
    #[serde(default)]
    pub rigid_mode: RigidModeConfig,
    /// Optional contrast bound override.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Write field files (legacy ASCII VTK).
    #[serde(default = "default_vtk")]
    pub write_vtk: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let inval = |m: String| Err(CliError::Config(m));
        if !(self.d == 2 || self.d == 3) {
            return inval(format!("d must be 2 or 3, got {}", self.d));
        }
        if !(self.re > 0.0 && self.re.is_finite()) {
            return inval("Re must be positive".to_string());
        }
        if !(self.fr > 0.0 && self.fr.is_finite()) {
            return inval("Fr must be positive".to_string());
        }
        if !self.s.is_finite() {
            return inval("S must be finite".to_string());
        }
        for (name, v) in [("tol", self.tol), ("macro_tol", self.macro_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return inval(format!("{name} must be in (0, 1), got {v}"));
            }
        }
        if self.n < 4 {
            return inval(format!("n must be >= 4, got {}", self.n));
        }
        if self.macro_n < 4 {
            return inval(format!("macro_n must be >= 4, got {}", self.macro_n));
        }
        if self.eps_list.is_empty() {
            return inval("eps_list must not be empty".to_string());
        }
        for &e in &self.eps_list {
            let m = 1.0 / e;
            if !(e > 0.0 && e <= 1.0) || (m - m.round()).abs() > 1e-9 {
                return inval(format!("epsilon must be 1/m for integer m, got {e}"));
            }
        }
        if self.d == 3 && matches!(self.command, CommandKind::Dns | CommandKind::Verify) {
            // Desk-scale guard for 3D fine-scale runs.
            if self.dns_elements_per_cell != 8 || self.eps_list.iter().any(|&e| e < 0.25) {
                return inval(
                    "3D fine-scale runs support only 8 elements per cell and epsilon >= 1/4"
                        .to_string(),
                );
            }
        }
        // Surface the core-side geometry conversion errors early.
        self.geometry
            .to_core(self.d)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical echo-back: pretty JSON with all defaults materialized.
    pub fn echo_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical echo-back, hex-encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.echo_json().as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and validate a config file.
pub fn parse_config(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Parse(format!(
            "{} at line {}, column {}",
            e, // serde_json includes the failing field in the message
            e.line(),
            e.column()
        ))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(s).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_str(r#"{"command":"cell","geometry":{"shape":"none","mu":1.0}}"#).unwrap();
        assert_eq!(cfg.d, 2);
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.tol, 1e-10);
        assert_eq!(cfg.macro_tol, 1e-8);
    }

    #[test]
    fn zero_reynolds_is_rejected() {
        let r = parse_str(r#"{"command":"macro","re":0.0}"#);
        match r {
            Err(CliError::Config(m)) => assert!(m.contains("Re must be positive"), "{m}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn echo_back_roundtrips() {
        let cfg = parse_str(
            r#"{"command":"verify","geometry":{"shape":"layered","axis":1,"split":0.5,"mu":[1.0,3.0]},"eps_list":[0.5,0.25]}"#,
        )
        .unwrap();
        let echoed: RunConfig = serde_json::from_str(&cfg.echo_json()).unwrap();
        assert_eq!(cfg, echoed);
        assert_eq!(cfg.hash(), echoed.hash());
    }

    #[test]
    fn one_based_axis_converts() {
        let cfg = parse_str(
            r#"{"command":"cell","geometry":{"shape":"layered","axis":2,"split":0.5,"mu":[1.0,3.0]}}"#,
        )
        .unwrap();
        match cfg.geometry.to_core(2).unwrap() {
            GeometrySpec::Layered { axis, .. } => assert_eq!(axis, 1),
            g => panic!("unexpected geometry {g:?}"),
        }
        let bad = parse_str(
            r#"{"command":"cell","geometry":{"shape":"layered","axis":3,"split":0.5,"mu":[1.0,3.0]}}"#,
        );
        assert!(matches!(bad, Err(CliError::Config(_))));
    }

    #[test]
    fn bad_epsilon_is_rejected() {
        let r = parse_str(r#"{"command":"dns","eps_list":[0.3]}"#);
        assert!(matches!(r, Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let r = parse_str(r#"{"command":"cell","bogus":1}"#);
        assert!(matches!(r, Err(CliError::Parse(_))));
    }
}
