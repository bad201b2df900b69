use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

/// How head yaw is turned into the residual gate coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GateMode {
    /// `sigmoid(4/π·|yaw| − 1)`
    #[default]
    Nonlinear,
    /// `clamp(|yaw| / (π/2), 0, 1)`
    Linear,
    /// Always 1: the residual is added regardless of pose.
    Closed,
}

impl GateMode {
    pub const ALL: [GateMode; 3] = [GateMode::Nonlinear, GateMode::Linear, GateMode::Closed];

    pub fn name(self) -> &'static str {
        match self {
            GateMode::Nonlinear => "nonlinear",
            GateMode::Linear => "linear",
            GateMode::Closed => "closed",
        }
    }
}

impl fmt::Display for GateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nonlinear" => Ok(GateMode::Nonlinear),
            "linear" => Ok(GateMode::Linear),
            "closed" => Ok(GateMode::Closed),
            other => Err(format!("unknown gate mode `{other}`")),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gate coefficient in `[0, 1]` for a yaw angle in radians.
///
/// Only the magnitude of the yaw matters, so left and right profiles of the
/// same severity receive the same coefficient.
pub fn yaw_coefficient(yaw: f64, mode: GateMode) -> f64 {
    let magnitude = yaw.abs();
    match mode {
        GateMode::Nonlinear => sigmoid(4.0 / PI * magnitude - 1.0),
        GateMode::Linear => (magnitude / FRAC_PI_2).clamp(0.0, 1.0),
        GateMode::Closed => 1.0,
    }
}
