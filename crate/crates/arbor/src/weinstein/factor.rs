//! Two-dimensional factor fields with their potentials.

use serde::{Deserialize, Serialize};

use super::profile::{axis_speed, blend, k, tube, Weights, TUBE_X};
use super::WeinsteinError;

/// Largest admissible tube constant.
pub const MAX_EPSILON: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Xplus,
    Xminus,
    Y,
    Radial,
    Cotangent,
}

impl FactorKind {
    /// Orientation of the birth-death segment, for the `X` kinds.
    pub fn sign(self) -> Option<f64> {
        match self {
            Self::Xplus => Some(1.0),
            Self::Xminus => Some(-1.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorField {
    pub kind: FactorKind,
    /// Tube constant: `eps x^2 <= x dx(V) <= x^2 / eps` on [`FactorField::in_tube`].
    pub epsilon: f64,
}

/// Field of `X^sigma` at `(x, y)`.
pub(crate) fn x_field(sigma: f64, x: f64, y: f64) -> [f64; 2] {
    let s = sigma * y;
    let (m, dm) = tube(x);
    let (kv, dk) = k(s);
    [x / 2.0 + m * dk, y / 2.0 - sigma * dm * kv]
}

/// Potential of `X^sigma`, with gradient.
fn x_potential(sigma: f64, x: f64, y: f64) -> (f64, [f64; 2]) {
    let w = Weights::get();
    let s = sigma * y;
    let (a, da) = w.a_factor(s);
    let (d, dd) = w.dip(s);
    let (z, dz) = blend(x);
    let val = a * x * x + y * y - (1.0 - z) * d;
    (val, [2.0 * a * x + dz * d, sigma * (da * x * x - (1.0 - z) * dd) + 2.0 * y])
}

impl FactorField {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        match self.kind {
            FactorKind::Radial => [x / 2.0, y / 2.0],
            FactorKind::Y | FactorKind::Cotangent => [0.0, y],
            FactorKind::Xplus | FactorKind::Xminus => x_field(self.kind.sign().unwrap_or(1.0), x, y),
        }
    }

    /// Lyapunov potential and its gradient.
    pub fn potential(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        match self.kind {
            FactorKind::Radial => (x * x + y * y, [2.0 * x, 2.0 * y]),
            FactorKind::Y | FactorKind::Cotangent => (y * y, [0.0, 2.0 * y]),
            FactorKind::Xplus | FactorKind::Xminus => x_potential(self.kind.sign().unwrap_or(1.0), x, y),
        }
    }

    /// Constructed zeros as `(point, index)`.
    pub fn zeros(&self) -> Vec<([f64; 2], usize)> {
        match self.kind {
            FactorKind::Radial => vec![([0.0, 0.0], 0)],
            FactorKind::Y | FactorKind::Cotangent => Vec::new(),
            FactorKind::Xplus | FactorKind::Xminus => {
                let sg = self.kind.sign().unwrap_or(1.0);
                vec![([0.0, 0.0], 0), ([0.0, sg], 1), ([0.0, 2.0 * sg], 0)]
            }
        }
    }

    /// The tube around the birth-death segment where the `x` estimate is stated.
    pub fn in_tube(&self, x: f64, y: f64) -> bool {
        match self.kind.sign() {
            Some(sg) => x.abs() <= TUBE_X.0 && (0.9..=2.1).contains(&(sg * y)),
            None => false,
        }
    }

    /// `x dx(V) / x^2` on the tube axis at height `y`.
    pub fn tube_ratio(&self, y: f64) -> f64 {
        1.0 - axis_speed(self.kind.sign().unwrap_or(1.0) * y).1
    }
}

pub fn make_factor(kind: FactorKind, epsilon: f64) -> Result<FactorField, WeinsteinError> {
    if !(epsilon > 0.0 && epsilon <= MAX_EPSILON) {
        return Err(WeinsteinError::Epsilon(epsilon));
    }
    Ok(FactorField { kind, epsilon })
}
