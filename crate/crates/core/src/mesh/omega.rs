use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric shape of the perturbation support `Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum OmegaSpec {
    /// Disk of the given radius centred at the origin.
    ConcentricDisk { radius: f64 },
    /// `{ r_in < |x| < r_out, |arg x − center_angle| < angle_span / 2 }`;
    /// a span of 2π gives a full annulus.
    AnnulusSector {
        r_in: f64,
        r_out: f64,
        angle_span: f64,
        #[serde(default)]
        center_angle: f64,
    },
    /// Disk with an arbitrary centre.
    OffsetDisk { center: [f64; 2], radius: f64 },
}

impl OmegaSpec {
    pub fn concentric(radius: f64) -> Self {
        OmegaSpec::ConcentricDisk { radius }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOmega(m));
        match *self {
            OmegaSpec::ConcentricDisk { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
            }
            OmegaSpec::AnnulusSector { r_in, r_out, angle_span, center_angle } => {
                if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
                    return bad(format!("need 0 < r_in < r_out, got {r_in}, {r_out}"));
                }
                if !(angle_span > 0.0 && angle_span <= 2.0 * PI + 1e-12) {
                    return bad(format!("angle_span must lie in (0, 2π], got {angle_span}"));
                }
                if !center_angle.is_finite() {
                    return bad("center_angle must be finite".into());
                }
            }
            OmegaSpec::OffsetDisk { center, radius } => {
                if !(radius > 0.0 && radius.is_finite() && center.iter().all(|c| c.is_finite())) {
                    return bad(format!("invalid offset disk {center:?}, {radius}"));
                }
            }
        }
        if self.clearance() <= 0.0 {
            return bad(format!("Omega is not compactly contained in the unit disk ({self:?})"));
        }
        Ok(())
    }

    /// Distance from the closure of `Ω` to the unit circle.
    pub fn clearance(&self) -> f64 {
        match *self {
            OmegaSpec::ConcentricDisk { radius } => 1.0 - radius,
            OmegaSpec::AnnulusSector { r_out, .. } => 1.0 - r_out,
            OmegaSpec::OffsetDisk { center, radius } => 1.0 - center[0].hypot(center[1]) - radius,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            OmegaSpec::ConcentricDisk { radius } | OmegaSpec::OffsetDisk { radius, .. } => PI * radius * radius,
            OmegaSpec::AnnulusSector { r_in, r_out, angle_span, .. } => {
                0.5 * angle_span.min(2.0 * PI) * (r_out * r_out - r_in * r_in)
            }
        }
    }

    /// Membership of the closure of `Ω`, widened by `tol`.
    pub fn contains(&self, x: [f64; 2], tol: f64) -> bool {
        match *self {
            OmegaSpec::ConcentricDisk { radius } => x[0].hypot(x[1]) <= radius + tol,
            OmegaSpec::OffsetDisk { center, radius } => (x[0] - center[0]).hypot(x[1] - center[1]) <= radius + tol,
            OmegaSpec::AnnulusSector { r_in, r_out, angle_span, center_angle } => {
                let r = x[0].hypot(x[1]);
                if r < r_in - tol || r > r_out + tol {
                    return false;
                }
                if angle_span >= 2.0 * PI {
                    return true;
                }
                let d = crate::potentials::angular_distance(x[1].atan2(x[0]), center_angle);
                // tol is a distance; convert the angular excess to arc length
                (d - 0.5 * angle_span) * r <= tol
            }
        }
    }
}
