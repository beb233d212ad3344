//! Phone-pose to head-frame geometry and the body-parameter estimators.
//!
//! Poses live in the geographic frame (GCF) centred on the shoulder of the
//! measuring arm; directions are returned in the head frame (HCF). Angles are
//! degrees, azimuth clockwise seen from above, matching [`Direction`].

mod lm;
mod refs;

use thiserror::Error;

use crate::dataset::Direction;

pub use refs::{calibrate, find_peak_reference, find_references, find_zero_references, HandReferences};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("horizontal projection has zero length")]
    Degenerate,
    #[error("zero-ITD references are {0:.1} degrees apart in azimuth")]
    InconsistentReferences(f64),
    #[error("zero-ITD references differ by {0:.1} degrees in elevation")]
    ElevationMismatch(f64),
    #[error("ITD never changes sign")]
    NoSignChange,
    #[error("ITD magnitude peaks on the boundary of the sampled poses")]
    PeakOnBoundary,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no samples for the {0:?} hand")]
    MissingHand(Side),
    #[error("invalid body parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Which shoulder the frame is centred on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Right => 1.0,
            Side::Left => -1.0,
        }
    }
}

/// Orientation of the phone's long edge in the geographic frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhonePose {
    pub azimuth: f64,
    pub elevation: f64,
}

impl PhonePose {
    /// Wraps azimuth into (-180, 180] and clamps elevation.
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        let d = Direction::new(azimuth, elevation);
        Self {
            azimuth: d.azimuth,
            elevation: d.elevation,
        }
    }

    /// Same pose reflected through the GCF north-up plane.
    pub fn mirrored(self) -> Self {
        Self::new(-self.azimuth, self.elevation)
    }
}

/// Rotation `alpha` from GCF to HCF plus the shoulder offsets as fractions of
/// the shoulder-to-speaker distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyParams {
    pub alpha: f64,
    pub r_sh: f64,
    pub r_z: f64,
    pub side: Side,
}

impl BodyParams {
    pub fn new(alpha: f64, r_sh: f64, r_z: f64, side: Side) -> Result<Self> {
        if !(r_sh.is_finite() && (0.0..1.0).contains(&r_sh)) {
            return Err(GeometryError::InvalidParams(format!("r_sh = {r_sh}")));
        }
        if !(r_z.is_finite() && r_z.abs() < 1.0 && alpha.is_finite()) {
            return Err(GeometryError::InvalidParams(format!("r_z = {r_z}, alpha = {alpha}")));
        }
        Ok(Self { alpha, r_sh, r_z, side })
    }

    pub fn with_side(self, side: Side) -> Self {
        Self { side, ..self }
    }
}

/// One ITD reading at a reported phone pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItdSample {
    pub pose: PhonePose,
    pub itd: f64,
}

/// Maps a phone pose to the source direction seen from the head centre.
///
/// Left-hand frames are handled by mirroring pose and rotation, applying
/// the right-hand transform and mirroring the result back.
pub fn gcf_to_hcf(pose: PhonePose, params: &BodyParams) -> Result<Direction> {
    match params.side {
        Side::Right => right_hcf(pose.azimuth, pose.elevation, params),
        Side::Left => {
            let mirrored = BodyParams {
                alpha: -params.alpha,
                side: Side::Right,
                ..*params
            };
            let d = right_hcf(-pose.azimuth, pose.elevation, &mirrored)?;
            Ok(Direction::new(-d.azimuth, d.elevation))
        }
    }
}

fn right_hcf(phi: f64, theta: f64, p: &BodyParams) -> Result<Direction> {
    let (phi, theta) = ((phi - p.alpha).to_radians(), theta.to_radians());
    let x = theta.cos() * phi.sin() + p.r_sh;
    let y = theta.cos() * phi.cos();
    let z = theta.sin() - p.r_z;
    ground_truth_angles(x, y, z)
}

/// Angles of the point (x', y', z') seen from the HCF origin.
pub fn ground_truth_angles(x: f64, y: f64, z: f64) -> Result<Direction> {
    let horiz = x.hypot(y);
    if horiz <= 1e-12 * horiz.hypot(z) || !horiz.is_finite() || !z.is_finite() {
        return Err(GeometryError::Degenerate);
    }
    Ok(Direction::new(x.atan2(y).to_degrees(), z.atan2(horiz).to_degrees()))
}

/// Shoulder offset ratio from the two zero-ITD references.
pub fn estimate_rsh(left_itd_zero: PhonePose, right_itd_zero: PhonePose) -> Result<f64> {
    let dphi = left_itd_zero.azimuth - right_itd_zero.azimuth;
    if dphi.abs() > 180.0 {
        return Err(GeometryError::InconsistentReferences(dphi));
    }
    let del = left_itd_zero.elevation - right_itd_zero.elevation;
    if del.abs() > 5.0 {
        return Err(GeometryError::ElevationMismatch(del));
    }
    let theta = (0.5 * (left_itd_zero.elevation + right_itd_zero.elevation)).to_radians();
    Ok((0.5 * dphi).to_radians().sin() * theta.cos())
}

/// Rotation angle from the right-hand |ITD| maximum, where the arm points
/// along the interaural axis.
pub fn estimate_alpha(max_itd_pose: PhonePose) -> f64 {
    Direction::new(max_itd_pose.azimuth - 90.0, 0.0).azimuth
}

pub fn estimate_rz(max_itd_pose: PhonePose) -> f64 {
    max_itd_pose.elevation.to_radians().sin()
}
