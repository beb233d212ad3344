use super::{nearest_index, normalize, Direction, HrtfBundle, NormRange, Result};
use crate::dsp::{magnitude_spectrum, N_BINS};

pub const PATCH_SIDE: usize = 5;
/// 0.08π rad.
pub const PATCH_STEP_DEG: f64 = 14.4;

/// Normalised magnitudes, indexed ear × azimuth offset × elevation offset ×
/// bin.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTensor {
    pub values: Vec<f64>,
}

impl PatchTensor {
    pub fn at(&self, ear: usize, i_az: usize, j_el: usize, bin: usize) -> f64 {
        self.values[((ear * PATCH_SIDE + i_az) * PATCH_SIDE + j_el) * N_BINS + bin]
    }
}

/// Nearest grid index for each of the 5×5 cells around `center`, azimuth
/// offset major. Elevations past a pole are clamped to it.
pub fn patch_indices(grid: &[Direction], center: &Direction) -> [usize; PATCH_SIDE * PATCH_SIDE] {
    let mut out = [0; PATCH_SIDE * PATCH_SIDE];
    let half = (PATCH_SIDE / 2) as f64;
    for i in 0..PATCH_SIDE {
        for j in 0..PATCH_SIDE {
            let d = Direction::new(
                center.azimuth + (i as f64 - half) * PATCH_STEP_DEG,
                center.elevation + (j as f64 - half) * PATCH_STEP_DEG,
            );
            out[i * PATCH_SIDE + j] = nearest_index(grid, &d);
        }
    }
    out
}

pub fn extract_patch(bundle: &HrtfBundle, subject: usize, center: &Direction, range: NormRange) -> Result<PatchTensor> {
    let idx = patch_indices(&bundle.grid, center);
    let mut values = vec![0.0; 2 * PATCH_SIDE * PATCH_SIDE * N_BINS];
    for (cell, &d) in idx.iter().enumerate() {
        let h = bundle.hrir(subject, d);
        for (ear, taps) in [&h.left, &h.right].into_iter().enumerate() {
            let mag = magnitude_spectrum(taps)?;
            let base = (ear * PATCH_SIDE * PATCH_SIDE + cell) * N_BINS;
            for (k, m) in mag.into_iter().enumerate() {
                values[base + k] = normalize(m, range);
            }
        }
    }
    Ok(PatchTensor { values })
}
