use super::{Batch, Result, OUTPUT_LEN};
use crate::dataset::{
    encode_direction, normalize, patch_indices, subject_vector, Direction, HrtfBundle, NormRange, N_BASIS,
    PATCH_SIDE,
};
use crate::dsp::{magnitude_spectrum, N_BINS};
use crate::numerics::Tensor;

const CELLS: usize = PATCH_SIDE * PATCH_SIDE;

/// Normalised left-then-right magnitudes of one HRIR pair.
pub(crate) fn normalized_pair(bundle: &HrtfBundle, subject: usize, dir: usize, norm: NormRange) -> Result<Vec<f64>> {
    let h = bundle.hrir(subject, dir);
    let mut out = Vec::with_capacity(OUTPUT_LEN);
    for taps in [&h.left, &h.right] {
        out.extend(magnitude_spectrum(taps)?.into_iter().map(|m| normalize(m, norm)));
    }
    Ok(out)
}

/// Precomputed targets, patch neighbourhoods and direction codes for every
/// (subject, direction) pair of a bundle.
pub(crate) struct TrainingSet {
    n_train: usize,
    n_dirs: usize,
    /// `[subject][dir]` → 256 values
    targets: Vec<Vec<f64>>,
    patches: Vec<[usize; CELLS]>,
    directions: Vec<[f64; N_BASIS]>,
}

impl TrainingSet {
    pub(crate) fn new(bundle: &HrtfBundle, subjects: &[usize], norm: NormRange) -> Result<Self> {
        let n_dirs = bundle.grid.len();
        let mut targets = Vec::with_capacity(subjects.len() * n_dirs);
        for &s in subjects {
            for d in 0..n_dirs {
                targets.push(normalized_pair(bundle, s, d, norm)?);
            }
        }
        Ok(Self {
            n_train: subjects.len(),
            n_dirs,
            targets,
            patches: bundle.grid.iter().map(|c| patch_indices(&bundle.grid, c)).collect(),
            directions: bundle.grid.iter().map(|d| encode_direction(d).weights).collect(),
        })
    }

    pub(crate) fn n_pairs(&self) -> usize {
        self.n_train * self.n_dirs
    }

    /// Pair index → (roster position, direction index).
    pub(crate) fn split(&self, pair: usize) -> (usize, usize) {
        (pair / self.n_dirs, pair % self.n_dirs)
    }

    pub(crate) fn target(&self, subject: usize, dir: usize) -> &[f64] {
        &self.targets[subject * self.n_dirs + dir]
    }

    pub(crate) fn batch(&self, pairs: &[usize]) -> Result<Batch> {
        let n = pairs.len();
        let ear_len = CELLS * N_BINS;
        let mut left = Vec::with_capacity(n * ear_len);
        let mut right = Vec::with_capacity(n * ear_len);
        let mut subject = Vec::with_capacity(n * (self.n_train + 1));
        let mut direction = Vec::with_capacity(n * N_BASIS);
        let mut target = Vec::with_capacity(n * OUTPUT_LEN);
        for &p in pairs {
            let (s, d) = self.split(p);
            for &cell in &self.patches[d] {
                let t = self.target(s, cell);
                left.extend_from_slice(&t[..N_BINS]);
                right.extend_from_slice(&t[N_BINS..]);
            }
            subject.extend(subject_vector(self.n_train, Some(s)));
            direction.extend_from_slice(&self.directions[d]);
            target.extend_from_slice(self.target(s, d));
        }
        let ear = vec![n, 1, PATCH_SIDE, PATCH_SIDE, N_BINS];
        Ok(Batch {
            left: Tensor::new(ear.clone(), left)?,
            right: Tensor::new(ear, right)?,
            subject: Tensor::new(vec![n, self.n_train + 1], subject)?,
            direction: Tensor::new(vec![n, N_BASIS], direction)?,
            target: Tensor::new(vec![n, OUTPUT_LEN], target)?,
        })
    }
}

/// Direction code rows for a list of directions.
pub(crate) fn direction_rows(dirs: &[Direction]) -> Vec<f64> {
    dirs.iter().flat_map(|d| encode_direction(d).weights).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{extract_patch, synth_bundle};

    #[test]
    fn batches_match_extracted_patches() {
        let grid: Vec<Direction> = (0..40).map(|k| Direction::new(-180.0 + 9.0 * k as f64, (k % 5) as f64 * 15.0 - 30.0)).collect();
        let (bundle, _) = synth_bundle(3, &grid, 44_100.0, 7).unwrap();
        let norm = NormRange::default();
        let set = TrainingSet::new(&bundle, &[2, 0], norm).unwrap();
        let pair = 40 + 13;
        let b = set.batch(&[pair]).unwrap();
        let patch = extract_patch(&bundle, 0, &grid[13], norm).unwrap();
        let half = CELLS * N_BINS;
        assert_eq!(b.left.data(), &patch.values[..half]);
        assert_eq!(b.right.data(), &patch.values[half..]);
        assert_eq!(b.subject.data(), &[0.0, 1.0, 0.0]);
        assert_eq!(&b.target.data()[..N_BINS], &patch.values[12 * N_BINS..13 * N_BINS]);
        assert_eq!(b.direction.data(), &encode_direction(&grid[13]).weights[..]);
    }
}
