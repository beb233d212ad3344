use super::data::direction_rows;
use super::{Checkpoint, CvaeError, Result, LATENT, OUTPUT_LEN};
use crate::dataset::{denormalize, subject_vector, Direction, HrtfBundle};
use crate::dsp::{apply_itd, lsd_db, magnitude_spectrum, minimum_phase, Hrir, ItdModel, N_BINS};
use crate::numerics::Tensor;

/// Which subject vector to decode with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubjectSlot {
    /// Position in the checkpoint roster.
    Train(usize),
    /// The extra slot used for a new subject.
    Reserved,
}

impl SubjectSlot {
    fn vector(self, n_train: usize) -> Result<Vec<f64>> {
        match self {
            SubjectSlot::Train(i) if i >= n_train => Err(CvaeError::UnknownSubject(i)),
            SubjectSlot::Train(i) => Ok(subject_vector(n_train, Some(i))),
            SubjectSlot::Reserved => Ok(subject_vector(n_train, None)),
        }
    }
}

/// dB magnitudes (left, right) for each direction, decoded at z = 0.
pub fn generate_grid(ckpt: &Checkpoint, slot: SubjectSlot, dirs: &[Direction]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n_train = ckpt.model.config.n_train;
    let subject = slot.vector(n_train)?;
    let mut out = Vec::with_capacity(dirs.len());
    for chunk in dirs.chunks(256) {
        let n = chunk.len();
        let s: Vec<f64> = (0..n).flat_map(|_| subject.iter().copied()).collect();
        let values = ckpt.model.decode_batch(
            Tensor::zeros(&[n, LATENT]),
            Tensor::new(vec![n, n_train + 1], s)?,
            Tensor::new(vec![n, crate::dataset::N_BASIS], direction_rows(chunk))?,
        )?;
        for row in values.data().chunks(OUTPUT_LEN) {
            let db: Vec<f64> = row.iter().map(|&v| denormalize(v, ckpt.norm)).collect();
            out.push((db[..N_BINS].to_vec(), db[N_BINS..].to_vec()));
        }
    }
    Ok(out)
}

pub fn generate_hrtf(ckpt: &Checkpoint, slot: SubjectSlot, dir: &Direction) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(generate_grid(ckpt, slot, std::slice::from_ref(dir))?.remove(0))
}

/// Minimum-phase HRIR pair for the generated magnitudes with the modelled
/// ITD inserted.
pub fn generate_hrir(ckpt: &Checkpoint, slot: SubjectSlot, dir: &Direction, itd: &ItdModel, sample_rate: f64) -> Result<Hrir> {
    let (l, r) = generate_hrtf(ckpt, slot, dir)?;
    let left = minimum_phase(&l)?;
    let right = minimum_phase(&r)?;
    Ok(apply_itd(&left, &right, dir, itd, sample_rate)?)
}

/// Mean LSD over `dirs` (grid indices) between generated spectra and
/// `subject`'s HRIRs in `bundle`, both ears pooled.
pub fn mean_lsd(ckpt: &Checkpoint, slot: SubjectSlot, bundle: &HrtfBundle, subject: usize, dirs: &[usize]) -> Result<f64> {
    if dirs.is_empty() {
        return Err(CvaeError::Config("no directions to score".into()));
    }
    let directions: Vec<Direction> = dirs.iter().map(|&d| bundle.grid[d]).collect();
    let generated = generate_grid(ckpt, slot, &directions)?;
    let mut sum = 0.0;
    for (&d, (gl, gr)) in dirs.iter().zip(&generated) {
        let h = bundle.hrir(subject, d);
        let tl = magnitude_spectrum(&h.left)?;
        let tr = magnitude_spectrum(&h.right)?;
        sum += 0.5 * (lsd_db(&tl, gl)? + lsd_db(&tr, gr)?);
    }
    Ok(sum / dirs.len() as f64)
}
