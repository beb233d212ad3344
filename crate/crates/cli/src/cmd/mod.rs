pub mod dataset;
pub mod loc;
pub mod measure;
pub mod model;
pub mod spatialize;

use std::path::Path;

use hrtf_core::dataset::{load_bundle, HrtfBundle};

use crate::error::{user, Context, Result};

pub fn read_bundle(path: &Path) -> Result<HrtfBundle> {
    load_bundle(path).user(&format!("reading bundle {}", path.display()))
}

pub fn check_subject(bundle: &HrtfBundle, subject: usize) -> Result<()> {
    if subject >= bundle.n_subjects() {
        return Err(user(format!(
            "subject {subject} not in bundle of {} subjects",
            bundle.n_subjects()
        )));
    }
    Ok(())
}
