use super::{LocalizationError, Result, FEATURE_LEN, N_LAGS, TAU_MAX};

const WINDOW: usize = 2 * TAU_MAX;
const MIN_VAR: f64 = 1e-24;

/// Normalised cross-correlation over lags −45..=45 and the level difference.
#[derive(Clone, Debug, PartialEq)]
pub struct BinauralFeature {
    pub rc: Vec<f64>,
    pub ild: f64,
}

impl BinauralFeature {
    pub fn from_signals(left: &[f64], right: &[f64]) -> Result<Self> {
        Ok(Self {
            rc: xcorr_feature(left, right)?,
            ild: ild(left, right)?,
        })
    }

    /// `rc` followed by `ild`, 92 values.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_LEN);
        v.extend_from_slice(&self.rc);
        v.push(self.ild);
        v
    }
}

fn check_pair(left: &[f64], right: &[f64]) -> Result<()> {
    if left.len() != right.len() {
        return Err(LocalizationError::LengthMismatch(left.len(), right.len()));
    }
    let needed = WINDOW + 2 * TAU_MAX;
    if left.len() < needed {
        return Err(LocalizationError::TooShort {
            needed,
            got: left.len(),
        });
    }
    Ok(())
}

/// Correlation of `l[s..s+W]` with `r[s-τ..s-τ+W]`, each mean-removed;
/// `None` when either segment is flat.
fn window_corr(l: &[f64], r: &[f64], s: usize, tau: isize) -> Option<f64> {
    let a = &l[s..s + WINDOW];
    let start = (s as isize - tau) as usize;
    let b = &r[start..start + WINDOW];
    let ma = a.iter().sum::<f64>() / WINDOW as f64;
    let mb = b.iter().sum::<f64>() / WINDOW as f64;
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        num += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= MIN_VAR || vb <= MIN_VAR {
        return None;
    }
    Some((num / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// R_c(τ) for τ = −45..=45, averaged over consecutive 90-sample windows.
/// A positive lag means the left signal trails the right one. Windows where
/// either channel is flat at some lag are skipped.
pub fn xcorr_feature(left: &[f64], right: &[f64]) -> Result<Vec<f64>> {
    check_pair(left, right)?;
    let mut acc = vec![0.0; N_LAGS];
    let mut used = 0usize;
    let mut row = vec![0.0; N_LAGS];
    let mut s = TAU_MAX;
    while s + WINDOW + TAU_MAX <= left.len() {
        let mut ok = true;
        for (k, slot) in row.iter_mut().enumerate() {
            match window_corr(left, right, s, k as isize - TAU_MAX as isize) {
                Some(v) => *slot = v,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            acc.iter_mut().zip(&row).for_each(|(a, v)| *a += v);
            used += 1;
        }
        s += WINDOW;
    }
    if used == 0 {
        return Err(LocalizationError::ZeroVariance);
    }
    acc.iter_mut().for_each(|v| *v /= used as f64);
    Ok(acc)
}

/// Level difference `10·log10(Σ l² / Σ r²)` in dB.
pub fn ild(left: &[f64], right: &[f64]) -> Result<f64> {
    if left.len() != right.len() {
        return Err(LocalizationError::LengthMismatch(left.len(), right.len()));
    }
    let el: f64 = left.iter().map(|v| v * v).sum();
    let er: f64 = right.iter().map(|v| v * v).sum();
    if er <= 0.0 {
        return Err(LocalizationError::ZeroEnergy);
    }
    if el <= 0.0 {
        return Err(LocalizationError::Invalid("left channel has zero energy".into()));
    }
    Ok(10.0 * (el / er).log10())
}

/// Direct evaluation of R_c at one lag for one window start, without
/// validation; used as a test oracle.
pub fn xcorr_reference(left: &[f64], right: &[f64], start: usize, tau: isize) -> f64 {
    let n = WINDOW;
    let mut ml = 0.0;
    let mut mr = 0.0;
    for m in start..start + n {
        ml += left[m];
        mr += right[(m as isize - tau) as usize];
    }
    ml /= n as f64;
    mr /= n as f64;
    let mut num = 0.0;
    let mut dl = 0.0;
    let mut dr = 0.0;
    for m in start..start + n {
        let r = right[(m as isize - tau) as usize];
        num += (left[m] - ml) * (r - mr);
        dl += (left[m] - ml).powi(2);
        dr += (r - mr).powi(2);
    }
    num / (dl.sqrt() * dr.sqrt())
}
