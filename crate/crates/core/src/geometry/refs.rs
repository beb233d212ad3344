use super::lm::{least_squares, levenberg_marquardt};
use super::{estimate_alpha, estimate_rsh, estimate_rz, BodyParams, GeometryError, ItdSample, PhonePose, Result, Side};
use crate::dataset::Direction;

/// Reference poses found in one hand's samples.
#[derive(Clone, Debug, PartialEq)]
pub struct HandReferences {
    /// Inferred from the sign of the strongest ITD.
    pub side: Side,
    /// One zero-ITD pose per elevation row that crosses zero.
    pub zeros: Vec<PhonePose>,
    /// Pose of maximum |ITD|.
    pub peak: PhonePose,
}

fn wrap(a: f64) -> f64 {
    Direction::new(a, 0.0).azimuth
}

/// Circular mean of azimuths in degrees.
fn mean_azimuth(az: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = az.fold((0.0, 0.0), |(s, c), a| (s + a.to_radians().sin(), c + a.to_radians().cos()));
    s.atan2(c).to_degrees()
}

/// Splits samples into elevation rows separated by gaps over 5 degrees.
fn rows(samples: &[(f64, f64, f64)]) -> Vec<Vec<(f64, f64, f64)>> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut out: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for s in sorted {
        match out.last_mut() {
            Some(row) if s.1 - row.last().unwrap().1 <= 5.0 => row.push(s),
            _ => out.push(vec![s]),
        }
    }
    out
}

/// Samples as (azimuth relative to `centre`, elevation, itd).
fn relative(samples: &[ItdSample], centre: f64) -> Vec<(f64, f64, f64)> {
    samples
        .iter()
        .map(|s| (wrap(s.pose.azimuth - centre), s.pose.elevation, s.itd))
        .collect()
}

fn polyval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Zero crossing of one row, interpolating locally with up to a cubic.
fn row_zero(row: &[(f64, f64, f64)], max_abs: f64) -> Option<PhonePose> {
    let mut row = row.to_vec();
    row.sort_by(|a, b| a.0.total_cmp(&b.0));
    let i = (0..row.len().saturating_sub(1))
        .filter(|&i| row[i].2.signum() != row[i + 1].2.signum() && row[i].2 != 0.0)
        .max_by(|&a, &b| {
            let sa = (row[a + 1].2 - row[a].2).abs() / (row[a + 1].0 - row[a].0).max(1e-9);
            let sb = (row[b + 1].2 - row[b].2).abs() / (row[b + 1].0 - row[b].0).max(1e-9);
            sa.total_cmp(&sb)
        })?;
    let (lo, hi) = (row[i].0, row[i + 1].0);
    let mut used = vec![row[i], row[i + 1]];
    for j in [i.wrapping_sub(1), i + 2] {
        if j < row.len() && row[j].2.abs() <= 0.6 * max_abs {
            used.push(row[j]);
        }
    }
    let mid = 0.5 * (lo + hi);
    let scale = (hi - lo).max(1e-9);
    let design: Vec<Vec<f64>> = used
        .iter()
        .map(|s| {
            let t = (s.0 - mid) / scale;
            (0..used.len()).map(|p| t.powi(p as i32)).collect()
        })
        .collect();
    let y: Vec<f64> = used.iter().map(|s| s.2).collect();
    let linear = lo - row[i].2 * (hi - lo) / (row[i + 1].2 - row[i].2);
    let root = match least_squares(&design, &y) {
        Some(c) => {
            let (mut a, mut b) = (-0.5, 0.5);
            let fa = polyval(&c, a);
            if fa.signum() == polyval(&c, b).signum() {
                (linear - mid) / scale
            } else {
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if polyval(&c, m).signum() == fa.signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            }
        }
        None => (linear - mid) / scale,
    };
    let el = used.iter().map(|s| s.1).sum::<f64>() / used.len() as f64;
    Some(PhonePose::new(mid + root * scale, el))
}

/// Zero-ITD poses, one per elevation row whose ITD changes sign.
pub fn find_zero_references(samples: &[ItdSample]) -> Result<Vec<PhonePose>> {
    if samples.len() < 2 {
        return Err(GeometryError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let centre = mean_azimuth(samples.iter().map(|s| s.pose.azimuth));
    let max_abs = samples.iter().map(|s| s.itd.abs()).fold(0.0, f64::max);
    let zeros: Vec<PhonePose> = rows(&relative(samples, centre))
        .iter()
        .filter_map(|r| row_zero(r, max_abs))
        .map(|p| PhonePose::new(p.azimuth + centre, p.elevation))
        .collect();
    if zeros.is_empty() {
        return Err(GeometryError::NoSignChange);
    }
    Ok(zeros)
}

/// Angle between the head-frame source vector and the interaural axis, for a
/// right-hand frame with parameters (alpha, r_sh, r_z).
fn axis_angle(az: f64, el: f64, alpha: f64, r_sh: f64, r_z: f64) -> f64 {
    let (ph, th) = ((az - alpha).to_radians(), el.to_radians());
    let x = th.cos() * ph.sin() + r_sh;
    let y = th.cos() * ph.cos();
    let z = th.sin() - r_z;
    y.hypot(z).atan2(x)
}

/// Three-point parabola through the row of the strongest sample.
fn parabola_peak(pts: &[(f64, f64, f64)]) -> Result<PhonePose> {
    let imax = (0..pts.len())
        .max_by(|&a, &b| pts[a].2.total_cmp(&pts[b].2))
        .ok_or(GeometryError::TooFewSamples { needed: 3, got: 0 })?;
    let mut row: Vec<(f64, f64, f64)> = pts
        .iter()
        .copied()
        .filter(|p| (p.1 - pts[imax].1).abs() <= 5.0)
        .collect();
    row.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = row
        .iter()
        .position(|p| *p == pts[imax])
        .expect("max sample is in its own row");
    if k == 0 || k + 1 == row.len() {
        return Err(GeometryError::PeakOnBoundary);
    }
    let (a, b, c) = (row[k - 1], row[k], row[k + 1]);
    // vertex of the parabola through three points
    let num = (b.0 - a.0).powi(2) * (b.2 - c.2) - (b.0 - c.0).powi(2) * (b.2 - a.2);
    let den = (b.0 - a.0) * (b.2 - c.2) - (b.0 - c.0) * (b.2 - a.2);
    let az = if den.abs() < 1e-300 { b.0 } else { b.0 - 0.5 * num / den };
    Ok(PhonePose::new(az, (a.1 + b.1 + c.1) / 3.0))
}

/// Pose of maximum |ITD| together with the hand it was taken with.
///
/// With enough samples around the peak, |ITD| is modelled as a cubic in the
/// angle to the interaural axis, whose apex is the reference pose. Sparse
/// data falls back to a parabola along the strongest row.
pub fn find_peak_reference(samples: &[ItdSample]) -> Result<(PhonePose, Side)> {
    let strongest = samples
        .iter()
        .max_by(|a, b| a.itd.abs().total_cmp(&b.itd.abs()))
        .ok_or(GeometryError::TooFewSamples { needed: 3, got: 0 })?;
    let side = if strongest.itd >= 0.0 { Side::Right } else { Side::Left };
    let s = side.sign();
    // left-hand data is mirrored into a right-hand problem
    let pts: Vec<(f64, f64, f64)> = samples
        .iter()
        .map(|p| (wrap(s * p.pose.azimuth), p.pose.elevation, s * p.itd))
        .collect();
    let max_abs = strongest.itd.abs();
    let top = pts
        .iter()
        .copied()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .expect("non-empty");
    let centre = top.0;
    let region: Vec<(f64, f64, f64)> = pts
        .iter()
        .filter(|p| p.2 >= 0.25 * max_abs)
        .map(|p| (wrap(p.0 - centre), p.1, p.2))
        .collect();
    let n_rows = rows(&region).len();
    let peak = if region.len() >= 10 && n_rows >= 2 {
        cone_fit(&region, max_abs).or_else(|_| parabola_peak(&region))?
    } else {
        parabola_peak(&region)?
    };
    let az = wrap(peak.azimuth + centre);
    Ok((PhonePose::new(s * az, peak.elevation), side))
}

fn cone_fit(region: &[(f64, f64, f64)], max_abs: f64) -> Result<PhonePose> {
    let top = region
        .iter()
        .copied()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .expect("non-empty");
    let (mut alpha, mut r_z) = (top.0 - 90.0, top.1.to_radians().sin().clamp(-0.9, 0.9));
    // shape coefficients for the initial geometry by linear regression
    let shape = |alpha: f64, r_sh: f64, r_z: f64| {
        let design: Vec<Vec<f64>> = region
            .iter()
            .map(|p| {
                let e = axis_angle(p.0, p.1, alpha, r_sh, r_z);
                vec![1.0, e, e * e, e * e * e]
            })
            .collect();
        let y: Vec<f64> = region.iter().map(|p| p.2 / max_abs).collect();
        least_squares(&design, &y)
    };
    let mut best = f64::INFINITY;
    // coarse search over the apex to start inside the right basin
    for da in [-15.0, -7.5, 0.0, 7.5, 15.0] {
        for dz in [-0.2, -0.1, 0.0, 0.1, 0.2] {
            let (a, z) = (top.0 - 90.0 + da, (top.1.to_radians().sin() + dz).clamp(-0.9, 0.9));
            if let Some(c) = shape(a, 0.3, z) {
                let cost: f64 = region
                    .iter()
                    .map(|p| (polyval(&c, axis_angle(p.0, p.1, a, 0.3, z)) - p.2 / max_abs).powi(2))
                    .sum();
                if cost < best {
                    best = cost;
                    alpha = a;
                    r_z = z;
                }
            }
        }
    }
    let c = shape(alpha, 0.3, r_z).ok_or(GeometryError::PeakOnBoundary)?;
    let p0 = [alpha, 0.3, r_z, c[0], c[1], c[2], c[3]];
    let p = levenberg_marquardt(
        |p| {
            region
                .iter()
                .map(|s| polyval(&p[3..], axis_angle(s.0, s.1, p[0], p[1], p[2])) - s.2 / max_abs)
                .collect()
        },
        &p0,
        200,
    );
    let (alpha, r_z) = (p[0], p[2]);
    if !(r_z.abs() < 1.0) || !alpha.is_finite() {
        return Err(GeometryError::PeakOnBoundary);
    }
    let peak = PhonePose::new(alpha + 90.0, r_z.asin().to_degrees());
    let inside = region
        .iter()
        .any(|s| (wrap(s.0 - peak.azimuth)).abs() <= 25.0 && (s.1 - peak.elevation).abs() <= 25.0);
    if !inside {
        return Err(GeometryError::PeakOnBoundary);
    }
    Ok(peak)
}

/// Zero-ITD rows and the |ITD| peak of one hand's samples.
pub fn find_references(samples: &[ItdSample]) -> Result<HandReferences> {
    if samples.len() < 3 {
        return Err(GeometryError::TooFewSamples { needed: 3, got: samples.len() });
    }
    let (peak, side) = find_peak_reference(samples)?;
    let zeros = find_zero_references(samples)?;
    Ok(HandReferences { side, zeros, peak })
}

/// Zero azimuth of `zeros` at elevation `el`, matching within 5 degrees or
/// interpolating linearly between the two bracketing rows.
fn zero_at(zeros: &[PhonePose], el: f64) -> Option<PhonePose> {
    let nearest = zeros
        .iter()
        .min_by(|a, b| (a.elevation - el).abs().total_cmp(&(b.elevation - el).abs()))?;
    if (nearest.elevation - el).abs() <= 5.0 {
        return Some(*nearest);
    }
    let below = zeros.iter().filter(|z| z.elevation < el).max_by(|a, b| a.elevation.total_cmp(&b.elevation))?;
    let above = zeros.iter().filter(|z| z.elevation > el).min_by(|a, b| a.elevation.total_cmp(&b.elevation))?;
    let t = (el - below.elevation) / (above.elevation - below.elevation);
    let az = below.azimuth + t * wrap(above.azimuth - below.azimuth);
    Some(PhonePose::new(az, el))
}

/// Estimates the body parameters from both hands' ITD samples. The result
/// is expressed in the right-shoulder frame.
pub fn calibrate(left: &[ItdSample], right: &[ItdSample]) -> Result<BodyParams> {
    if left.is_empty() {
        return Err(GeometryError::MissingHand(Side::Left));
    }
    if right.is_empty() {
        return Err(GeometryError::MissingHand(Side::Right));
    }
    let l = find_references(left)?;
    let r = find_references(right)?;

    let mut rsh = Vec::new();
    for zl in &l.zeros {
        if let Some(zr) = zero_at(&r.zeros, zl.elevation) {
            let zr = PhonePose::new(zr.azimuth, zl.elevation);
            rsh.push(estimate_rsh(*zl, zr)?);
        }
    }
    if rsh.is_empty() {
        let gap = l
            .zeros
            .iter()
            .flat_map(|a| r.zeros.iter().map(move |b| (a.elevation - b.elevation).abs()))
            .fold(f64::INFINITY, f64::min);
        return Err(GeometryError::ElevationMismatch(gap));
    }
    let r_sh = rsh.iter().sum::<f64>() / rsh.len() as f64;

    let alpha_r = estimate_alpha(r.peak);
    let alpha_l = -estimate_alpha(l.peak.mirrored());
    let alpha = mean_azimuth([alpha_r, alpha_l].into_iter());
    let r_z = 0.5 * (estimate_rz(r.peak) + estimate_rz(l.peak));
    BodyParams::new(alpha, r_sh.clamp(0.0, 0.999), r_z.clamp(-0.999, 0.999), Side::Right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::woodworth_itd;
    use crate::geometry::gcf_to_hcf;

    fn sample(az: f64, el: f64, itd_us: f64) -> ItdSample {
        ItdSample { pose: PhonePose::new(az, el), itd: itd_us * 1e-6 }
    }

    fn synthetic_hand(p: &BodyParams, side: Side, az_step: f64) -> Vec<ItdSample> {
        let mut out = Vec::new();
        for el in [-5.0, 12.0, 29.0, 46.0] {
            let mut rel = -45.0;
            while rel <= 120.0 {
                let az = p.alpha + side.sign() * rel;
                let pose = PhonePose::new(az, el);
                let d = gcf_to_hcf(pose, &p.with_side(side)).unwrap();
                let lat = d.to_unit()[0].asin();
                out.push(ItdSample { pose, itd: woodworth_itd(0.0875, lat) });
                rel += az_step;
            }
        }
        out
    }

    #[test]
    fn linear_zero_example() {
        let z = find_zero_references(&[sample(-10.0, 0.0, -100.0), sample(10.0, 0.0, 100.0)]).unwrap();
        assert_eq!(z.len(), 1);
        assert!(z[0].azimuth.abs() < 1e-9 && z[0].elevation == 0.0);
    }

    #[test]
    fn no_sign_change_is_an_error() {
        let s = [sample(30.0, 0.0, 100.0), sample(50.0, 0.0, 300.0), sample(70.0, 0.0, 500.0)];
        assert_eq!(find_zero_references(&s), Err(GeometryError::NoSignChange));
    }

    #[test]
    fn symmetric_triple_peaks_in_the_middle() {
        let s = [sample(80.0, 0.0, 900.0), sample(90.0, 0.0, 1000.0), sample(100.0, 0.0, 900.0)];
        let (p, side) = find_peak_reference(&s).unwrap();
        assert!((p.azimuth - 90.0).abs() < 1e-9);
        assert_eq!(side, Side::Right);
        let neg: Vec<ItdSample> = s.iter().map(|x| ItdSample { itd: -x.itd, ..*x }).collect();
        assert_eq!(find_peak_reference(&neg).unwrap().1, Side::Left);
    }

    #[test]
    fn peak_on_boundary_is_an_error() {
        let s = [sample(80.0, 0.0, 800.0), sample(90.0, 0.0, 900.0), sample(100.0, 0.0, 1000.0)];
        assert_eq!(find_peak_reference(&s), Err(GeometryError::PeakOnBoundary));
    }

    #[test]
    fn dense_sweep_references_near_analytic_optimum() {
        let p = BodyParams::new(25.0, 0.3, 0.35, Side::Right).unwrap();
        for side in [Side::Right, Side::Left] {
            let refs = find_references(&synthetic_hand(&p, side, 18.0)).unwrap();
            assert_eq!(refs.side, side);
            let want_az = p.alpha + side.sign() * 90.0;
            assert!(wrap(refs.peak.azimuth - want_az).abs() < 1.0, "{side:?} {:?}", refs.peak);
            assert!((refs.peak.elevation - 0.35f64.asin().to_degrees()).abs() < 1.0);
            for z in &refs.zeros {
                let off = (0.3 / z.elevation.to_radians().cos()).asin().to_degrees();
                let want = p.alpha - side.sign() * off;
                assert!(wrap(z.azimuth - want).abs() < 1.0, "{side:?} {z:?} vs {want}");
            }
        }
    }

    #[test]
    fn calibrate_recovers_parameters() {
        let p = BodyParams::new(-40.0, 0.28, 0.3, Side::Right).unwrap();
        let est = calibrate(&synthetic_hand(&p, Side::Left, 18.0), &synthetic_hand(&p, Side::Right, 18.0)).unwrap();
        assert!((est.alpha - p.alpha).abs() < 0.2, "{est:?}");
        assert!((est.r_sh - p.r_sh).abs() < 0.01 * p.r_sh, "{est:?}");
        assert!((est.r_z - p.r_z).abs() < 0.01 * p.r_z, "{est:?}");
    }

    #[test]
    fn single_hand_is_an_error() {
        let p = BodyParams::new(0.0, 0.3, 0.3, Side::Right).unwrap();
        let right = synthetic_hand(&p, Side::Right, 18.0);
        assert_eq!(calibrate(&[], &right), Err(GeometryError::MissingHand(Side::Left)));
    }
}
