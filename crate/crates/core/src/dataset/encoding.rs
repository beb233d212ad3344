use super::Direction;

pub const N_BASIS: usize = 26;

/// Linear map from a dB clip range onto [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormRange {
    pub lo_db: f64,
    pub hi_db: f64,
}

impl Default for NormRange {
    fn default() -> Self {
        Self {
            lo_db: -80.0,
            hi_db: 20.0,
        }
    }
}

pub fn normalize(db: f64, range: NormRange) -> f64 {
    ((db.clamp(range.lo_db, range.hi_db) - range.lo_db) / (range.hi_db - range.lo_db)).clamp(0.0, 1.0)
}

pub fn denormalize(v: f64, range: NormRange) -> f64 {
    range.lo_db + v * (range.hi_db - range.lo_db)
}

/// The 26 non-centre points of a 3×3×3 cube projected onto the sphere,
/// enumerated with x (right) outermost, then y (front), then z (up).
pub fn basis_directions() -> Vec<Direction> {
    let mut out = Vec::with_capacity(N_BASIS);
    for x in -1..=1 {
        for y in -1..=1 {
            for z in -1..=1 {
                if (x, y, z) != (0, 0, 0) {
                    out.push(Direction::from_vector([x as f64, y as f64, z as f64]));
                }
            }
        }
    }
    out
}

fn basis_index(x: i32, y: i32, z: i32) -> usize {
    let flat = ((x + 1) * 9 + (y + 1) * 3 + (z + 1)) as usize;
    // the centre (flat index 13) is skipped
    if flat > 13 {
        flat - 1
    } else {
        flat
    }
}

/// Cube coordinates (x, y) of ring azimuth `k * 45°`, k = 0 straight ahead,
/// increasing to the right.
fn ring_xy(k: i64) -> (i32, i32) {
    match k.rem_euclid(8) {
        0 => (0, 1),
        1 => (1, 1),
        2 => (1, 0),
        3 => (1, -1),
        4 => (0, -1),
        5 => (-1, -1),
        6 => (-1, 0),
        _ => (-1, 1),
    }
}

/// Elevation of the upper ring point at azimuth index `k`.
fn upper_ring_elevation(k: i64) -> f64 {
    let (x, y) = ring_xy(k);
    (1.0 / ((x * x + y * y) as f64).sqrt()).atan().to_degrees()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionEncoding {
    pub weights: [f64; N_BASIS],
}

impl DirectionEncoding {
    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }
}

/// Bilinear weights of `u` on the four basis points enclosing it in
/// (azimuth, elevation). B1/B2 are the upper corners at the cell's two
/// bounding azimuths, B3/B4 the lower ones; s runs along azimuth (1 at B1's
/// side) and t along elevation (1 at the upper edge). Within the polar caps
/// the two pole-side corners coincide and their weights merge.
pub fn encode_direction(u: &Direction) -> DirectionEncoding {
    let phi = u.azimuth;
    let ka = (phi / 45.0).floor() as i64;
    let phi_a = 45.0 * ka as f64;
    let phi_b = phi_a + 45.0;
    let s = (phi - phi_b) / (phi_a - phi_b);
    let (xa, ya) = ring_xy(ka);
    let (xb, yb) = ring_xy(ka + 1);
    let ring_a = upper_ring_elevation(ka);
    let ring_b = upper_ring_elevation(ka + 1);
    let ring = s * ring_a + (1.0 - s) * ring_b;
    let theta = u.elevation;

    // (index B1, index B2, elevation at top edge) and likewise for bottom
    let (top, bottom, hi, lo) = if theta >= ring {
        let pole = basis_index(0, 0, 1);
        ((pole, pole), (basis_index(xa, ya, 1), basis_index(xb, yb, 1)), 90.0, ring)
    } else if theta >= 0.0 {
        ((basis_index(xa, ya, 1), basis_index(xb, yb, 1)), (basis_index(xa, ya, 0), basis_index(xb, yb, 0)), ring, 0.0)
    } else if theta >= -ring {
        ((basis_index(xa, ya, 0), basis_index(xb, yb, 0)), (basis_index(xa, ya, -1), basis_index(xb, yb, -1)), 0.0, -ring)
    } else {
        let pole = basis_index(0, 0, -1);
        ((basis_index(xa, ya, -1), basis_index(xb, yb, -1)), (pole, pole), -ring, -90.0)
    };
    let t = ((theta - lo) / (hi - lo)).clamp(0.0, 1.0);
    let mut weights = [0.0; N_BASIS];
    weights[top.0] += s * t;
    weights[top.1] += (1.0 - s) * t;
    weights[bottom.0] += s * (1.0 - t);
    weights[bottom.1] += (1.0 - s) * (1.0 - t);
    DirectionEncoding { weights }
}

/// One-hot subject vector of length `n_train + 1`; `None` selects the
/// reserved last slot.
pub fn subject_vector(n_train: usize, subject: Option<usize>) -> Vec<f64> {
    let mut v = vec![0.0; n_train + 1];
    v[subject.unwrap_or(n_train)] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::great_circle_deg;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalization_endpoints() {
        let r = NormRange::default();
        assert_eq!(normalize(-80.0, r), 0.0);
        assert_eq!(normalize(20.0, r), 1.0);
        assert_eq!(normalize(-30.0, r), 0.5);
        assert_eq!(normalize(-200.0, r), 0.0);
        assert!((denormalize(normalize(-12.3, r), r) + 12.3).abs() < 1e-12);
    }

    #[test]
    fn basis_has_26_unit_directions() {
        let b = basis_directions();
        assert_eq!(b.len(), 26);
        for (i, d) in b.iter().enumerate() {
            for e in &b[..i] {
                assert!(great_circle_deg(d, e) > 30.0);
            }
        }
        assert_eq!(b[basis_index(0, 0, 1)], Direction::new(0.0, 90.0));
        assert_eq!(b[basis_index(1, 0, 0)], Direction::new(90.0, 0.0));
    }

    #[test]
    fn basis_point_gets_full_weight() {
        let b = basis_directions();
        for (i, d) in b.iter().enumerate() {
            let e = encode_direction(d);
            assert!((e.weights[i] - 1.0).abs() < 1e-12, "basis {i} {d:?}: {:?}", e.weights);
        }
    }

    #[test]
    fn cell_midpoint_is_uniform() {
        // between azimuths 0 and 45, halfway between the equator and the
        // interpolated upper ring
        let ring = 0.5 * (45.0 + upper_ring_elevation(1));
        let e = encode_direction(&Direction::new(22.5, ring / 2.0));
        let mut w: Vec<f64> = e.weights.iter().cloned().filter(|&w| w > 0.0).collect();
        w.sort_by(f64::total_cmp);
        assert_eq!(w.len(), 4);
        for v in w {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn random_directions_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let d = Direction::new(rng.gen_range(-180.0..180.0), rng.gen_range(-90.0..=90.0));
            let e = encode_direction(&d);
            let sum: f64 = e.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(e.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(e.nonzero() <= 4);
        }
    }

    #[test]
    fn reserved_slot() {
        assert_eq!(subject_vector(3, None), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(subject_vector(3, Some(1)), vec![0.0, 1.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn weights_form_partition_of_unity(az in -180.0f64..=180.0, el in -90.0f64..=90.0) {
            let e = encode_direction(&Direction::new(az, el));
            prop_assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(e.weights.iter().all(|&w| w >= 0.0));
            prop_assert!(e.nonzero() <= 4);
        }

        #[test]
        fn normalize_inverts_in_range(db in -80.0f64..=20.0) {
            let r = NormRange::default();
            prop_assert!((denormalize(normalize(db, r), r) - db).abs() < 1e-12);
        }
    }
}
