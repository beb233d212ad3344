use rand::seq::index::sample;
use rand::Rng;

use super::{DatasetError, Direction, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    FullSphere,
    /// Azimuth strictly inside (-90°, 90°).
    FrontalSemisphere,
    /// Azimuth within [-φ/2, φ/2] for the given φ in degrees.
    AzimuthRange(f64),
}

impl Region {
    pub fn contains(&self, d: &Direction) -> bool {
        match *self {
            Region::FullSphere => true,
            Region::FrontalSemisphere => d.azimuth > -90.0 && d.azimuth < 90.0,
            Region::AzimuthRange(phi) => d.azimuth.abs() <= phi / 2.0 + 1e-9,
        }
    }
}

/// Uniform sample without replacement of `count` grid indices inside
/// `region`, returned in ascending order.
pub fn select_subset<R: Rng + ?Sized>(grid: &[Direction], region: Region, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..grid.len()).filter(|&i| region.contains(&grid[i])).collect();
    if pool.is_empty() {
        return Err(DatasetError::EmptyRegion);
    }
    if count > pool.len() {
        return Err(DatasetError::CountTooLarge {
            requested: count,
            available: pool.len(),
        });
    }
    let mut picked: Vec<usize> = sample(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::default_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frontal_stays_frontal() {
        let g = default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = select_subset(&g, Region::FrontalSemisphere, 70, &mut rng).unwrap();
        assert_eq!(s.len(), 70);
        assert!(s.iter().all(|&i| g[i].azimuth > -90.0 && g[i].azimuth < 90.0));
    }

    #[test]
    fn full_count_returns_region() {
        let g = default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = g.iter().filter(|d| Region::AzimuthRange(60.0).contains(d)).count();
        let s = select_subset(&g, Region::AzimuthRange(60.0), n, &mut rng).unwrap();
        assert_eq!(s.len(), n);
        assert!(s.iter().all(|&i| g[i].azimuth.abs() <= 30.0));
        assert!(select_subset(&g, Region::AzimuthRange(60.0), n + 1, &mut rng).is_err());
    }

    #[test]
    fn empty_region_is_an_error() {
        let g = vec![Direction::new(120.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            select_subset(&g, Region::FrontalSemisphere, 1, &mut rng),
            Err(DatasetError::EmptyRegion)
        ));
    }
}
