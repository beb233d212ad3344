/// Source direction in degrees. Positive azimuth is to the listener's
/// right, zero is straight ahead; positive elevation is up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    /// Wraps azimuth into (-180, 180] and clamps elevation to [-90, 90].
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        let mut az = azimuth % 360.0;
        if az <= -180.0 {
            az += 360.0;
        } else if az > 180.0 {
            az -= 360.0;
        }
        Self {
            azimuth: az,
            elevation: elevation.clamp(-90.0, 90.0),
        }
    }

    /// Unit vector (right, front, up).
    pub fn to_unit(&self) -> [f64; 3] {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()]
    }

    /// Direction of a non-zero vector (right, front, up).
    pub fn from_vector(v: [f64; 3]) -> Self {
        let horiz = v[0].hypot(v[1]);
        let az = if horiz == 0.0 { 0.0 } else { v[0].atan2(v[1]).to_degrees() };
        Self::new(az, v[2].atan2(horiz).to_degrees())
    }
}

/// Angle between two directions in degrees.
pub fn great_circle_deg(a: &Direction, b: &Direction) -> f64 {
    let (u, v) = (a.to_unit(), b.to_unit());
    // atan2 form stays accurate for tiny angles
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let s = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let c = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    s.atan2(c).to_degrees()
}

/// Index of the grid direction closest to `d`.
pub fn nearest_index(grid: &[Direction], d: &Direction) -> usize {
    let t = d.to_unit();
    (0..grid.len())
        .max_by(|&a, &b| {
            let (ua, ub) = (grid[a].to_unit(), grid[b].to_unit());
            let da = ua[0] * t[0] + ua[1] * t[1] + ua[2] * t[2];
            let db = ub[0] * t[0] + ub[1] * t[1] + ub[2] * t[2];
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .expect("non-empty grid")
}

/// 5° azimuth rings at elevations -45° to 75° in 15° steps plus the north
/// pole: 649 directions.
pub fn default_grid() -> Vec<Direction> {
    let mut grid = Vec::with_capacity(649);
    for el in (-45..=75).step_by(15) {
        for k in 0..72 {
            grid.push(Direction::new(-175.0 + 5.0 * k as f64, el as f64));
        }
    }
    grid.push(Direction::new(0.0, 90.0));
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraps_azimuth() {
        assert_eq!(Direction::new(-180.0, 0.0).azimuth, 180.0);
        assert_eq!(Direction::new(190.0, 0.0).azimuth, -170.0);
        assert_eq!(Direction::new(0.0, 100.0).elevation, 90.0);
    }

    #[test]
    fn grid_size_and_uniqueness() {
        let g = default_grid();
        assert_eq!(g.len(), 649);
        for i in 0..g.len() {
            for j in 0..i {
                assert!(great_circle_deg(&g[i], &g[j]) > 1.0);
            }
        }
    }

    #[test]
    fn nearest_finds_exact_member() {
        let g = default_grid();
        assert_eq!(nearest_index(&g, &g[100]), 100);
    }

    proptest! {
        #[test]
        fn vector_round_trip(az in -179.9f64..180.0, el in -89.0f64..89.0) {
            let d = Direction::new(az, el);
            let back = Direction::from_vector(d.to_unit());
            prop_assert!(great_circle_deg(&d, &back) < 1e-9);
        }
    }
}
