//! The randomly shifted hypercube that roots the quadtree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ceil_log2, pow2};
use crate::pointset::{distance, PointSet};
use crate::rng::seeded_rng;

/// Axis-parallel cube `H` of side `4Δ`, centered at the first point and then
/// shifted by `σ`.
///
/// Cells of the grid at level `ℓ` have side `2^ℓ` and are aligned with
/// `origin`. A coordinate `x` belongs to the half-open interval
/// `[origin + k·2^ℓ, origin + (k+1)·2^ℓ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedHypercube {
    pub origin: Vec<f64>,
    pub side: f64,
    pub root_level: i32,
    pub shift: Vec<f64>,
}

impl ShiftedHypercube {
    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// `Δ = side / 4`.
    pub fn delta(&self) -> f64 {
        self.side / 4.0
    }

    /// Offset of a point from the origin, coordinate by coordinate.
    pub fn offsets_into(&self, p: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(p.iter().zip(&self.origin).map(|(x, o)| x - o));
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.origin)
            .all(|(x, o)| {
                let t = x - o;
                (0.0..self.side).contains(&t)
            })
    }
}

const MAX_SHIFT_DRAWS: usize = 64;

/// Encloses `ps` in a cube of side `4Δ`, `Δ = 2^⌈log₂Δ'⌉`, `Δ' = max_i ‖x₁ − x_i‖`,
/// shifted by `σ_j ∈ (−Δ, Δ]` drawn from `seed`.
pub fn enclosing_cube(ps: &PointSet, seed: u64) -> Result<ShiftedHypercube> {
    let first = ps.point(0);
    let diameter_bound = ps.points().map(|p| distance(first, p)).fold(0.0, f64::max);
    if diameter_bound == 0.0 {
        return Err(Error::DegeneratePointSet);
    }
    shifted_cube(ps, ceil_log2(diameter_bound), seed)
}

/// Like [`enclosing_cube`] but with `Δ = 2^delta_exp` given by the caller.
///
/// Used for point sets where all points coincide (`Δ' = 0`).
pub fn enclosing_cube_with_delta(
    ps: &PointSet,
    delta_exp: i32,
    seed: u64,
) -> Result<ShiftedHypercube> {
    let first = ps.point(0);
    let needed = ps.points().map(|p| distance(first, p)).fold(0.0, f64::max);
    if needed > pow2(delta_exp) {
        return Err(Error::InvalidParams(format!(
            "forced delta 2^{delta_exp} is smaller than the point spread {needed}"
        )));
    }
    shifted_cube(ps, delta_exp, seed)
}

fn shifted_cube(ps: &PointSet, delta_exp: i32, seed: u64) -> Result<ShiftedHypercube> {
    let root_level = delta_exp + 2;
    if !(-1000..=1000).contains(&root_level) {
        return Err(Error::InvalidPointSet(format!(
            "point spread 2^{delta_exp} is outside the supported range"
        )));
    }
    let delta = pow2(delta_exp);
    let side = pow2(root_level);
    let first = ps.point(0);
    let mut rng = seeded_rng(seed);
    // In exact arithmetic one draw always suffices; redraws only absorb
    // rounding in `x - origin` at the far faces.
    for _ in 0..MAX_SHIFT_DRAWS {
        let shift: Vec<f64> = (0..ps.dim())
            .map(|_| delta - 2.0 * delta * rng.gen::<f64>())
            .collect();
        let origin: Vec<f64> = first
            .iter()
            .zip(&shift)
            .map(|(x, s)| x + s - 2.0 * delta)
            .collect();
        let cube = ShiftedHypercube {
            origin,
            side,
            root_level,
            shift,
        };
        if ps.points().all(|p| cube.contains(p)) {
            return Ok(cube);
        }
    }
    Err(Error::InvalidPointSet(
        "could not place a shifted cube around the points".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_diameter_is_degenerate() {
        let ps = PointSet::new(3, 2, vec![1.0; 6]).unwrap();
        assert!(matches!(
            enclosing_cube(&ps, 1),
            Err(Error::DegeneratePointSet)
        ));
        let cube = enclosing_cube_with_delta(&ps, 0, 1).unwrap();
        assert_eq!(cube.side, 4.0);
    }

    #[test]
    fn power_of_two_rounding() {
        let ps = PointSet::new(2, 1, vec![0.0, 5.0]).unwrap();
        let cube = enclosing_cube(&ps, 9).unwrap();
        assert_eq!(cube.delta(), 8.0);
        assert_eq!(cube.side, 32.0);
        assert_eq!(cube.root_level, 5);
        // Unshifted interval is [-16, 16).
        assert_eq!(cube.origin[0], -16.0 + cube.shift[0]);
        assert!(cube.shift[0] > -8.0 && cube.shift[0] <= 8.0);
    }

    #[test]
    fn deterministic_in_seed() {
        let ps = PointSet::new(3, 2, vec![0.0, 1.0, 2.0, 3.0, -1.0, 0.5]).unwrap();
        assert_eq!(enclosing_cube(&ps, 5).unwrap(), enclosing_cube(&ps, 5).unwrap());
        assert_ne!(enclosing_cube(&ps, 5).unwrap(), enclosing_cube(&ps, 6).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn cube_contains_all_points(
            d in 1usize..6,
            coords in prop::collection::vec(-1e3f64..1e3, 1..120),
            seed: u64,
        ) {
            let n = coords.len() / d;
            prop_assume!(n >= 2);
            let ps = PointSet::new(n, d, coords[..n * d].to_vec()).unwrap();
            let cube = match enclosing_cube(&ps, seed) {
                Ok(c) => c,
                Err(Error::DegeneratePointSet) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let spread = ps.points().map(|p| distance(ps.point(0), p)).fold(0.0, f64::max);
            prop_assert_eq!(cube.side, 4.0 * cube.delta());
            prop_assert!(cube.delta() >= spread);
            prop_assert!(cube.delta() < 2.0 * spread);
            prop_assert_eq!(cube.side, 2f64.powi(cube.root_level));
            for p in ps.points() {
                prop_assert!(cube.contains(p));
            }
        }
    }
}
