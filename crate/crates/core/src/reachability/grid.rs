use serde::{Deserialize, Serialize};

use super::ReachError;

/// Uniform node grid over the `(r, v)` plane. Node `(i, j)` sits at
/// `(r_min + i·dr, v_min + j·dv)`; arrays are row-major in `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub r_min: f64,
    pub r_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub nr: usize,
    pub nv: usize,
}

pub const MIN_CELLS: usize = 32;

impl Grid2 {
    pub fn new(r_min: f64, r_max: f64, v_min: f64, v_max: f64, nr: usize, nv: usize) -> Result<Self, ReachError> {
        let g = Self {
            r_min,
            r_max,
            v_min,
            v_max,
            nr,
            nv,
        };
        if !(r_min < r_max && v_min < v_max) || ![r_min, r_max, v_min, v_max].iter().all(|x| x.is_finite()) {
            return Err(ReachError::InvalidGrid(format!("extents not ordered: {g:?}")));
        }
        if nr < MIN_CELLS || nv < MIN_CELLS {
            return Err(ReachError::InvalidGrid(format!(
                "need at least {MIN_CELLS} nodes per axis, got {nr}x{nv}"
            )));
        }
        Ok(g)
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.nr - 1) as f64
    }

    pub fn dv(&self) -> f64 {
        (self.v_max - self.v_min) / (self.nv - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nr * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nv + j
    }

    #[inline]
    pub fn r_at(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.dr()
    }

    #[inline]
    pub fn v_at(&self, j: usize) -> f64 {
        self.v_min + j as f64 * self.dv()
    }

    pub fn contains(&self, r: f64, v: f64) -> bool {
        r >= self.r_min && r <= self.r_max && v >= self.v_min && v <= self.v_max
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nr || j + 1 == self.nv
    }

    /// Same grid with twice the resolution (`2n - 1` nodes per axis).
    pub fn refined(&self) -> Self {
        Self {
            nr: 2 * self.nr - 1,
            nv: 2 * self.nv - 1,
            ..*self
        }
    }
}

impl Default for Grid2 {
    fn default() -> Self {
        Self {
            r_min: -1.5,
            r_max: 1.5,
            v_min: -2.5,
            v_max: 2.5,
            nr: 201,
            nv: 201,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing() {
        let g = Grid2::default();
        assert!((g.dr() - 0.015).abs() < 1e-15);
        assert!((g.dv() - 0.025).abs() < 1e-15);
        assert_eq!(g.r_at(100), 0.0);
        assert!((g.v_at(200) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid2::new(1.0, -1.0, -1.0, 1.0, 64, 64).is_err());
        assert!(Grid2::new(-1.0, 1.0, -1.0, 1.0, 16, 64).is_err());
        assert!(Grid2::new(-1.0, 1.0, -1.0, 1.0, 32, 32).is_ok());
    }
}
