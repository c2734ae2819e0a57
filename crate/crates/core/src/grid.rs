//! Time grids `0 = t_0 < t_1 < … < t_K = 1 - t̲` for forward Euler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIFORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    knots: Vec<f64>,
    uniform: bool,
    step: Option<f64>,
}

impl TimeGrid {
    /// `steps` equal steps on `[0, 1 - t_floor]`.
    pub fn uniform(steps: usize, t_floor: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        if !(0.0..1.0).contains(&t_floor) {
            return Err(Error::InvalidArgument(format!("t_floor must lie in [0, 1), got {t_floor}")));
        }
        let end = 1.0 - t_floor;
        let step = end / steps as f64;
        let mut knots: Vec<f64> = (0..=steps).map(|k| k as f64 * step).collect();
        knots[steps] = end;
        Ok(Self { knots, uniform: true, step: Some(step) })
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument("grid needs at least two knots".into()));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidArgument(format!("grid must start at 0, got {}", knots[0])));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("knots must be strictly increasing".into()));
        }
        let last = *knots.last().unwrap();
        if last > 1.0 {
            return Err(Error::InvalidArgument(format!("grid must end at or before 1, got {last}")));
        }
        let first = knots[1] - knots[0];
        let uniform = knots.windows(2).all(|w| ((w[1] - w[0]) - first).abs() <= UNIFORM_TOL);
        Ok(Self { knots, uniform, step: uniform.then_some(first) })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Common step `Υ` of a uniform grid.
    pub fn step(&self) -> Option<f64> {
        self.step
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Splits every interval into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        if self.uniform {
            return Self::uniform(self.steps() * factor, 1.0 - self.end()).expect("refining a valid grid");
        }
        let mut knots = Vec::with_capacity(self.steps() * factor + 1);
        for w in self.knots.windows(2) {
            for j in 0..factor {
                knots.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
            }
        }
        knots.push(self.end());
        Self::from_knots(knots).expect("refining a valid grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_shape() {
        let g = TimeGrid::uniform(32, 1.0 / 32.0).unwrap();
        assert_eq!(g.steps(), 32);
        assert_eq!(g.end(), 1.0 - 1.0 / 32.0);
        assert!(g.is_uniform());
        let s = g.step().unwrap();
        assert!(g.knots().windows(2).all(|w| ((w[1] - w[0]) - s).abs() < 1e-12));
    }

    #[test]
    fn rejects_invalid_knots() {
        assert!(TimeGrid::from_knots(vec![0.0]).is_err());
        assert!(TimeGrid::from_knots(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::from_knots(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_knots(vec![0.0, 1.2]).is_err());
        assert!(TimeGrid::uniform(0, 0.0).is_err());
        assert!(TimeGrid::uniform(4, 1.0).is_err());
    }

    #[test]
    fn detects_uniformity_and_refines() {
        let g = TimeGrid::from_knots(vec![0.0, 0.25, 0.5, 0.75]).unwrap();
        assert!(g.is_uniform());
        let g = TimeGrid::from_knots(vec![0.0, 0.1, 0.5, 1.0]).unwrap();
        assert!(!g.is_uniform());
        let r = g.refine(2);
        let expected = [0.0, 0.05, 0.1, 0.3, 0.5, 0.75, 1.0];
        assert_eq!(r.steps(), 6);
        assert!(r.knots().iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
