use crate::error::{Error, Result};

/// Uniform time grid `t_j = j·dt`, `j = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Grid covering `[0, t_max]`; `dt` must divide `t_max`.
    pub fn new(t_max: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max must be nonnegative, got {t_max}")));
        }
        let ratio = t_max / dt;
        let n_steps = ratio.round();
        if (ratio - n_steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} does not divide t_max = {t_max}"
            )));
        }
        Ok(Self { dt, n_steps: n_steps as usize })
    }

    pub fn from_steps(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dt, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.time(j)).collect()
    }

    /// The grid with every step halved: the points an RK4 step samples.
    pub fn refined(&self) -> Self {
        Self { dt: 0.5 * self.dt, n_steps: 2 * self.n_steps }
    }

    /// Evenly spaced subset of at most `max_points` indices, always
    /// including both ends when there is room.
    pub fn probe_indices(&self, max_points: usize) -> Vec<usize> {
        let n = self.len();
        if n <= max_points {
            return (0..n).collect();
        }
        let mut idx: Vec<usize> = (0..max_points)
            .map(|k| ((k as f64) * (n - 1) as f64 / (max_points - 1) as f64).round() as usize)
            .collect();
        idx.dedup();
        idx
    }
}

/// How a per-point series lines up against a stepping grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alignment {
    /// One value per grid point; half steps use the average of neighbours.
    GridPoints,
    /// One value per half step (the refined grid).
    HalfSteps,
}

impl Alignment {
    pub fn detect(grid: &TimeGrid, other: &TimeGrid) -> Result<Self> {
        let same_span = (grid.t_max() - other.t_max()).abs() <= 1e-9 * grid.t_max().max(1.0);
        if same_span && other.n_steps == grid.n_steps {
            Ok(Alignment::GridPoints)
        } else if same_span && other.n_steps == 2 * grid.n_steps {
            Ok(Alignment::HalfSteps)
        } else {
            Err(Error::Incompatible(format!(
                "series grid (dt = {}, {} steps) does not match the simulation grid (dt = {}, {} steps)",
                other.dt, other.n_steps, grid.dt, grid.n_steps
            )))
        }
    }

    /// Indices and weights for the value at `t_j + sub·dt/2`, `sub ∈ {0,1,2}`.
    pub fn sample(self, step: usize, sub: usize) -> [(usize, f64); 2] {
        match self {
            Alignment::HalfSteps => [(2 * step + sub, 1.0), (0, 0.0)],
            Alignment::GridPoints => match sub {
                0 => [(step, 1.0), (0, 0.0)],
                1 => [(step, 0.5), (step + 1, 0.5)],
                _ => [(step + 1, 1.0), (0, 0.0)],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction() {
        let g = TimeGrid::new(10.0, 0.01).unwrap();
        assert_eq!(g.n_steps(), 1000);
        assert_eq!(g.len(), 1001);
        assert!((g.t_max() - 10.0).abs() < 1e-12);
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 0.0).is_err());
    }

    #[test]
    fn refined_grid_doubles_points() {
        let g = TimeGrid::new(1.0, 0.1).unwrap();
        let r = g.refined();
        assert_eq!(r.len(), 21);
        assert_eq!(Alignment::detect(&g, &r).unwrap(), Alignment::HalfSteps);
        assert_eq!(Alignment::detect(&g, &g).unwrap(), Alignment::GridPoints);
        assert!(Alignment::detect(&g, &TimeGrid::new(2.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn probes_cover_ends() {
        let g = TimeGrid::new(10.0, 0.01).unwrap();
        let p = g.probe_indices(20);
        assert_eq!(p.len(), 20);
        assert_eq!(p[0], 0);
        assert_eq!(*p.last().unwrap(), 1000);
        assert_eq!(TimeGrid::new(1.0, 0.5).unwrap().probe_indices(20), vec![0, 1, 2]);
    }
}
