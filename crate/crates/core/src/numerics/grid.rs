//! Uniform time grid on [0, T] and matrix/vector paths indexed by its nodes.

use super::{Matrix, Vector};
use crate::error::{CoreError, Result};

/// Uniform grid with `steps` intervals: node m sits at t = T * m / steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(CoreError::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(CoreError::Invalid("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node time; exact at both endpoints.
    pub fn node(&self, m: usize) -> f64 {
        debug_assert!(m <= self.steps);
        if m == self.steps {
            self.horizon
        } else {
            self.horizon * m as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |m| self.node(m))
    }

    /// Same horizon, doubled node count.
    pub fn refined(&self) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * 2,
        }
    }
}

/// One matrix per grid node.
#[derive(Debug, Clone)]
pub struct MatrixPath {
    pub grid: TimeGrid,
    pub values: Vec<Matrix>,
}

impl MatrixPath {
    pub fn new(grid: TimeGrid, values: Vec<Matrix>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(CoreError::Dimension(format!(
                "path needs {} values, got {}",
                grid.steps() + 1,
                values.len()
            )));
        }
        let (r, c) = (values[0].nrows(), values[0].ncols());
        if values.iter().any(|v| v.nrows() != r || v.ncols() != c) {
            return Err(CoreError::Dimension("path values differ in shape".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn at(&self, m: usize) -> &Matrix {
        &self.values[m]
    }

    pub fn initial(&self) -> &Matrix {
        &self.values[0]
    }

    pub fn terminal(&self) -> &Matrix {
        self.values.last().unwrap()
    }
}

/// One vector per grid node.
#[derive(Debug, Clone)]
pub struct VectorPath {
    pub grid: TimeGrid,
    pub values: Vec<Vector>,
}

impl VectorPath {
    pub fn constant(grid: TimeGrid, v: Vector) -> Self {
        let values = vec![v; grid.steps() + 1];
        Self { grid, values }
    }

    pub fn at(&self, m: usize) -> &Vector {
        &self.values[m]
    }
}
