//! Solved consistency-condition system: per-node affine representations of
//! every backward variable in the common-noise state (xhat, h), plus the
//! decentralized strategy map, path evaluators, and file persistence.

use crate::error::{CoreError, Result};
use crate::model::{DerivedQuantities, ModelParams};
use crate::numerics::{Matrix, TimeGrid, Vector};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

/// v = x_coeff * xhat + h_coeff * h + constant.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineInMean {
    pub x: Matrix,
    pub h: Matrix,
    pub c: Vector,
}

impl AffineInMean {
    pub fn zeros(rows: usize, n: usize) -> Self {
        Self {
            x: Matrix::zeros(rows, n),
            h: Matrix::zeros(rows, n),
            c: Vector::zeros(rows),
        }
    }

    pub fn eval(&self, xhat: &Vector, h: &Vector) -> Vector {
        &self.x * xhat + &self.h * h + &self.c
    }

    pub fn max_abs(&self) -> f64 {
        self.x.amax().max(self.h.amax()).max(self.c.amax())
    }
}

/// v = xi_coeff * x_i + x_coeff * xhat + h_coeff * h + constant.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineInAgent {
    pub xi: Matrix,
    pub x: Matrix,
    pub h: Matrix,
    pub c: Vector,
}

impl AffineInAgent {
    pub fn zeros(rows: usize, n: usize) -> Self {
        Self {
            xi: Matrix::zeros(rows, n),
            x: Matrix::zeros(rows, n),
            h: Matrix::zeros(rows, n),
            c: Vector::zeros(rows),
        }
    }

    pub fn eval(&self, x_i: &Vector, xhat: &Vector, h: &Vector) -> Vector {
        &self.xi * x_i + &self.x * xhat + &self.h * h + &self.c
    }

    /// Conditional mean: x_i collapses onto xhat.
    pub fn mean(&self) -> AffineInMean {
        AffineInMean {
            x: &self.xi + &self.x,
            h: self.h.clone(),
            c: self.c.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.xi
            .amax()
            .max(self.x.amax())
            .max(self.h.amax())
            .max(self.c.amax())
    }
}

/// Per-step node unknowns: the strategy and the common-noise adjoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffNode {
    /// Strategy u_i, r rows, affine in (x_i, xhat, h).
    pub u: AffineInAgent,
    /// Adjoint diffusion of p_hat.
    pub beta0: AffineInMean,
    /// Adjoint diffusion of y.
    pub z: AffineInMean,
    /// Diffusion of h (also the g2 = f2 object).
    pub g2: AffineInMean,
}

/// Per-node backward values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNode {
    /// Agent costate k_i, affine in (x_i, xhat, h).
    pub k: AffineInAgent,
    /// Mean costate p_hat, affine in (xhat, h).
    pub p: AffineInMean,
    /// Dual state y, affine in (xhat, h).
    pub y: AffineInMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Affine,
    Picard,
}

/// Per-row discretized-residual magnitudes.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ResidualSummary {
    pub rows: BTreeMap<String, f64>,
    /// 1 + sup-norm of the solution representations.
    pub normalizer: f64,
    pub max_rms: f64,
    pub paths: usize,
}

/// Solved consistency system on a grid.
#[derive(Debug, Clone)]
pub struct ConsistencySolution {
    pub grid: TimeGrid,
    pub params: ModelParams,
    pub derived: DerivedQuantities,
    /// One per step, m = 0..M-1.
    pub coeffs: Vec<CoeffNode>,
    /// One per node, m = 0..M.
    pub values: Vec<ValueNode>,
    pub method: SolveMethod,
    pub residuals: ResidualSummary,
    /// Set when the uniform-convexity certificate did not pass.
    pub h2prime_warning: bool,
    pub picard_iterations: Option<usize>,
}

impl ConsistencySolution {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    /// Decentralized strategy at step m.
    pub fn strategy(&self, m: usize, x_i: &Vector, xhat: &Vector, h: &Vector) -> Vector {
        self.coeffs[m].u.eval(x_i, xhat, h)
    }

    /// Population-mean control at step m.
    pub fn mean_control(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.coeffs[m].u.mean().eval(xhat, h)
    }

    pub fn beta0(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.coeffs[m].beta0.eval(xhat, h)
    }

    pub fn z(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.coeffs[m].z.eval(xhat, h)
    }

    pub fn g2(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.coeffs[m].g2.eval(xhat, h)
    }

    /// Worst-case volatility sigma0_hat = -R0^{-1} beta0_hat.
    pub fn adversary(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        -(self
            .params
            .r0
            .clone()
            .lu()
            .solve(&self.beta0(m, xhat, h))
            .expect("R0 invertible"))
    }

    /// Conditional-mean costate k_bar.
    pub fn kbar(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.values[m].k.mean().eval(xhat, h)
    }

    pub fn pbar(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.values[m].p.eval(xhat, h)
    }

    pub fn y(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.values[m].y.eval(xhat, h)
    }

    /// Conditional-mean adjoint diffusion of k, from the next-layer values:
    /// `zeta0_bar = E_m[kbar_{m+1} dW0]/dt`.
    pub fn zeta0_bar(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        let next = &self.values[m + 1];
        let mean_diff = self.mean_diffusion(m, xhat, h);
        let g2 = self.g2(m, xhat, h);
        (&next.k.xi + &next.k.x) * mean_diff + &next.k.h * g2
    }

    /// dW0-coefficient of xhat at step m.
    pub fn mean_diffusion(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        let u = self.mean_control(m, xhat, h);
        let beta0 = self.beta0(m, xhat, h);
        let r0_beta = self
            .params
            .r0
            .clone()
            .lu()
            .solve(&beta0)
            .expect("R0 invertible");
        &self.params.c0 * xhat + &self.params.d0 * u - r0_beta
    }

    /// One Euler step of the common-noise pair (xhat, h).
    pub fn step_meanfield(
        &self,
        m: usize,
        xhat: &Vector,
        h: &Vector,
        dw0: f64,
    ) -> (Vector, Vector) {
        let dt = self.grid.dt();
        let t = self.grid.node(m);
        let u = self.mean_control(m, xhat, h);
        let drift = &self.params.a * xhat + &self.params.b * &u + self.params.f.eval(t);
        let diff = self.mean_diffusion(m, xhat, h);
        let next_x = xhat + drift * dt + diff * dw0;
        let next_h = h + &self.params.a * h * dt + self.g2(m, xhat, h) * dw0;
        (next_x, next_h)
    }

    /// Sup-norm over all stored representations, for residual normalization.
    pub fn representation_sup(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for c in &self.coeffs {
            sup = sup
                .max(c.u.max_abs())
                .max(c.beta0.max_abs())
                .max(c.z.max_abs())
                .max(c.g2.max_abs());
        }
        for v in &self.values {
            sup = sup.max(v.k.max_abs()).max(v.p.max_abs()).max(v.y.max_abs());
        }
        sup
    }

    /// Largest absolute difference between two solutions' representations.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        let pair = |a: &Matrix, b: &Matrix| (a - b).amax();
        for (c1, c2) in self.coeffs.iter().zip(other.coeffs.iter()) {
            worst = worst
                .max(pair(&c1.u.xi, &c2.u.xi))
                .max(pair(&c1.u.x, &c2.u.x))
                .max(pair(&c1.u.h, &c2.u.h))
                .max((&c1.u.c - &c2.u.c).amax())
                .max(pair(&c1.beta0.x, &c2.beta0.x))
                .max(pair(&c1.beta0.h, &c2.beta0.h))
                .max((&c1.beta0.c - &c2.beta0.c).amax())
                .max(pair(&c1.z.x, &c2.z.x))
                .max(pair(&c1.z.h, &c2.z.h))
                .max((&c1.z.c - &c2.z.c).amax())
                .max(pair(&c1.g2.x, &c2.g2.x))
                .max(pair(&c1.g2.h, &c2.g2.h))
                .max((&c1.g2.c - &c2.g2.c).amax());
        }
        for (v1, v2) in self.values.iter().zip(other.values.iter()) {
            worst = worst
                .max(pair(&v1.k.xi, &v2.k.xi))
                .max(pair(&v1.k.x, &v2.k.x))
                .max(pair(&v1.k.h, &v2.k.h))
                .max((&v1.k.c - &v2.k.c).amax())
                .max(pair(&v1.p.x, &v2.p.x))
                .max(pair(&v1.p.h, &v2.p.h))
                .max((&v1.p.c - &v2.p.c).amax())
                .max(pair(&v1.y.x, &v2.y.x))
                .max(pair(&v1.y.h, &v2.y.h))
                .max((&v1.y.c - &v2.y.c).amax());
        }
        worst
    }

    /// Persist all coefficient paths as one labeled CSV.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "# mflqg-solution v1")?;
        writeln!(
            out,
            "# n {} r {} steps {} horizon {:.16e} method {}",
            self.n(),
            self.params.r,
            self.steps(),
            self.grid.horizon(),
            match self.method {
                SolveMethod::Affine => "affine",
                SolveMethod::Picard => "picard",
            }
        )?;
        writeln!(out, "name,node,row,col,value")?;
        let write_mat = |name: &str, node: usize, m: &Matrix, out: &mut Vec<u8>| {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    writeln!(out, "{name},{node},{i},{j},{:.16e}", m[(i, j)]).unwrap();
                }
            }
        };
        for (m, c) in self.coeffs.iter().enumerate() {
            write_mat("u_xi", m, &c.u.xi, &mut out);
            write_mat("u_x", m, &c.u.x, &mut out);
            write_mat("u_h", m, &c.u.h, &mut out);
            write_mat("u_c", m, &Matrix::from_column_slice(c.u.c.len(), 1, c.u.c.as_slice()), &mut out);
            for (name, a) in [("beta0", &c.beta0), ("z", &c.z), ("g2", &c.g2)] {
                write_mat(&format!("{name}_x"), m, &a.x, &mut out);
                write_mat(&format!("{name}_h"), m, &a.h, &mut out);
                write_mat(
                    &format!("{name}_c"),
                    m,
                    &Matrix::from_column_slice(a.c.len(), 1, a.c.as_slice()),
                    &mut out,
                );
            }
        }
        for (m, v) in self.values.iter().enumerate() {
            write_mat("k_xi", m, &v.k.xi, &mut out);
            write_mat("k_x", m, &v.k.x, &mut out);
            write_mat("k_h", m, &v.k.h, &mut out);
            write_mat("k_c", m, &Matrix::from_column_slice(v.k.c.len(), 1, v.k.c.as_slice()), &mut out);
            for (name, a) in [("p", &v.p), ("y", &v.y)] {
                write_mat(&format!("{name}_x"), m, &a.x, &mut out);
                write_mat(&format!("{name}_h"), m, &a.h, &mut out);
                write_mat(
                    &format!("{name}_c"),
                    m,
                    &Matrix::from_column_slice(a.c.len(), 1, a.c.as_slice()),
                    &mut out,
                );
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Load a solution saved by `save_csv`, reattaching model data.
    pub fn load_csv(path: &Path, p: &ModelParams, d: &DerivedQuantities) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut steps = None;
        let mut horizon = None;
        let mut method = SolveMethod::Affine;
        let mut entries: BTreeMap<(String, usize), Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed == "name,node,row,col,value" {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let tokens: Vec<&str> = rest.split_whitespace().collect();
                let mut i = 0;
                while i + 1 < tokens.len() {
                    match tokens[i] {
                        "steps" => steps = tokens[i + 1].parse::<usize>().ok(),
                        "horizon" => horizon = tokens[i + 1].parse::<f64>().ok(),
                        "method" => {
                            method = if tokens[i + 1] == "picard" {
                                SolveMethod::Picard
                            } else {
                                SolveMethod::Affine
                            }
                        }
                        _ => {}
                    }
                    i += 1;
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 5 {
                return Err(CoreError::Parse {
                    line: lineno + 1,
                    message: format!("expected 5 fields, got {}", fields.len()),
                });
            }
            let parse_err = |message: String| CoreError::Parse {
                line: lineno + 1,
                message,
            };
            let node: usize = fields[1]
                .parse()
                .map_err(|_| parse_err("bad node index".into()))?;
            let row: usize = fields[2]
                .parse()
                .map_err(|_| parse_err("bad row index".into()))?;
            let col: usize = fields[3]
                .parse()
                .map_err(|_| parse_err("bad col index".into()))?;
            let value: f64 = fields[4]
                .parse()
                .map_err(|_| parse_err("bad value".into()))?;
            entries
                .entry((fields[0].to_string(), node))
                .or_default()
                .push((row, col, value));
        }
        let steps = steps.ok_or_else(|| CoreError::Parse {
            line: 0,
            message: "missing steps header".into(),
        })?;
        let horizon = horizon.ok_or_else(|| CoreError::Parse {
            line: 0,
            message: "missing horizon header".into(),
        })?;
        if (horizon - p.horizon).abs() > 1e-12 * p.horizon.max(1.0) {
            return Err(CoreError::Invalid(format!(
                "solution horizon {horizon} does not match scenario horizon {}",
                p.horizon
            )));
        }
        let grid = TimeGrid::new(horizon, steps)?;
        let (n, r) = (p.n, p.r);
        let fetch = |name: &str, node: usize, rows: usize, cols: usize| -> Result<Matrix> {
            let list = entries.get(&(name.to_string(), node)).ok_or_else(|| {
                CoreError::Parse {
                    line: 0,
                    message: format!("missing block {name}@{node}"),
                }
            })?;
            let mut m = Matrix::zeros(rows, cols);
            for &(i, j, v) in list {
                m[(i, j)] = v;
            }
            Ok(m)
        };
        let fetch_vec = |name: &str, node: usize, rows: usize| -> Result<Vector> {
            Ok(Vector::from_column_slice(
                fetch(name, node, rows, 1)?.as_slice(),
            ))
        };
        let mut coeffs = Vec::with_capacity(steps);
        for m in 0..steps {
            coeffs.push(CoeffNode {
                u: AffineInAgent {
                    xi: fetch("u_xi", m, r, n)?,
                    x: fetch("u_x", m, r, n)?,
                    h: fetch("u_h", m, r, n)?,
                    c: fetch_vec("u_c", m, r)?,
                },
                beta0: AffineInMean {
                    x: fetch("beta0_x", m, n, n)?,
                    h: fetch("beta0_h", m, n, n)?,
                    c: fetch_vec("beta0_c", m, n)?,
                },
                z: AffineInMean {
                    x: fetch("z_x", m, n, n)?,
                    h: fetch("z_h", m, n, n)?,
                    c: fetch_vec("z_c", m, n)?,
                },
                g2: AffineInMean {
                    x: fetch("g2_x", m, n, n)?,
                    h: fetch("g2_h", m, n, n)?,
                    c: fetch_vec("g2_c", m, n)?,
                },
            });
        }
        let mut values = Vec::with_capacity(steps + 1);
        for m in 0..=steps {
            values.push(ValueNode {
                k: AffineInAgent {
                    xi: fetch("k_xi", m, n, n)?,
                    x: fetch("k_x", m, n, n)?,
                    h: fetch("k_h", m, n, n)?,
                    c: fetch_vec("k_c", m, n)?,
                },
                p: AffineInMean {
                    x: fetch("p_x", m, n, n)?,
                    h: fetch("p_h", m, n, n)?,
                    c: fetch_vec("p_c", m, n)?,
                },
                y: AffineInMean {
                    x: fetch("y_x", m, n, n)?,
                    h: fetch("y_h", m, n, n)?,
                    c: fetch_vec("y_c", m, n)?,
                },
            });
        }
        Ok(Self {
            grid,
            params: p.clone(),
            derived: d.clone(),
            coeffs,
            values,
            method,
            residuals: ResidualSummary::default(),
            h2prime_warning: false,
            picard_iterations: None,
        })
    }
}

/// Simulated common-noise pair along one Brownian path.
#[derive(Debug, Clone)]
pub struct MeanFieldPath {
    pub xhat: Vec<Vector>,
    pub h: Vec<Vector>,
    pub dw0: Vec<f64>,
}

/// Drive (xhat, h) along the given W0 increments.
pub fn simulate_meanfield(cs: &ConsistencySolution, dw0: &[f64]) -> MeanFieldPath {
    let steps = cs.steps();
    assert_eq!(dw0.len(), steps, "need one increment per step");
    let mut xhat = Vec::with_capacity(steps + 1);
    let mut h = Vec::with_capacity(steps + 1);
    xhat.push(cs.params.x0.clone());
    h.push(Vector::zeros(cs.n()));
    for m in 0..steps {
        let (nx, nh) = cs.step_meanfield(m, &xhat[m], &h[m], dw0[m]);
        xhat.push(nx);
        h.push(nh);
    }
    MeanFieldPath {
        xhat,
        h,
        dw0: dw0.to_vec(),
    }
}

/// Worst-case volatility evaluator derived from a solved system.
pub struct WorstCaseVolatility<'a> {
    cs: &'a ConsistencySolution,
}

impl<'a> WorstCaseVolatility<'a> {
    pub fn eval(&self, m: usize, xhat: &Vector, h: &Vector) -> Vector {
        self.cs.adversary(m, xhat, h)
    }
}

/// sigma0_hat(t) = -R0^{-1} beta0_hat(t) as an evaluator on the common-noise
/// state.
pub fn worst_case_volatility(cs: &ConsistencySolution) -> WorstCaseVolatility<'_> {
    WorstCaseVolatility { cs }
}
