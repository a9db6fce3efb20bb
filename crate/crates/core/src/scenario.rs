//! Scenario files: flat key/value text defining a model instance.
//!
//! Keys: `n`, `r`, `T`, `steps`, the coefficient matrices (`A`, `B`, `D`,
//! `C0`, `D0`, `Q`, `R`, `R0`, `G`, `Gamma`, `Gamma0`) as whitespace-separated
//! row-major entries, the vectors `x0` and `eta0`, and the deterministic
//! offset functions `f`, `sigma`, `eta` given either as `const v1 .. vn` or
//! as `csv <path>` referencing a file with one sampled row per grid node.
//! Lines starting with `#` are comments.

use crate::error::{CoreError, Result};
use crate::model::{ModelParams, OffsetFn};
use crate::numerics::{Matrix, Vector};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ModelParams,
    /// Default grid resolution requested by the file.
    pub steps: usize,
}

fn parse_floats(line: usize, tokens: &[&str]) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>().map_err(|_| CoreError::Parse {
                line,
                message: format!("bad number `{t}`"),
            })
        })
        .collect()
}

pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario> {
    let mut raw: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        };
        let tokens: Vec<&str> = stripped.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let key = tokens[0].to_string();
        let values: Vec<String> = tokens[1..].iter().map(|s| s.to_string()).collect();
        if raw.insert(key.clone(), (line_no, values)).is_some() {
            return Err(CoreError::Parse {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
    }

    let take = |key: &str| -> Result<(usize, Vec<String>)> {
        raw.get(key).cloned().ok_or_else(|| CoreError::Parse {
            line: 0,
            message: format!("missing key `{key}`"),
        })
    };
    let scalar_usize = |key: &str| -> Result<usize> {
        let (line, v) = take(key)?;
        if v.len() != 1 {
            return Err(CoreError::Parse {
                line,
                message: format!("`{key}` wants one value"),
            });
        }
        v[0].parse().map_err(|_| CoreError::Parse {
            line,
            message: format!("bad integer `{}`", v[0]),
        })
    };
    let scalar_f64 = |key: &str| -> Result<f64> {
        let (line, v) = take(key)?;
        if v.len() != 1 {
            return Err(CoreError::Parse {
                line,
                message: format!("`{key}` wants one value"),
            });
        }
        v[0].parse().map_err(|_| CoreError::Parse {
            line,
            message: format!("bad number `{}`", v[0]),
        })
    };

    let n = scalar_usize("n")?;
    let r = scalar_usize("r")?;
    let horizon = scalar_f64("T")?;
    let steps = scalar_usize("steps")?;

    let matrix = |key: &str, rows: usize, cols: usize| -> Result<Matrix> {
        let (line, v) = take(key)?;
        let refs: Vec<&str> = v.iter().map(|s| s.as_str()).collect();
        let vals = parse_floats(line, &refs)?;
        if vals.len() != rows * cols {
            return Err(CoreError::Parse {
                line,
                message: format!(
                    "`{key}` wants {} entries ({rows}x{cols}), got {}",
                    rows * cols,
                    vals.len()
                ),
            });
        }
        Ok(Matrix::from_row_slice(rows, cols, &vals))
    };
    let vector = |key: &str, len: usize| -> Result<Vector> {
        Ok(Vector::from_column_slice(matrix(key, len, 1)?.as_slice()))
    };
    let offset = |key: &str| -> Result<OffsetFn> {
        let (line, v) = take(key)?;
        match v.first().map(|s| s.as_str()) {
            Some("const") => {
                let refs: Vec<&str> = v[1..].iter().map(|s| s.as_str()).collect();
                let vals = parse_floats(line, &refs)?;
                if vals.len() != n {
                    return Err(CoreError::Parse {
                        line,
                        message: format!("`{key} const` wants {n} entries"),
                    });
                }
                Ok(OffsetFn::Constant(Vector::from_column_slice(&vals)))
            }
            Some("csv") => {
                if v.len() != 2 {
                    return Err(CoreError::Parse {
                        line,
                        message: format!("`{key} csv` wants one path"),
                    });
                }
                let path: PathBuf = base_dir.join(&v[1]);
                let text = std::fs::read_to_string(&path)?;
                let mut samples = Vec::new();
                for (ridx, row) in text.lines().enumerate() {
                    let row = row.trim();
                    if row.is_empty() || row.starts_with('#') {
                        continue;
                    }
                    let refs: Vec<&str> = row
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .collect();
                    let vals = parse_floats(ridx + 1, &refs)?;
                    if vals.len() != n {
                        return Err(CoreError::Parse {
                            line: ridx + 1,
                            message: format!("sampled row wants {n} columns in {path:?}"),
                        });
                    }
                    samples.push(Vector::from_column_slice(&vals));
                }
                if samples.len() < 2 {
                    return Err(CoreError::Parse {
                        line,
                        message: format!("`{key} csv` wants at least 2 sampled rows"),
                    });
                }
                Ok(OffsetFn::Sampled { horizon, samples })
            }
            _ => Err(CoreError::Parse {
                line,
                message: format!("`{key}` wants `const ...` or `csv <path>`"),
            }),
        }
    };

    let params = ModelParams {
        n,
        r,
        a: matrix("A", n, n)?,
        b: matrix("B", n, r)?,
        d: matrix("D", n, r)?,
        c0: matrix("C0", n, n)?,
        d0: matrix("D0", n, r)?,
        q: matrix("Q", n, n)?,
        r_control: matrix("R", r, r)?,
        r0: matrix("R0", n, n)?,
        g: matrix("G", n, n)?,
        gamma: matrix("Gamma", n, n)?,
        gamma0: matrix("Gamma0", n, n)?,
        f: offset("f")?,
        sigma: offset("sigma")?,
        eta: offset("eta")?,
        eta0: vector("eta0", n)?,
        x0: vector("x0", n)?,
        horizon,
    };
    params.check_dims()?;
    Ok(Scenario { params, steps })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base)
}

fn write_matrix(out: &mut String, key: &str, m: &Matrix) {
    out.push_str(key);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push_str(&format!(" {:.16e}", m[(i, j)]));
        }
    }
    out.push('\n');
}

/// Render a model instance back to scenario text (constant offsets only).
pub fn render_scenario(p: &ModelParams, steps: usize) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!("n {}\nr {}\nT {:.16e}\nsteps {}\n", p.n, p.r, p.horizon, steps));
    write_matrix(&mut out, "A", &p.a);
    write_matrix(&mut out, "B", &p.b);
    write_matrix(&mut out, "D", &p.d);
    write_matrix(&mut out, "C0", &p.c0);
    write_matrix(&mut out, "D0", &p.d0);
    write_matrix(&mut out, "Q", &p.q);
    write_matrix(&mut out, "R", &p.r_control);
    write_matrix(&mut out, "R0", &p.r0);
    write_matrix(&mut out, "G", &p.g);
    write_matrix(&mut out, "Gamma", &p.gamma);
    write_matrix(&mut out, "Gamma0", &p.gamma0);
    let offset_line = |name: &str, f: &OffsetFn| -> Result<String> {
        match f {
            OffsetFn::Constant(v) => {
                let mut line = format!("{name} const");
                for x in v.iter() {
                    line.push_str(&format!(" {:.16e}", x));
                }
                line.push('\n');
                Ok(line)
            }
            OffsetFn::Sampled { .. } => Err(CoreError::Invalid(
                "sampled offsets cannot be rendered inline; reference a csv instead".into(),
            )),
        }
    };
    out.push_str(&offset_line("f", &p.f)?);
    out.push_str(&offset_line("sigma", &p.sigma)?);
    out.push_str(&offset_line("eta", &p.eta)?);
    let mut eta0 = String::from("eta0");
    for x in p.eta0.iter() {
        eta0.push_str(&format!(" {:.16e}", x));
    }
    out.push_str(&eta0);
    out.push('\n');
    let mut x0 = String::from("x0");
    for x in p.x0.iter() {
        x0.push_str(&format!(" {:.16e}", x));
    }
    out.push_str(&x0);
    out.push('\n');
    Ok(out)
}
