//! Output rendering shared by the CLI and the C bindings: CSV tables,
//! gnuplot data files, and the run manifest.

use crate::error::Result;
use crate::simulate::{ReplicateRow, SimulationResult};
use serde::Serialize;
use std::path::Path;

/// One row per (N, replicate), fixed column order, 17 significant digits.
pub fn study_results_csv(rows: &[ReplicateRow]) -> String {
    let mut out = String::from(
        "n_agents,replicate,social_cost,per_capita_cost,meanfield_gap_sq,adversary_gap_sq\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.n_agents,
            r.replicate,
            r.social_cost,
            r.per_capita_cost,
            r.meanfield_gap_sq,
            r.adversary_gap_sq
        ));
    }
    out
}

/// (N, mean mean-field error) pairs for log-log plotting.
pub fn plot_meanfield_dat(result: &SimulationResult) -> String {
    let mut out = String::from("# N mean_sup_meanfield_error_sq\n");
    for s in &result.per_n {
        out.push_str(&format!("{} {:.16e}\n", s.n_agents, s.mean_meanfield_gap_sq));
    }
    out
}

/// (N, |per-capita cost - largest-N reference|) pairs.
pub fn plot_costgap_dat(result: &SimulationResult) -> String {
    let mut out = String::from("# N per_capita_cost_gap\n");
    let reference = result
        .per_n
        .last()
        .map(|s| s.mean_per_capita_cost)
        .unwrap_or(0.0);
    for s in &result.per_n[..result.per_n.len().saturating_sub(1)] {
        out.push_str(&format!(
            "{} {:.16e}\n",
            s.n_agents,
            (s.mean_per_capita_cost - reference).abs()
        ));
    }
    out
}

pub fn gnuplot_script() -> String {
    let mut s = String::new();
    s.push_str("set logscale xy\n");
    s.push_str("set xlabel 'N'\n");
    s.push_str("set ylabel 'error'\n");
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str("set output 'convergence.png'\n");
    s.push_str(
        "plot 'meanfield_error.dat' using 1:2 with linespoints title 'E sup |x^{(N)} - xhat|^2', \\\n",
    );
    s.push_str("     'cost_gap.dat' using 1:2 with linespoints title 'per-capita cost gap'\n");
    s
}

/// Reproduction record: inputs, parameters, outputs, and timings of one run.
/// Timings are informational; all listed outputs are bit-reproducible given
/// the same manifest parameters.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub scenario: String,
    pub seed: u64,
    pub steps: usize,
    pub n_list: Vec<usize>,
    pub paths: usize,
    pub method: String,
    pub tolerance: f64,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub timings_ms: Vec<(String, u128)>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::CoreError::Invalid(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), body + "\n")?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::CoreError::Invalid(e.to_string()))?;
    std::fs::write(dir.join(name), body + "\n")?;
    Ok(())
}
