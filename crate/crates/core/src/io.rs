//! Dataset ingestion and artifact emission.
//!
//! Artifacts are deterministic: floats in the trace use the shortest
//! round-trip decimal form, energies in the JSON reports carry 17
//! significant digits, and nothing time- or environment-dependent is
//! written to disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{ModelType, ResolvedConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sampler::{ComparisonReport, RunResult, TraceRecord};

/// Exact trace header; column order is part of the file contract.
pub const TRACE_HEADER: &str =
    "iteration,beta,gamma,f,beta_over_m,min_energy,mean_energy,mean_purity,best_energy_ever,past_beta_m";

/// Load a CSV of numeric rows. A single leading header line is skipped
/// when any of its fields does not parse as a number. Rows must be
/// rectangular and every value finite; errors carry 1-based row/column
/// coordinates.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut first_data_line = true;

    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if first_data_line {
            first_data_line = false;
            let header_like = fields.iter().any(|f| f.trim().parse::<f64>().is_err());
            if header_like {
                continue;
            }
        }
        let mut row = Vec::with_capacity(fields.len());
        for (col, field) in fields.iter().enumerate() {
            let value = field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                col: col + 1,
                msg: format!("cannot parse {field:?}: {e}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    col: col + 1,
                    msg: format!("non-finite value {field:?}"),
                });
            }
            row.push(value);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    col: row.len(),
                    msg: format!("ragged row: {} columns, expected {w}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    Dataset::from_rows(rows)
}

/// Shortest round-trip decimal form (`f64` `Display`); infinities print as
/// `inf` / `-inf`, which parse back.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Energies: decimal with 17 significant digits, guaranteed round-trip.
pub fn fmt_energy(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for rec in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            rec.iteration,
            fmt_f64(rec.beta),
            fmt_f64(rec.gamma),
            fmt_f64(rec.coupling),
            fmt_f64(rec.beta_over_m),
            fmt_f64(rec.min_energy),
            fmt_f64(rec.mean_energy),
            fmt_f64(rec.mean_purity),
            fmt_f64(rec.best_energy_ever),
            u8::from(rec.past_beta_m),
        );
    }
    out
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn json_f64_array(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    format!("[{}]", items.join(","))
}

/// Config echo shared by every report. The shape mirrors the dotted input
/// keys, so the echoed object is itself a valid JSON configuration.
fn config_json(cfg: &ResolvedConfig, indent: &str) -> String {
    let mut out = String::new();
    let pad = |s: &mut String| s.push_str(indent);
    out.push_str("{\n");
    pad(&mut out);
    let _ = writeln!(
        out,
        "  \"data\": {{\"path\": \"{}\", \"format\": \"{}\"}},",
        json_escape(&cfg.data_path),
        cfg.data_format
    );
    pad(&mut out);
    match cfg.model_type {
        ModelType::MogNiw => {
            let _ = writeln!(
                out,
                "  \"model\": {{\"type\": \"mog_niw\", \"alpha\": {}, \"kappa0\": {}, \"nu0\": {}, \"mu0\": {}, \"lambda0\": {}}},",
                fmt_f64(cfg.alpha),
                fmt_f64(cfg.kappa0),
                fmt_f64(cfg.nu0),
                json_f64_array(&cfg.mu0),
                json_f64_array(&cfg.lambda0_diag),
            );
        }
        ModelType::SqLoss => {
            let _ = writeln!(out, "  \"model\": {{\"type\": \"sq_loss\"}},");
        }
    }
    pad(&mut out);
    let _ = writeln!(out, "  \"k\": {},", cfg.k);
    pad(&mut out);
    let _ = writeln!(out, "  \"mode\": \"{}\",", cfg.mode.as_str());
    pad(&mut out);
    let _ = writeln!(out, "  \"m\": {},", cfg.m);
    if let Some(seed) = cfg.seed {
        pad(&mut out);
        let _ = writeln!(out, "  \"seed\": {seed},");
    }
    if !cfg.seeds.is_empty() {
        let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
        pad(&mut out);
        let _ = writeln!(out, "  \"seeds\": [{}],", seeds.join(","));
    }
    pad(&mut out);
    let _ = writeln!(
        out,
        "  \"schedule\": {{\"beta0\": {}, \"r_beta\": {}, \"gamma0\": {}, \"r_gamma\": {}, \"beta_hold_target\": {}}},",
        fmt_f64(cfg.beta0),
        fmt_f64(cfg.r_beta),
        fmt_f64(cfg.gamma0),
        fmt_f64(cfg.r_gamma),
        fmt_f64(cfg.beta_hold_target),
    );
    pad(&mut out);
    let _ = writeln!(out, "  \"max_iters\": {},", cfg.max_iters);
    pad(&mut out);
    let _ = writeln!(
        out,
        "  \"convergence\": {{\"tol\": {}, \"window\": {}}},",
        fmt_f64(cfg.convergence_tol),
        cfg.convergence_window
    );
    pad(&mut out);
    let _ = writeln!(
        out,
        "  \"output\": {{\"dir\": \"{}\"}}",
        json_escape(&cfg.output_dir)
    );
    pad(&mut out);
    out.push('}');
    out
}

/// result.json: final labels, final energy, resolved config, termination.
pub fn result_json(result: &RunResult, cfg: &ResolvedConfig, seed: u64) -> String {
    let labels: Vec<String> = result
        .assignment
        .labels()
        .iter()
        .map(|c| c.to_string())
        .collect();
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"mode\": \"{}\",", cfg.mode.as_str());
    let _ = writeln!(out, "  \"seed\": {seed},");
    let _ = writeln!(out, "  \"iterations\": {},", result.iterations);
    let _ = writeln!(
        out,
        "  \"termination\": \"{}\",",
        result.termination.as_str()
    );
    let _ = writeln!(out, "  \"energy\": {},", fmt_energy(result.energy));
    let _ = writeln!(
        out,
        "  \"best_energy_ever\": {},",
        fmt_energy(result.best_energy_ever)
    );
    let _ = writeln!(out, "  \"labels\": [{}],", labels.join(","));
    let _ = writeln!(out, "  \"config\": {}", config_json(cfg, "  "));
    out.push_str("}\n");
    out
}

/// comparison.json: per-seed rows, medians, win rate, resolved config.
pub fn comparison_json(report: &ComparisonReport, cfg: &ResolvedConfig) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"mode\": \"compare\",");
    let seeds: Vec<String> = report.per_seed.iter().map(|r| r.seed.to_string()).collect();
    let _ = writeln!(out, "  \"seeds\": [{}],", seeds.join(","));
    let _ = writeln!(out, "  \"m\": {},", report.m);
    let _ = writeln!(out, "  \"m_prime\": {},", report.m_prime);
    let _ = writeln!(out, "  \"win_rate\": {},", fmt_f64(report.win_rate));
    let _ = writeln!(
        out,
        "  \"qa_median_energy\": {},",
        fmt_energy(report.qa_median_energy)
    );
    let _ = writeln!(
        out,
        "  \"sa_median_energy\": {},",
        fmt_energy(report.sa_median_energy)
    );
    out.push_str("  \"per_seed\": [\n");
    for (idx, row) in report.per_seed.iter().enumerate() {
        let _ = write!(
            out,
            "    {{\"seed\": {}, \"qa_energy\": {}, \"sa_best_energy\": {}, \"qa_iterations\": {}, \"sa_iterations_each\": {}, \"qa_sweeps\": {}, \"sa_sweeps\": {}, \"win\": {}}}",
            row.seed,
            fmt_energy(row.qa_energy),
            fmt_energy(row.sa_best_energy),
            row.qa_iterations,
            row.sa_iterations_each,
            row.qa_sweeps,
            row.sa_sweeps,
            row.win,
        );
        out.push_str(if idx + 1 < report.per_seed.len() {
            ",\n"
        } else {
            "\n"
        });
    }
    out.push_str("  ],\n");
    let _ = writeln!(out, "  \"config\": {}", config_json(cfg, "  "));
    out.push_str("}\n");
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write a dataset as a plain numeric CSV (no header).
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = String::new();
    for row in data.rows() {
        let fields: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}
