//! File formats for instances, solver artifacts, and reports.
//!
//! An instance serializes to a directory of flat files: `edges.txt` (one
//! "u v" pair per line with u < v), `features.csv` (n rows, m columns, no
//! header), `labels.csv` (header `node,true_label,is_train,noisy_label`
//! with an empty noisy field for non-training nodes), and `params.txt`
//! (key=value lines). Solver traces, predictions, baseline assignments,
//! and recovery reports each get a small CSV or key=value writer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::cado::Prediction;
use crate::datagen::{GenParams, PlantedInstance};
use crate::error::{Error, Result};
use crate::recovery::RecoveryReport;

fn parse_err(context: &str, detail: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{context}: {detail}"))
}

/// Writes the four instance files into `dir`, creating it if needed.
pub fn save_instance(instance: &PlantedInstance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut edges = String::new();
    for u in 0..instance.n {
        for v in (u + 1)..instance.n {
            if instance.adjacency[[u, v]] == 1 {
                writeln!(edges, "{u} {v}").expect("string write");
            }
        }
    }
    fs::write(dir.join("edges.txt"), edges)?;

    let mut features = String::new();
    for row in instance.features.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writeln!(features, "{}", cells.join(",")).expect("string write");
    }
    fs::write(dir.join("features.csv"), features)?;

    let mut labels = String::from("node,true_label,is_train,noisy_label\n");
    for v in 0..instance.n {
        let noisy = match instance.noisy_labels[v] {
            Some(l) => l.to_string(),
            None => String::new(),
        };
        writeln!(
            labels,
            "{v},{},{},{noisy}",
            instance.true_labels[v], instance.train_mask[v] as u8
        )
        .expect("string write");
    }
    fs::write(dir.join("labels.csv"), labels)?;

    fs::write(dir.join("params.txt"), format_params(&instance.params))?;
    Ok(())
}

fn format_params(p: &GenParams) -> String {
    // f64 Display is shortest-round-trip, so load(save(x)) is exact.
    format!(
        "k={}\nn0={}\np={}\nq={}\nm={}\nm_omega={}\nomega={}\nsigma={}\ntrain_ratio={}\npi_correct={}\nseed={}\n",
        p.k, p.n0, p.p, p.q, p.m, p.m_omega, p.omega, p.sigma, p.train_ratio, p.pi_correct, p.seed
    )
}

/// Parses `key=value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err("key=value file", format!("line {}: `{line}`", lineno + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn parse_params(text: &str) -> Result<GenParams> {
    let mut p = GenParams::default();
    for (key, value) in parse_key_values(text)? {
        let bad = |e: &dyn std::fmt::Display| parse_err("params.txt", format!("{key}: {e}"));
        match key.as_str() {
            "k" => p.k = value.parse().map_err(|e| bad(&e))?,
            "n0" => p.n0 = value.parse().map_err(|e| bad(&e))?,
            "p" => p.p = value.parse().map_err(|e| bad(&e))?,
            "q" => p.q = value.parse().map_err(|e| bad(&e))?,
            "m" => p.m = value.parse().map_err(|e| bad(&e))?,
            "m_omega" => p.m_omega = value.parse().map_err(|e| bad(&e))?,
            "omega" => p.omega = value.parse().map_err(|e| bad(&e))?,
            "sigma" => p.sigma = value.parse().map_err(|e| bad(&e))?,
            "train_ratio" => p.train_ratio = value.parse().map_err(|e| bad(&e))?,
            "pi_correct" => p.pi_correct = value.parse().map_err(|e| bad(&e))?,
            "seed" => p.seed = value.parse().map_err(|e| bad(&e))?,
            other => return Err(parse_err("params.txt", format!("unknown key `{other}`"))),
        }
    }
    Ok(p)
}

/// Reads an instance directory written by [`save_instance`].
pub fn load_instance(dir: &Path) -> Result<PlantedInstance> {
    let params = parse_params(&fs::read_to_string(dir.join("params.txt"))?)?;

    let labels_text = fs::read_to_string(dir.join("labels.csv"))?;
    let mut lines = labels_text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "node,true_label,is_train,noisy_label" {
        return Err(parse_err("labels.csv", format!("bad header `{header}`")));
    }
    let mut true_labels = Vec::new();
    let mut train_mask = Vec::new();
    let mut noisy_labels = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(parse_err("labels.csv", format!("bad row `{line}`")));
        }
        let node: usize = cells[0]
            .parse()
            .map_err(|e| parse_err("labels.csv", format!("node: {e}")))?;
        if node != true_labels.len() {
            return Err(parse_err(
                "labels.csv",
                format!("nodes out of order at `{line}`"),
            ));
        }
        true_labels.push(
            cells[1]
                .parse()
                .map_err(|e| parse_err("labels.csv", format!("true_label: {e}")))?,
        );
        let is_train = match cells[2] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err("labels.csv", format!("is_train `{other}`"))),
        };
        train_mask.push(is_train);
        noisy_labels.push(if cells[3].is_empty() {
            if is_train {
                return Err(parse_err(
                    "labels.csv",
                    format!("training node missing noisy label: `{line}`"),
                ));
            }
            None
        } else {
            Some(
                cells[3]
                    .parse()
                    .map_err(|e| parse_err("labels.csv", format!("noisy_label: {e}")))?,
            )
        });
    }
    let n = true_labels.len();
    if n == 0 {
        return Err(parse_err("labels.csv", "no rows"));
    }

    let features_text = fs::read_to_string(dir.join("features.csv"))?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for line in features_text.lines() {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse()
                    .map_err(|e| parse_err("features.csv", format!("`{c}`: {e}")))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(parse_err(
            "features.csv",
            format!("{} rows for {n} nodes", rows.len()),
        ));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(parse_err("features.csv", "ragged rows"));
    }
    let mut features = Array2::<f64>::zeros((n, m));
    for (v, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            features[[v, j]] = x;
        }
    }

    let mut adjacency = Array2::<u8>::zeros((n, n));
    for line in fs::read_to_string(dir.join("edges.txt"))?.lines() {
        let (u, v) = line
            .split_once(' ')
            .ok_or_else(|| parse_err("edges.txt", format!("bad line `{line}`")))?;
        let u: usize = u
            .parse()
            .map_err(|e| parse_err("edges.txt", format!("{e}")))?;
        let v: usize = v
            .parse()
            .map_err(|e| parse_err("edges.txt", format!("{e}")))?;
        if u >= v {
            return Err(parse_err("edges.txt", format!("need u < v, got `{line}`")));
        }
        if v >= n {
            return Err(Error::IndexOutOfRange { index: v, limit: n });
        }
        adjacency[[u, v]] = 1;
        adjacency[[v, u]] = 1;
    }
    let mut polarized = Array2::<i8>::zeros((n, n));
    for u in 0..n {
        for v in 0..n {
            if u != v {
                polarized[[u, v]] = if adjacency[[u, v]] == 1 { 1 } else { -1 };
            }
        }
    }

    Ok(PlantedInstance {
        n,
        adjacency,
        polarized,
        features,
        true_labels,
        train_mask,
        noisy_labels,
        params,
    })
}

/// Objective trace as `iteration,objective` rows.
pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = String::from("iteration,objective\n");
    for (t, obj) in trace.iter().enumerate() {
        writeln!(out, "{t},{obj}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Prediction as `node,atom,class,is_train,correct` rows.
pub fn write_prediction_csv(
    path: &Path,
    instance: &PlantedInstance,
    prediction: &Prediction,
) -> Result<()> {
    let mut out = String::from("node,atom,class,is_train,correct\n");
    for v in 0..instance.n {
        writeln!(
            out,
            "{v},{},{},{},{}",
            prediction.atom_assignment[v],
            prediction.class_assignment[v],
            instance.train_mask[v] as u8,
            (prediction.class_assignment[v] == instance.true_labels[v]) as u8
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Baseline clustering as `node,cluster` rows.
pub fn write_assignment_csv(path: &Path, assignment: &[usize]) -> Result<()> {
    let mut out = String::from("node,cluster\n");
    for (v, c) in assignment.iter().enumerate() {
        writeln!(out, "{v},{c}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Recovery report as a flat key=value file (scalars and the ρ⁺ matrices).
pub fn write_recovery_report_txt(path: &Path, report: &RecoveryReport) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "homogeneity_margin={}", report.homogeneity_margin).expect("string write");
    writeln!(out, "visibility_margin={}", report.visibility_margin).expect("string write");
    let k = report.rho_plus_matrix.nrows();
    for i in 0..k {
        for j in 0..k {
            writeln!(
                out,
                "rho_plus_self_excluded.{i}.{j}={}",
                report.rho_plus_matrix[[i, j]]
            )
            .expect("string write");
            writeln!(
                out,
                "rho_plus_literal.{i}.{j}={}",
                report.rho_plus_literal[[i, j]]
            )
            .expect("string write");
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Recovery report per-cluster rows: block norms with normalizers and the
/// certificate margin.
pub fn write_recovery_report_csv(path: &Path, report: &RecoveryReport) -> Result<()> {
    let mut out = String::from(
        "cluster,intra_norm,intra_normalizer,extra_norm,extra_normalizer,\
         inter_norm,inter_normalizer,certificate_rho,certificate_bound,certificate_satisfied\n",
    );
    for (i, (b, c)) in report
        .block_op_norms
        .iter()
        .zip(&report.node_only_bound)
        .enumerate()
    {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{}",
            b.intra,
            b.intra_normalizer,
            b.extra,
            b.extra_normalizer,
            b.inter,
            b.inter_normalizer,
            c.rho,
            c.bound,
            c.satisfied as u8
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}
