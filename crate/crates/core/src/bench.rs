//! Benchmark records, workload/result files and speedup reports.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{PassStats, VariantConfig};
use crate::particle::{LayoutConfig, ParticleAoS};
use crate::scalar::Real;
use crate::snapshot::{self, Sections, SnapshotError, PARTICLES};
use crate::workload::WorkloadSpec;

/// Column order of benchmark CSV files.
pub const CSV_COLUMNS: [&str; 14] = [
    "variant",
    "threads",
    "n_particles",
    "k",
    "repeat",
    "iterations",
    "t_total_s",
    "t_tree_s",
    "t_search_s",
    "t_select_s",
    "t_interact_s",
    "t_layout_s",
    "t_contention_s",
    "checksum_hex",
];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("column '{0}' not found")]
    MissingColumn(String),
    #[error("row {row}: cannot parse '{value}' in column '{column}'")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("no rows for baseline variant '{variant}' at {threads} threads")]
    MissingBaseline { variant: String, threads: usize },
    #[error("vector length must be at least 1")]
    BadVectorLength,
    #[error("loop timings must be positive (scalar {scalar}, vector {vector})")]
    BadLoopTiming { scalar: f64, vector: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub variant: String,
    pub threads: usize,
    pub n_particles: usize,
    pub k: usize,
    pub repeat: usize,
    pub iterations: usize,
    pub t_total_s: f64,
    pub t_tree_s: f64,
    pub t_search_s: f64,
    pub t_select_s: f64,
    pub t_interact_s: f64,
    pub t_layout_s: f64,
    pub t_contention_s: f64,
    pub checksum_hex: String,
}

impl BenchRecord {
    pub fn from_pass(
        variant: &str,
        threads: usize,
        n_particles: usize,
        k: usize,
        repeat: usize,
        stats: &PassStats,
        checksum: u64,
    ) -> Self {
        let p = &stats.phase_times;
        Self {
            variant: variant.to_string(),
            threads,
            n_particles,
            k,
            repeat,
            iterations: stats.iteration_count,
            t_total_s: stats.total_time,
            t_tree_s: p.tree_build,
            t_search_s: p.search,
            t_select_s: p.select,
            t_interact_s: p.interact,
            t_layout_s: p.layout,
            t_contention_s: stats.contention_time,
            checksum_hex: format!("{checksum:016x}"),
        }
    }
}

/// Appends rows to a CSV file, writing the header first if the file is new
/// or empty.
pub fn append_records(path: &Path, records: &[BenchRecord]) -> Result<(), BenchError> {
    let io = |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let fresh = file.metadata().map_err(io)?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Benchmark CSV read by column name; unknown extra columns are kept so
/// externally merged loop timings can be reported on.
#[derive(Clone, Debug, Default)]
pub struct TimingTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TimingTable {
    pub fn read(path: &Path) -> Result<Self, BenchError> {
        let file = std::fs::File::open(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self, BenchError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize, BenchError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::MissingColumn(name.to_string()))
    }

    fn parse<V: std::str::FromStr>(&self, row: usize, col: usize) -> Result<V, BenchError> {
        let value = &self.rows[row][col];
        value.trim().parse().map_err(|_| BenchError::BadValue {
            row,
            column: self.headers[col].clone(),
            value: value.clone(),
        })
    }

    /// Median of `column` per (variant, threads).
    pub fn medians(&self, column: &str) -> Result<BTreeMap<(String, usize), f64>, BenchError> {
        let (v, t, c) = (self.column("variant")?, self.column("threads")?, self.column(column)?);
        let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for row in 0..self.rows.len() {
            let threads: usize = self.parse(row, t)?;
            let value: f64 = self.parse(row, c)?;
            groups
                .entry((self.rows[row][v].clone(), threads))
                .or_default()
                .push(value);
        }
        Ok(groups.into_iter().map(|(k, vals)| (k, median(vals))).collect())
    }

    pub fn checksums(&self) -> Result<Vec<String>, BenchError> {
        let c = self.column("checksum_hex")?;
        Ok(self.rows.iter().map(|r| r[c].clone()).collect())
    }
}

pub fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VectorMetrics {
    /// Scalar loop time over vector loop time.
    pub speedup: f64,
    /// `speedup / vector_length`.
    pub efficiency: f64,
}

pub fn vector_metrics(t_scalar: f64, t_vector: f64, vector_length: u32) -> Result<VectorMetrics, BenchError> {
    if vector_length == 0 {
        return Err(BenchError::BadVectorLength);
    }
    if !(t_scalar > 0.0 && t_vector > 0.0) {
        return Err(BenchError::BadLoopTiming {
            scalar: t_scalar,
            vector: t_vector,
        });
    }
    let speedup = t_scalar / t_vector;
    Ok(VectorMetrics {
        speedup,
        efficiency: speedup / vector_length as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub variant: String,
    pub threads: usize,
    pub t_total_s: f64,
    /// Baseline time over this row's time.
    pub speedup: f64,
    /// Speedup over the same variant at one thread, divided by threads.
    /// Absent when the variant has no single-thread row.
    pub efficiency: Option<f64>,
    pub vector: Option<VectorMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedupReport {
    pub baseline_variant: String,
    pub baseline_threads: usize,
    pub rows: Vec<SpeedupRow>,
}

/// Columns and vector length for the optional vectorisation metrics.
#[derive(Clone, Debug)]
pub struct VectorColumns {
    pub scalar_column: String,
    pub vector_column: String,
    pub vector_length: u32,
}

pub fn build_report(
    table: &TimingTable,
    baseline_variant: &str,
    baseline_threads: usize,
    vector: Option<&VectorColumns>,
) -> Result<SpeedupReport, BenchError> {
    let totals = table.medians("t_total_s")?;
    let baseline = *totals
        .get(&(baseline_variant.to_string(), baseline_threads))
        .ok_or_else(|| BenchError::MissingBaseline {
            variant: baseline_variant.to_string(),
            threads: baseline_threads,
        })?;
    let loops = match vector {
        Some(v) => Some((
            table.medians(&v.scalar_column)?,
            table.medians(&v.vector_column)?,
            v.vector_length,
        )),
        None => None,
    };
    let mut rows = Vec::with_capacity(totals.len());
    for ((variant, threads), &t) in &totals {
        let efficiency = totals
            .get(&(variant.clone(), 1))
            .map(|&t1| t1 / t / *threads as f64);
        let vector = match &loops {
            Some((scalar, vec, vl)) => {
                let key = (variant.clone(), *threads);
                Some(vector_metrics(scalar[&key], vec[&key], *vl)?)
            }
            None => None,
        };
        rows.push(SpeedupRow {
            variant: variant.clone(),
            threads: *threads,
            t_total_s: t,
            speedup: baseline / t,
            efficiency,
            vector,
        });
    }
    Ok(SpeedupReport {
        baseline_variant: baseline_variant.to_string(),
        baseline_threads,
        rows,
    })
}

impl SpeedupReport {
    pub fn to_markdown(&self) -> String {
        let with_vector = self.rows.iter().any(|r| r.vector.is_some());
        let mut out = format!(
            "Baseline: {} @ {} thread(s)\n\n| variant | threads | t_total_s | speedup | efficiency |",
            self.baseline_variant, self.baseline_threads
        );
        if with_vector {
            out.push_str(" S_v | eps |");
        }
        out.push_str("\n|---|---:|---:|---:|---:|");
        if with_vector {
            out.push_str("---:|---:|");
        }
        out.push('\n');
        for r in &self.rows {
            let eff = r.efficiency.map_or("-".to_string(), |e| format!("{e:.3}"));
            out.push_str(&format!(
                "| {} | {} | {:.6} | {:.3} | {} |",
                r.variant, r.threads, r.t_total_s, r.speedup, eff
            ));
            if let Some(v) = r.vector {
                out.push_str(&format!(" {:.3} | {:.3} |", v.speedup, v.efficiency));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "variant",
            "threads",
            "t_total_s",
            "speedup",
            "efficiency",
            "s_v",
            "epsilon",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            w.write_record([
                r.variant.clone(),
                r.threads.to_string(),
                r.t_total_s.to_string(),
                r.speedup.to_string(),
                opt(r.efficiency),
                opt(r.vector.map(|v| v.speedup)),
                opt(r.vector.map(|v| v.efficiency)),
            ])?;
        }
        w.flush().map_err(|source| BenchError::Io {
            path: "report".into(),
            source,
        })?;
        Ok(())
    }
}

/// Section holding the JSON workload description.
pub const WORKLOAD: &str = "workload";
/// Section holding the JSON run description of a result file.
pub const RUN: &str = "run";

pub fn workload_sections<T: Real>(spec: &WorkloadSpec, particles: &ParticleAoS<T>) -> Sections {
    let mut s = Sections::new();
    s.insert(
        WORKLOAD.to_string(),
        serde_json::to_vec(spec).expect("workload spec serialises"),
    );
    s.insert(PARTICLES.to_string(), snapshot::encode_particles(particles));
    s
}

fn section<'a>(sections: &'a Sections, name: &str) -> Result<&'a [u8], SnapshotError> {
    sections
        .get(name)
        .map(Vec::as_slice)
        .ok_or_else(|| SnapshotError::MissingSection(name.to_string()))
}

pub fn read_workload<T: Real>(
    sections: &Sections,
) -> Result<(WorkloadSpec, ParticleAoS<T>), SnapshotError> {
    let spec: WorkloadSpec =
        serde_json::from_slice(section(sections, WORKLOAD)?).map_err(|e| SnapshotError::Malformed {
            section: WORKLOAD.to_string(),
            reason: e.to_string(),
        })?;
    let layout = LayoutConfig {
        aos_record_bytes: spec.aos_record_bytes,
        ..Default::default()
    };
    let particles = snapshot::decode_particles(section(sections, PARTICLES)?, &layout)?;
    Ok((spec, particles))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub variant: String,
    pub config: VariantConfig,
    pub precision: String,
    pub threads: usize,
    pub density_checksum: String,
    pub workload: WorkloadSpec,
}

pub fn result_sections<T: Real>(info: &RunInfo, particles: &ParticleAoS<T>) -> Sections {
    let mut s = Sections::new();
    s.insert(RUN.to_string(), serde_json::to_vec(info).expect("run info serialises"));
    s.insert(PARTICLES.to_string(), snapshot::encode_particles(particles));
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub compared: usize,
    pub max_rel_density: f64,
    pub max_rel_smoothing: f64,
    /// Indices whose density or smoothing length differ beyond tolerance,
    /// or whose ids or positions differ at all.
    pub mismatches: Vec<usize>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Field-wise comparison of two particle files.
pub fn verify_particles(
    a: &ParticleAoS<f64>,
    b: &ParticleAoS<f64>,
    rtol: f64,
) -> Result<VerifyReport, SnapshotError> {
    if a.len() != b.len() {
        return Err(SnapshotError::Malformed {
            section: PARTICLES.to_string(),
            reason: format!("particle counts differ: {} vs {}", a.len(), b.len()),
        });
    }
    let mut report = VerifyReport {
        compared: a.len(),
        max_rel_density: 0.0,
        max_rel_smoothing: 0.0,
        mismatches: Vec::new(),
    };
    for (i, (p, q)) in a.iter().zip(b.iter()).enumerate() {
        let dr = rel_diff(p.density, q.density);
        let dh = rel_diff(p.smoothing_length, q.smoothing_length);
        report.max_rel_density = report.max_rel_density.max(dr);
        report.max_rel_smoothing = report.max_rel_smoothing.max(dh);
        let same_particle = p.id == q.id && p.position == q.position && p.mass == q.mass;
        if !same_particle || dr > rtol || dh > rtol {
            report.mismatches.push(i);
        }
    }
    Ok(report)
}
