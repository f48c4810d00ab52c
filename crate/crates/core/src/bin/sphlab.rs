use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sphlab::bench::{self, BenchRecord, RunInfo, TimingTable, VectorColumns};
use sphlab::density::{initialize_smoothing_lengths, Preset};
use sphlab::snapshot::{self, SnapshotError};
use sphlab::workload::{generate, WorkloadKind, WorkloadSpec};
use sphlab::{compute_density_pass, ParticleAoS, Real};

const EXIT_USAGE: u8 = 1;
const EXIT_CORRECTNESS: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "sphlab", version, about = "SPH density pass benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    Blobs,
    Lattice,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a workload snapshot.
    Gen {
        #[arg(long, value_enum, default_value = "uniform")]
        kind: Kind,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "box", default_value_t = 1.0)]
        box_side: f64,
        #[arg(long, default_value_t = 8)]
        blobs: usize,
        /// Blob standard deviation as a fraction of the box side.
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 295)]
        k: usize,
        #[arg(long, default_value_t = 224)]
        record_bytes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a variant of the density pass on a snapshot.
    Run {
        snapshot: PathBuf,
        #[arg(long, default_value = "optimised")]
        variant: Preset,
        /// Comma-separated thread counts.
        #[arg(
            long,
            env = "SPHLAB_THREADS",
            default_value = "1",
            value_delimiter = ',',
            value_parser = clap::value_parser!(u64).range(1..)
        )]
        threads: Vec<u64>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        repeats: u64,
        /// Neighbour count; defaults to the one the workload was sized for.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
        #[arg(long)]
        chunk: Option<usize>,
        #[arg(long)]
        leaf: Option<usize>,
        #[arg(long, value_enum, default_value = "f64")]
        precision: Precision,
        /// Append per-repeat timings to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the final particles of the first run here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise a timing CSV into speedup and efficiency tables.
    Report {
        csv: PathBuf,
        #[arg(long, default_value = "original")]
        baseline_variant: String,
        #[arg(long, default_value_t = 1)]
        baseline_threads: usize,
        #[arg(long, requires_all = ["vector_col", "vl"])]
        scalar_col: Option<String>,
        #[arg(long, requires_all = ["scalar_col", "vl"])]
        vector_col: Option<String>,
        /// Vector length in lanes.
        #[arg(long, requires_all = ["scalar_col", "vector_col"])]
        vl: Option<u32>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Compare two result snapshots field by field.
    Verify {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        rtol: f64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn snapshot_failure(e: SnapshotError) -> Failure {
    fail(EXIT_IO, e)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen {
            kind,
            n,
            seed,
            box_side,
            blobs,
            sigma,
            k,
            record_bytes,
            out,
        } => {
            let spec = WorkloadSpec {
                kind: match kind {
                    Kind::Uniform => WorkloadKind::Uniform,
                    Kind::Blobs => WorkloadKind::Blobs,
                    Kind::Lattice => WorkloadKind::Lattice,
                },
                n_particles: n as usize,
                box_side,
                seed,
                blob_count: blobs,
                blob_sigma: sigma,
                k_neighbors: k,
                aos_record_bytes: record_bytes,
            };
            gen(&spec, &out)
        }
        Command::Run {
            snapshot,
            variant,
            threads,
            repeats,
            k,
            chunk,
            leaf,
            precision,
            csv,
            out,
        } => {
            let opts = RunOptions {
                variant,
                threads: threads.into_iter().map(|t| t as usize).collect(),
                repeats: repeats as usize,
                k: k.map(|k| k as usize),
                chunk,
                leaf,
                csv,
                out,
            };
            match precision {
                Precision::F64 => run::<f64>(&snapshot, &opts, "f64"),
                Precision::F32 => run::<f32>(&snapshot, &opts, "f32"),
            }
        }
        Command::Report {
            csv,
            baseline_variant,
            baseline_threads,
            scalar_col,
            vector_col,
            vl,
            out_csv,
        } => {
            let vector = match (scalar_col, vector_col, vl) {
                (Some(s), Some(v), Some(vl)) => Some(VectorColumns {
                    scalar_column: s,
                    vector_column: v,
                    vector_length: vl,
                }),
                _ => None,
            };
            report(&csv, &baseline_variant, baseline_threads, vector.as_ref(), out_csv.as_deref())
        }
        Command::Verify { a, b, rtol } => verify(&a, &b, rtol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn gen(spec: &WorkloadSpec, out: &Path) -> Result<(), Failure> {
    let particles = generate::<f64>(spec).map_err(|e| fail(EXIT_USAGE, e))?;
    snapshot::dump(out, &bench::workload_sections(spec, &particles)).map_err(snapshot_failure)?;
    println!("wrote {} particles to {}", particles.len(), out.display());
    Ok(())
}

struct RunOptions {
    variant: Preset,
    threads: Vec<usize>,
    repeats: usize,
    k: Option<usize>,
    chunk: Option<usize>,
    leaf: Option<usize>,
    csv: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn run<T: Real>(path: &Path, opts: &RunOptions, precision: &str) -> Result<(), Failure> {
    let sections = snapshot::load(path).map_err(snapshot_failure)?;
    let (spec, mut pristine) = bench::read_workload::<T>(&sections).map_err(snapshot_failure)?;
    let mut config = opts.variant.config().with_k(opts.k.unwrap_or(spec.k_neighbors));
    if let Some(c) = opts.chunk {
        config.chunk_size = c;
    }
    if let Some(l) = opts.leaf {
        config.leaf_capacity = l;
    }
    config.validate().map_err(|e| fail(EXIT_USAGE, e))?;
    initialize_smoothing_lengths(&mut pristine, T::lit(spec.box_side), config.k_neighbors);

    let n = pristine.len();
    let mut records = Vec::new();
    let mut reference: Option<u64> = None;
    let mut first_result: Option<(usize, u64, ParticleAoS<T>)> = None;
    println!("variant threads repeat iterations t_total_s checksum");
    for &threads in &opts.threads {
        for repeat in 0..opts.repeats {
            let mut particles = pristine.clone();
            let output = compute_density_pass(&mut particles, &config, threads).map_err(|e| fail(EXIT_CORRECTNESS, e))?;
            let checksum = snapshot::density_checksum(&output.densities);
            println!(
                "{} {} {} {} {:.6} {:016x}",
                opts.variant.name(),
                threads,
                repeat,
                output.stats.iteration_count,
                output.stats.total_time,
                checksum
            );
            records.push(BenchRecord::from_pass(
                opts.variant.name(),
                threads,
                n,
                config.k_neighbors,
                repeat,
                &output.stats,
                checksum,
            ));
            match reference {
                None => reference = Some(checksum),
                Some(r) if r != checksum => {
                    if let Some(csv) = &opts.csv {
                        bench::append_records(csv, &records).map_err(|e| fail(EXIT_IO, e))?;
                    }
                    return Err(fail(
                        EXIT_CORRECTNESS,
                        format!("density checksum {checksum:016x} at {threads} thread(s), repeat {repeat} differs from {r:016x}"),
                    ));
                }
                Some(_) => {}
            }
            if first_result.is_none() {
                first_result = Some((threads, checksum, particles));
            }
        }
    }
    if let Some(csv) = &opts.csv {
        bench::append_records(csv, &records).map_err(|e| fail(EXIT_IO, e))?;
    }
    if let (Some(out), Some((threads, checksum, particles))) = (&opts.out, first_result) {
        let info = RunInfo {
            variant: opts.variant.name().to_string(),
            config,
            precision: precision.to_string(),
            threads,
            density_checksum: format!("{checksum:016x}"),
            workload: spec,
        };
        snapshot::dump(out, &bench::result_sections(&info, &particles)).map_err(snapshot_failure)?;
    }
    Ok(())
}

fn report(
    csv: &Path,
    baseline_variant: &str,
    baseline_threads: usize,
    vector: Option<&VectorColumns>,
    out_csv: Option<&Path>,
) -> Result<(), Failure> {
    use bench::BenchError;
    let table = TimingTable::read(csv).map_err(|e| fail(EXIT_IO, e))?;
    let report = bench::build_report(&table, baseline_variant, baseline_threads, vector).map_err(|e| {
        let code = match e {
            BenchError::Io { .. } | BenchError::Csv(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        fail(code, e)
    })?;
    print!("{}", report.to_markdown());
    if let Some(path) = out_csv {
        let file = std::fs::File::create(path).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?;
        report.write_csv(file).map_err(|e| fail(EXIT_IO, e))?;
    }
    Ok(())
}

fn verify(a: &Path, b: &Path, rtol: f64) -> Result<(), Failure> {
    let read = |p: &Path| -> Result<ParticleAoS<f64>, Failure> {
        let sections = snapshot::load(p).map_err(snapshot_failure)?;
        let bytes = sections
            .get(snapshot::PARTICLES)
            .ok_or_else(|| snapshot_failure(SnapshotError::MissingSection(snapshot::PARTICLES.into())))?;
        snapshot::decode_particles(bytes, &Default::default()).map_err(snapshot_failure)
    };
    let (pa, pb) = (read(a)?, read(b)?);
    let report = bench::verify_particles(&pa, &pb, rtol).map_err(|e| fail(EXIT_CORRECTNESS, e))?;
    println!(
        "compared {} particles: max relative density diff {:.3e}, smoothing length {:.3e}",
        report.compared, report.max_rel_density, report.max_rel_smoothing
    );
    if report.passed() {
        println!("OK");
        Ok(())
    } else {
        let shown: Vec<String> = report.mismatches.iter().take(10).map(|i| i.to_string()).collect();
        Err(fail(
            EXIT_CORRECTNESS,
            format!(
                "{} particles differ beyond rtol {rtol:e} (first: {})",
                report.mismatches.len(),
                shown.join(", ")
            ),
        ))
    }
}
