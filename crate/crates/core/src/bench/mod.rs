//! Configuration-driven benchmark commands behind the `qtraj` binary:
//! ensemble runs, single-bin step-size sweeps and invariant checks.

mod check;
mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::maps::MapKind;
use crate::metrics::{ensemble_reduce, fit_scaling, trajectory_errors, ErrorSummary, ScalingFit};
use crate::setup::z_observable;
use crate::trajectory::{single_bin_errors, ChainMode, SingleBinConfig, TrajectoryEngine};

pub use check::{cmd_check, run_checks, CheckGrid, CheckLine, CheckReport};
pub use config::{ExperimentConfig, Formats, SweepSettings, FULL_REALIZATIONS};

/// Name of the manifest written next to every output.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{aborted} of {total} trajectories aborted (limit {limit_percent}%)")]
    ExcessAborts {
        aborted: usize,
        total: usize,
        limit_percent: f64,
    },
    #[error("{0} invariant check(s) failed")]
    InvariantFailure(usize),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] crate::Error),
}

impl BenchError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::ExcessAborts { .. } => 3,
            BenchError::InvariantFailure(_) => 4,
            BenchError::Io { .. } | BenchError::Core(_) => 1,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), BenchError> {
    fs::write(path, contents).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Runs `f` on a pool of `jobs` threads, or on the default pool when `None`.
/// Results never depend on the thread count.
pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, BenchError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(BenchError::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BenchError::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn csv_header(columns: &str) -> String {
    format!("# manifest: {MANIFEST_FILE}\n{columns}\n")
}

fn write_manifest(
    cfg: &ExperimentConfig,
    command: &str,
    extra: serde_json::Value,
) -> Result<(), BenchError> {
    let manifest = json!({
        "command": command,
        "example": cfg.name(),
        "config": cfg.raw,
        "protocol": cfg.protocol,
        "histogram": cfg.histogram,
        "seed": cfg.protocol.seed,
        "code_version": env!("CARGO_PKG_VERSION"),
        "rng": "ChaCha8 per trajectory stream, Ziggurat normals",
        "details": extra,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    write_file(&cfg.output_dir.join(MANIFEST_FILE), &text)
}

/// Results of [`cmd_run`].
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub summaries: Vec<ErrorSummary>,
    pub realizations: usize,
    pub aborted: usize,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn summary(&self, kind: MapKind) -> Option<&ErrorSummary> {
        self.summaries.iter().find(|s| s.kind == kind)
    }
}

fn engine_for(cfg: &ExperimentConfig) -> Result<TrajectoryEngine, BenchError> {
    TrajectoryEngine::new(&cfg.setup, &cfg.protocol).map_err(|e| BenchError::Config(e.to_string()))
}

/// Runs the ensemble and writes per-map histograms, a summary and a
/// sample trajectory for every map.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport, BenchError> {
    let engine = engine_for(cfg)?;
    let kinds = engine.kinds();
    let started = Instant::now();
    let results = engine.run_ensemble(ChainMode::SelfPropagating, |run| {
        kinds
            .iter()
            .map(|&k| trajectory_errors(run, k))
            .collect::<Result<Vec<_>, _>>()
    });
    let total = results.len();
    let mut per_kind: Vec<Vec<_>> = vec![Vec::with_capacity(total); kinds.len()];
    let mut aborted = 0;
    for (index, res) in results.into_iter().enumerate() {
        match res {
            Ok(errs) => {
                let errs = errs.map_err(crate::Error::from)?;
                for (slot, e) in per_kind.iter_mut().zip(errs) {
                    slot.push(e);
                }
            }
            Err(e) => {
                log::warn!("trajectory {index}: {e}");
                aborted += 1;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if aborted == total {
        return Err(BenchError::ExcessAborts {
            aborted,
            total,
            limit_percent: 100.0 * cfg.max_abort_fraction,
        });
    }
    let summaries = kinds
        .iter()
        .zip(&per_kind)
        .map(|(&k, errs)| {
            ensemble_reduce(k, errs, aborted, &cfg.histogram).map_err(crate::Error::from)
        })
        .collect::<Result<Vec<_>, _>>()?;

    ensure_dir(&cfg.output_dir)?;
    let mut files = Vec::new();
    if cfg.formats.csv {
        for s in &summaries {
            let mut text = csv_header("bin_lo,bin_hi,count");
            for (w, n) in s.histogram.edges.windows(2).zip(&s.histogram.counts) {
                writeln!(text, "{},{},{}", w[0], w[1], n).expect("write to string");
            }
            let path = cfg
                .output_dir
                .join(format!("histogram_{}.csv", s.kind.name()));
            write_file(&path, &text)?;
            files.push(path);
        }
        files.extend(write_sample_trajectory(cfg, &engine)?);
    }
    if cfg.formats.json {
        let maps: serde_json::Map<String, serde_json::Value> = summaries
            .iter()
            .map(|s| {
                (
                    s.kind.name().to_string(),
                    json!({ "mtrse": s.mtrse, "mtrae": s.mtrae, "aborted": s.aborted_count }),
                )
            })
            .collect();
        let summary = json!({
            "manifest": MANIFEST_FILE,
            "example": cfg.name(),
            "realizations": total,
            "completed": total - aborted,
            "maps": maps,
        });
        let path = cfg.output_dir.join("summary.json");
        write_file(
            &path,
            &(serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"),
        )?;
        files.push(path);
    }
    write_manifest(
        cfg,
        "run",
        json!({ "elapsed_seconds": elapsed, "aborted": aborted, "realizations": total }),
    )?;

    if aborted as f64 > cfg.max_abort_fraction * total as f64 {
        return Err(BenchError::ExcessAborts {
            aborted,
            total,
            limit_percent: 100.0 * cfg.max_abort_fraction,
        });
    }
    Ok(RunReport {
        summaries,
        realizations: total,
        aborted,
        files,
    })
}

/// Trajectory 0 in the style of a single-run plot: `z` of the true and
/// coarse states with the record and the distance between them.
fn write_sample_trajectory(
    cfg: &ExperimentConfig,
    engine: &TrajectoryEngine,
) -> Result<Vec<PathBuf>, BenchError> {
    let run = match engine.run(0, ChainMode::SelfPropagating) {
        Ok(run) => run,
        Err(e) => {
            log::warn!("sample trajectory aborted, no trajectory CSV written: {e}");
            return Ok(Vec::new());
        }
    };
    let z = z_observable(cfg.setup.dim());
    let dt = run.records.first().map_or(0.0, |r| r.dt_bin);
    let mut files = Vec::new();
    for (kind, states) in &run.coarse_states {
        let mut text = csv_header("t,y_or_I,z_true,z_map,D_map");
        for j in 1..=run.n_bins() {
            let zt = run.true_states[j]
                .expectation(&z)
                .map_err(crate::Error::from)?
                .re;
            let zm = states[j].expectation(&z).map_err(crate::Error::from)?.re;
            let d = crate::metrics::trae_pure(&states[j], &run.true_states[j])
                .map_err(crate::Error::from)?;
            writeln!(
                text,
                "{},{},{},{},{}",
                j as f64 * dt,
                run.records[j - 1].i,
                zt,
                zm,
                d
            )
            .expect("write to string");
        }
        let path = cfg
            .output_dir
            .join(format!("trajectory_{}.csv", kind.name()));
        write_file(&path, &text)?;
        files.push(path);
    }
    Ok(files)
}

/// Results of [`cmd_sweep`].
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub fits: Vec<(MapKind, ScalingFit)>,
    pub aborted: usize,
    pub files: Vec<PathBuf>,
}

impl SweepReport {
    pub fn fit(&self, kind: MapKind) -> Option<&ScalingFit> {
        self.fits.iter().find(|(k, _)| *k == kind).map(|(_, f)| f)
    }
}

/// Median single-bin distance to the fully conditioned state for each
/// map and step size, with a power-law fit per map.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, BenchError> {
    let sweep = &cfg.sweep;
    if sweep.grid.len() < 3 {
        return Err(BenchError::Config(format!(
            "sweep grid needs at least 3 step sizes, got {}",
            sweep.grid.len()
        )));
    }
    let gamma = cfg.setup.gamma();
    let mut kinds = cfg.protocol.map_kinds.clone();
    kinds.sort();
    kinds.dedup();
    let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); kinds.len()];
    let mut aborted = 0;
    for &g in &sweep.grid {
        let sb = SingleBinConfig {
            dt_bin: g / gamma,
            dt_fine: sweep.gamma_dt_fine / gamma,
            records: sweep.records,
            seed: cfg.protocol.seed,
            map_kinds: kinds.clone(),
        };
        let res =
            single_bin_errors(&cfg.setup, &sb).map_err(|e| BenchError::Config(e.to_string()))?;
        aborted += res.aborted;
        for (k, pts) in kinds.iter().zip(points.iter_mut()) {
            let m = res.median(*k).ok_or_else(|| BenchError::ExcessAborts {
                aborted: res.aborted,
                total: sweep.records,
                limit_percent: 100.0 * cfg.max_abort_fraction,
            })?;
            pts.push((g, m));
        }
    }
    let fits = kinds
        .iter()
        .zip(&points)
        .map(|(&k, pts)| fit_scaling(pts).map(|f| (k, f)).map_err(crate::Error::from))
        .collect::<Result<Vec<_>, _>>()?;

    ensure_dir(&cfg.output_dir)?;
    let mut files = Vec::new();
    if cfg.formats.csv {
        let mut text = csv_header("map,slope,intercept,r2");
        for (k, f) in &fits {
            writeln!(
                text,
                "{},{},{},{}",
                k.name(),
                f.slope,
                f.intercept,
                f.r_squared
            )
            .expect("write to string");
        }
        let path = cfg.output_dir.join("scaling.csv");
        write_file(&path, &text)?;
        files.push(path);

        let mut text = csv_header("map,gamma_dt,median_trae");
        for (k, pts) in kinds.iter().zip(&points) {
            for (g, m) in pts {
                writeln!(text, "{},{},{}", k.name(), g, m).expect("write to string");
            }
        }
        let path = cfg.output_dir.join("sweep_points.csv");
        write_file(&path, &text)?;
        files.push(path);
    }
    if cfg.formats.json {
        let path = cfg.output_dir.join("scaling.json");
        let body: Vec<_> = fits
            .iter()
            .map(|(k, f)| json!({ "map": k.name(), "fit": f }))
            .collect();
        let doc = json!({ "manifest": MANIFEST_FILE, "statistic": "median", "fits": body });
        write_file(
            &path,
            &(serde_json::to_string_pretty(&doc).expect("fits serialise") + "\n"),
        )?;
        files.push(path);
    }
    write_manifest(
        cfg,
        "sweep",
        json!({
            "grid_gamma_dt": sweep.grid,
            "gamma_dt_fine": sweep.gamma_dt_fine,
            "records_per_step": sweep.records,
            "statistic": "median single-bin trace distance",
            "aborted": aborted,
        }),
    )?;
    Ok(SweepReport {
        fits,
        aborted,
        files,
    })
}
