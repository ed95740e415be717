//! End-to-end runs: local problems, coarse-space sweeps, the property suite
//! and the CSV/JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::coefficient::Coefficient;
use crate::config::RunConfig;
use crate::decomposition::{Decomposition, ElementSet};
use crate::error::{Error, Result};
use crate::forms::Assembler;
use crate::global::{error_report, MsGfem};
use crate::local::{CoarseRule, LocalSpectralData};
use crate::mesh::TriMesh;
use crate::verification::{decay_fit, decay_fit_at, fine_solve, run_property_suite, PropertyReport, SuiteInput};

pub const EIGENVALUES_CSV: &str = "eigenvalues.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const CHECKS_JSON: &str = "checks.json";
pub const ERRORS_HEADER: &str =
    "m,overlap,oversampling,n_j,gamma0,contrast,n_total,relBplusErr,relL2Err,maxSqrtLambdaNext,fitSlope,fitR2";

/// One coarse solve of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// The fixed per-subdomain count, or `None` for a threshold rule.
    pub n_j: Option<usize>,
    pub n_total: usize,
    pub rel_bplus: f64,
    pub rel_l2: f64,
    pub max_sqrt_lambda_next: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Human-readable summary.
    pub report: String,
    pub rows: Vec<SweepRow>,
    pub checks: Option<PropertyReport>,
    pub files: Vec<PathBuf>,
    pub success: bool,
}

/// Fit of `ln sqrt(lambda_n)` against `n^(1/2)` over the first 20 finite modes.
pub fn eigenvalue_decay(local: &LocalSpectralData) -> Result<crate::verification::DecayFit> {
    let sqrt: Vec<f64> = local.eigenvalues().iter().filter(|l| l.is_finite()).take(20).map(|l| l.sqrt()).collect();
    decay_fit(&sqrt, 0.5)
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.17e}")
    }
}

fn write(dir: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

/// Runs `config`; `checks_only` skips the coarse solves and writes only the check summary.
pub fn run(config: &RunConfig, checks_only: bool) -> Result<RunOutcome> {
    let start = Instant::now();
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut report = String::new();
    let mut success = true;

    let mesh = TriMesh::structured(config.mesh_n)?;
    let coefficient = Coefficient::generate(&config.coefficient, &mesh)?;
    let assembler = Assembler::new(&mesh, &coefficient, config.gamma0())?;
    let decomposition = Decomposition::build(&mesh, config.grid_m, config.overlap, config.oversampling)?;
    writeln!(
        report,
        "mesh {0}x{0} ({1} dofs), {2}x{2} subdomains, overlap {3}, oversampling {4}, gamma0^2 = {5}, contrast {6:e}",
        config.mesh_n,
        3 * mesh.num_elements(),
        config.grid_m,
        config.overlap,
        config.oversampling,
        config.gamma0_sq,
        coefficient.contrast()
    )
    .ok();

    let mut rows = Vec::new();
    let mut solver = None;
    if !checks_only {
        let fine = fine_solve(&assembler, config.source);
        let ms = MsGfem::setup(assembler, &decomposition, config.source);
        match (fine, ms) {
            (Ok(fine), Ok(ms)) => {
                writeln!(report, "local problems solved in {:.2}s", start.elapsed().as_secs_f64()).ok();
                let eigen_csv: String = std::iter::once("j,k,lambda,is_infinite\n".to_string())
                    .chain(ms.locals().iter().map(|l| l.eigenvalue_rows()))
                    .collect();
                write(dir, EIGENVALUES_CSV, &eigen_csv, &mut files)?;
                for local in ms.locals() {
                    let fit = eigenvalue_decay(local)
                        .map(|f| format!("slope {:.4}, R^2 {:.4}", f.slope, f.r2))
                        .unwrap_or_else(|e| e.to_string());
                    writeln!(
                        report,
                        "subdomain {:2}: {} harmonic modes, {} kernel, sqrt(lambda) decay {}",
                        local.index,
                        local.num_modes(),
                        local.eigen.kernel_dim,
                        fit
                    )
                    .ok();
                }

                let all = ElementSet::all(&mesh);
                let positive = assembler.positive(&all)?.matrix;
                let mass = assembler.mass(&all)?.matrix;
                let rules: Vec<(Option<usize>, CoarseRule)> = if config.sweep_nj.is_empty() {
                    let n = match config.coarse {
                        CoarseRule::Fixed(n) => Some(n),
                        CoarseRule::Threshold(_) => None,
                    };
                    vec![(n, config.coarse)]
                } else {
                    config.sweep_nj.iter().map(|&n| (Some(n), CoarseRule::Fixed(n))).collect()
                };
                for (n_j, rule) in rules {
                    let sol = ms.solve(&ms.counts(rule)?)?;
                    let err = error_report(&positive, &mass, &sol.u_g, &fine.u)?;
                    if !sol.dropped.is_empty() {
                        writeln!(report, "n_j {n_j:?}: dropped dependent coarse columns {:?}", sol.dropped).ok();
                    }
                    rows.push(SweepRow {
                        n_j,
                        n_total: sol.n_total,
                        rel_bplus: err.bplus_rel,
                        rel_l2: err.l2_rel,
                        max_sqrt_lambda_next: sol.max_sqrt_lambda_next,
                    });
                }
                write(dir, ERRORS_CSV, &errors_csv(config, coefficient.contrast(), &rows), &mut files)?;
                for r in &rows {
                    writeln!(
                        report,
                        "n_j {:>4}: n = {:4}, rel B+ error {:.3e}, rel L2 error {:.3e}, max sqrt(lambda_next) {:.3e}",
                        r.n_j.map_or("rule".to_string(), |n| n.to_string()),
                        r.n_total,
                        r.rel_bplus,
                        r.rel_l2,
                        r.max_sqrt_lambda_next
                    )
                    .ok();
                }
                solver = Some(ms);
            }
            (fine, ms) => {
                success = false;
                for e in [fine.err(), ms.err()].into_iter().flatten() {
                    writeln!(report, "solve failed: {e}").ok();
                }
            }
        }
    }

    let mut checks = None;
    if config.checks || checks_only {
        let input = SuiteInput { assembler, decomposition: &decomposition, seed: config.seed, samples: config.samples };
        let suite = run_property_suite(&input, solver.as_ref().map(|s| s.locals()));
        write(dir, CHECKS_JSON, &suite.to_json()?, &mut files)?;
        report.push_str(&suite.to_text());
        if let Some(first) = suite.first_failure() {
            success = false;
            writeln!(report, "first failing check: {}.{}", first.module, first.name).ok();
        }
        checks = Some(suite);
    }
    writeln!(report, "total time {:.2}s", start.elapsed().as_secs_f64()).ok();
    Ok(RunOutcome { report, rows, checks, files, success })
}

/// Error-sweep CSV; the decay fit over the whole sweep is repeated on every row.
pub fn errors_csv(config: &RunConfig, contrast: f64, rows: &[SweepRow]) -> String {
    let ns: Vec<f64> = rows.iter().filter_map(|r| r.n_j.map(|n| n as f64)).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.rel_bplus).collect();
    let (slope, r2) = if ns.len() == rows.len() {
        decay_fit_at(&ns, &errs, 0.5).map_or((f64::NAN, f64::NAN), |f| (f.slope, f.r2))
    } else {
        (f64::NAN, f64::NAN)
    };
    let mut out = String::from(ERRORS_HEADER);
    out.push('\n');
    for r in rows {
        let n_j = match (r.n_j, config.coarse) {
            (Some(n), _) => n.to_string(),
            (None, CoarseRule::Threshold(t)) => format!("threshold {t}"),
            (None, CoarseRule::Fixed(n)) => n.to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            config.grid_m,
            config.overlap,
            config.oversampling,
            n_j,
            fmt(config.gamma0()),
            fmt(contrast),
            r.n_total,
            fmt(r.rel_bplus),
            fmt(r.rel_l2),
            fmt(r.max_sqrt_lambda_next),
            fmt(slope),
            fmt(r2)
        )
        .ok();
    }
    out
}

/// Errors that stem from the configuration rather than from the numerics.
pub fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. }
            | Error::InvalidMeshSize(_)
            | Error::InvalidCoefficient(_)
            | Error::InvalidDecomposition(_)
            | Error::InvalidParameter(_)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> RunConfig {
        RunConfig {
            mesh_n: 12,
            grid_m: 3,
            overlap: 2,
            oversampling: 1,
            sweep_nj: vec![1, 2, 3],
            output_dir: dir.to_path_buf(),
            samples: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn writes_three_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&small(tmp.path()), false).unwrap();
        assert!(out.success, "{}", out.report);
        for name in [EIGENVALUES_CSV, ERRORS_CSV, CHECKS_JSON] {
            assert!(tmp.path().join(name).exists(), "{name}");
        }
        let csv = fs::read_to_string(tmp.path().join(ERRORS_CSV)).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().ends_with("nan,nan"));
    }

    #[test]
    fn sweep_of_eleven_gives_eleven_rows_and_a_fit() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig { sweep_nj: (2..=12).collect(), checks: false, ..small(tmp.path()) };
        let out = run(&cfg, false).unwrap();
        assert_eq!(out.rows.len(), 11);
        let csv = fs::read_to_string(tmp.path().join(ERRORS_CSV)).unwrap();
        assert_eq!(csv.lines().count(), 12);
        assert!(!csv.contains("nan"));
    }

    #[test]
    fn small_penalty_fails_without_aborting() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig { gamma0_sq: 1e-4, ..small(tmp.path()) };
        let out = run(&cfg, false).unwrap();
        assert!(!out.success);
        assert!(out.report.contains("first failing check: dg_forms.coercivity"), "{}", out.report);
        assert!(tmp.path().join(CHECKS_JSON).exists());
    }

    #[test]
    fn checks_only_writes_only_the_summary() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&small(tmp.path()), true).unwrap();
        assert!(out.success, "{}", out.report);
        assert_eq!(out.files, vec![tmp.path().join(CHECKS_JSON)]);
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = RunConfig { checks: false, ..small(a.path()) };
        run(&cfg, false).unwrap();
        run(&RunConfig { output_dir: b.path().to_path_buf(), ..cfg }, false).unwrap();
        for name in [EIGENVALUES_CSV, ERRORS_CSV] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
    }
}
