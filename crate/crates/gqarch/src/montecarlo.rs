//! Replication experiments and long-memory diagnostics.
//!
//! `run_mc` simulates a grid of (theta0, n) design points, refits every
//! path, and reports per-coordinate bias and RMSE. Replication k of cell
//! j draws its innovations from stream (j << 32) | k, so results do not
//! depend on how the work is scheduled; with the seed fixed, the report
//! is reproducible bit for bit for any worker count.

use crate::error::{Error, Result};
use crate::likelihood::PastMode;
use crate::optimizer::{estimate, EstimateResult, OptimOptions};
use crate::params::{check_feasibility, Theta};
use crate::simulator::{simulate_stream, Innovation, SamplePath, SimConfig};
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct McDesign {
    pub theta_grid: Vec<Theta>,
    pub n_list: Vec<usize>,
    /// Replications per (theta0, n) cell.
    pub reps: usize,
    pub mode: PastMode,
    pub innovation: Innovation,
    pub seed: u64,
    pub opts: OptimOptions,
}

#[derive(Debug, Clone)]
pub struct McCell {
    /// Design point in canonical form (c >= 0).
    pub theta0: Theta,
    pub n: usize,
    pub reps_completed: usize,
    /// Replications whose simulation or fit failed; excluded from the
    /// averages.
    pub failures: usize,
    /// sqrt(mean (theta_hat_i - theta0_i)^2) per coordinate; NaN when no
    /// replication completed.
    pub rmse: [f64; 5],
    pub bias: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct McReport {
    /// Cells in design order: theta_grid outer, n_list inner.
    pub cells: Vec<McCell>,
    pub wall_time_s: f64,
}

fn validate_design(design: &McDesign) -> Result<()> {
    if design.theta_grid.is_empty() {
        return Err(Error::InvalidConfig("empty parameter grid".into()));
    }
    if design.n_list.is_empty() {
        return Err(Error::InvalidConfig("empty sample-size list".into()));
    }
    if let Some(&n) = design.n_list.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidConfig(format!(
            "sample size {n} is too small to fit"
        )));
    }
    if design.reps == 0 {
        return Err(Error::InvalidConfig("reps must be positive".into()));
    }
    design.mode.validate()?;
    for theta0 in &design.theta_grid {
        theta0.validate()?;
        let feas = check_feasibility(theta0);
        if !feas.l2_ok {
            return Err(Error::Infeasible { b2: feas.b2, limit: 1.0 - theta0.gamma });
        }
    }
    Ok(())
}

/// Full study with the built-in estimator. `workers` bounds the thread
/// count; `None` uses the rayon default.
pub fn run_mc(design: &McDesign, workers: Option<usize>) -> Result<McReport> {
    run_mc_with(design, workers, |path, mode, opts| estimate(path, mode, opts))
}

/// Same study with the estimator supplied by the caller. Exists so the
/// aggregation can be exercised against estimators with known error
/// distributions; `run_mc` is this with the real fit plugged in.
pub fn run_mc_with<F>(design: &McDesign, workers: Option<usize>, estimator: F) -> Result<McReport>
where
    F: Fn(&SamplePath, PastMode, &OptimOptions) -> Result<EstimateResult> + Sync,
{
    validate_design(design)?;
    if workers == Some(0) {
        return Err(Error::InvalidConfig("worker count must be positive".into()));
    }
    let start = Instant::now();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?;

    struct CellSpec {
        theta0: Theta,
        n: usize,
        cell_idx: usize,
    }
    let mut specs = Vec::new();
    for (ti, theta0) in design.theta_grid.iter().enumerate() {
        for (ni, &n) in design.n_list.iter().enumerate() {
            specs.push(CellSpec {
                theta0: theta0.canonicalized(),
                n,
                cell_idx: ti * design.n_list.len() + ni,
            });
        }
    }

    let tasks: Vec<(usize, u64)> = specs
        .iter()
        .flat_map(|spec| (0..design.reps as u64).map(move |k| (spec.cell_idx, k)))
        .collect();

    let results: Vec<Option<[f64; 5]>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cell_idx, k)| {
                let spec = &specs[cell_idx];
                let cfg = SimConfig {
                    n: spec.n,
                    seed: design.seed,
                    innovation: design.innovation,
                    keep_presample: matches!(design.mode, PastMode::Presample),
                    force: false,
                };
                let stream = ((cell_idx as u64) << 32) | k;
                let path = simulate_stream(&specs[cell_idx].theta0, &cfg, stream).ok()?;
                let fit = estimator(&path, design.mode, &design.opts).ok()?;
                Some(fit.theta_hat.to_array())
            })
            .collect()
    });

    let mut cells = Vec::with_capacity(specs.len());
    for spec in &specs {
        let truth = spec.theta0.to_array();
        let mut sum = [0.0; 5];
        let mut sumsq = [0.0; 5];
        let mut completed = 0usize;
        for (t, res) in tasks.iter().zip(&results) {
            if t.0 != spec.cell_idx {
                continue;
            }
            if let Some(th) = res {
                completed += 1;
                for i in 0..5 {
                    let e = th[i] - truth[i];
                    sum[i] += e;
                    sumsq[i] += e * e;
                }
            }
        }
        let (rmse, bias) = if completed > 0 {
            let m = completed as f64;
            (
                core::array::from_fn(|i| (sumsq[i] / m).sqrt()),
                core::array::from_fn(|i| sum[i] / m),
            )
        } else {
            ([f64::NAN; 5], [f64::NAN; 5])
        };
        cells.push(McCell {
            theta0: spec.theta0,
            n: spec.n,
            reps_completed: completed,
            failures: design.reps - completed,
            rmse,
            bias,
        });
    }

    Ok(McReport {
        cells,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Sample autocovariances of the squared series at lags 0..=max_lag
/// (entry index = lag, entry 0 = variance of the squares), with the usual
/// divisor-n, mean-centered estimator. Covariances, not correlations: the
/// hyperbolic-decay statements this feeds are about covariances, and the
/// normalization would only shift the log-log intercept. Requires
/// max_lag < n/4 so the highest lag still averages a nontrivial number of
/// products.
pub fn acf_squares(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n == 0 {
        return Err(Error::EmptySeries);
    }
    if max_lag == 0 || 4 * max_lag >= n {
        return Err(Error::InvalidConfig(format!(
            "max_lag = {max_lag} must satisfy 1 <= max_lag < n/4 = {}",
            n as f64 / 4.0
        )));
    }
    let sq: Vec<f64> = series.iter().map(|r| r * r).collect();
    let mean = sq.iter().sum::<f64>() / n as f64;
    Ok((0..=max_lag)
        .map(|k| (k..n).map(|t| (sq[t] - mean) * (sq[t - k] - mean)).sum::<f64>() / n as f64)
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct MemorySlope {
    /// OLS slope of log autocovariance against log lag.
    pub slope: f64,
    pub intercept: f64,
    /// Memory parameter implied by cov(r2_0, r2_k) ~ C k^(2d-1).
    pub d_implied: f64,
    /// Number of lags in the fit.
    pub lags: usize,
}

/// Log-log regression of autocovariance on lag over a table indexed by lag
/// (as produced by [`acf_squares`]), fitting lags lag_lo..=acf.len()-1.
/// Every fitted entry must be positive; hyperbolic decay keeps them so in
/// the range where the asymptotics bite, and a nonpositive entry is
/// reported with its lag rather than silently dropped.
pub fn memory_slope_from_acf(acf: &[f64], lag_lo: usize) -> Result<MemorySlope> {
    if lag_lo == 0 {
        return Err(Error::InvalidConfig(
            "lag 0 is the variance; the fit starts at lag_lo >= 1".into(),
        ));
    }
    if acf.len() < lag_lo + 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least two lags from lag {lag_lo} on, table covers {}",
            acf.len().saturating_sub(1)
        )));
    }
    let fitted = &acf[lag_lo..];
    for (i, &v) in fitted.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonpositiveAcf { lag: lag_lo + i, value: v });
        }
    }
    let m = fitted.len() as f64;
    let xs = |i: usize| ((lag_lo + i) as f64).ln();
    let xbar = (0..fitted.len()).map(xs).sum::<f64>() / m;
    let ybar = fitted.iter().map(|v| v.ln()).sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &v) in fitted.iter().enumerate() {
        let dx = xs(i) - xbar;
        sxx += dx * dx;
        sxy += dx * (v.ln() - ybar);
    }
    let slope = sxy / sxx;
    Ok(MemorySlope {
        slope,
        intercept: ybar - slope * xbar,
        d_implied: 0.5 * (slope + 1.0),
        lags: fitted.len(),
    })
}

/// Hyperbolic-decay diagnostic straight from a series: autocovariances of
/// the squares out to lag_hi, slope fitted over lags lag_lo..=lag_hi.
/// Lag 1 carries most of the short-memory transient, so the fit may not
/// start below lag 2.
pub fn memory_slope(series: &[f64], lag_lo: usize, lag_hi: usize) -> Result<MemorySlope> {
    if !(2 <= lag_lo && lag_lo < lag_hi) {
        return Err(Error::InvalidConfig(format!(
            "need 2 <= lag_lo < lag_hi, got lag_lo = {lag_lo}, lag_hi = {lag_hi}"
        )));
    }
    memory_slope_from_acf(&acf_squares(series, lag_hi)?, lag_lo)
}
