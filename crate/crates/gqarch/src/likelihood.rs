//! Gaussian QML objective with analytic gradients.
//!
//! The average negative quasi log-likelihood (constants dropped) is
//!
//!   L_n(theta) = (1/m) sum_{t in W} [ r_t^2 / sigma2_t(theta) + log sigma2_t(theta) ],
//!
//! where sigma2_t is rebuilt from the data through the volatility
//! recursion and W is a trailing window of the observations. Three
//! treatments of the unobserved past are supported:
//!
//! * finite-past: Y_t sums the observed lags r_1..r_{t-1} only and the
//!   recursion starts from sigma2_0 = 0;
//! * presample: the lag sums and the recursion also run through a
//!   pre-sample block, zeroed before its first point, mirroring how the
//!   simulator builds its burn-in;
//! * truncated(beta): finite-past values averaged over the last
//!   floor(n^beta) observations only, discarding the entries most
//!   distorted by the missing past.
//!
//! Gradients come from differentiating the recursion in place, one extra
//! sweep per coordinate, with the d-derivative of the lag sums obtained
//! from a second, log-weighted convolution.

use crate::conv::Convolver;
use crate::error::{Error, Result};
use crate::params::Theta;
use crate::simulator::SamplePath;
use rustfft::num_complex::Complex;

/// Variance floor applied inside the objective. omega = 0 is inside the
/// estimation box, so tiny variances must degrade gracefully instead of
/// erroring mid-optimization; activations are reported.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Treatment of the unobserved past.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PastMode {
    FinitePast,
    Presample,
    /// Averages only the last floor(n^beta) per-observation terms,
    /// 0 < beta <= 1. beta = 1 reproduces finite-past exactly.
    Truncated { beta: f64 },
}

impl PastMode {
    pub fn validate(&self) -> Result<()> {
        if let PastMode::Truncated { beta } = self {
            if !(beta.is_finite() && *beta > 0.0 && *beta <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "truncation exponent beta = {beta} must lie in (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Size of the likelihood window for n observations.
    pub fn window(&self, n: usize) -> Result<usize> {
        self.validate()?;
        Ok(match self {
            PastMode::FinitePast | PastMode::Presample => n,
            PastMode::Truncated { beta } => {
                let w = (n as f64).powf(*beta).floor() as usize;
                w.clamp(1, n)
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PastMode::FinitePast => "finite-past",
            PastMode::Presample => "presample",
            PastMode::Truncated { .. } => "truncated",
        }
    }
}

/// Conditional variance path and its parameter derivatives, t = 1..n.
#[derive(Debug, Clone)]
pub struct VolPath {
    pub sigma2: Vec<f64>,
    /// Rows d sigma2_t / d theta in the order (gamma, omega, a, d, c).
    pub grad: Option<Vec<[f64; 5]>>,
    /// Lag sums Y_t(d) seen by the recursion.
    pub y: Vec<f64>,
    /// d/dd of the lag sums, present when gradients were requested.
    pub dy: Option<Vec<f64>>,
}

/// Objective value at one parameter point.
#[derive(Debug, Clone)]
pub struct QmlValue {
    pub value: f64,
    pub gradient: Option<[f64; 5]>,
    /// Per-observation terms over the likelihood window; their mean is
    /// `value`.
    pub per_obs: Option<Vec<f64>>,
    /// True when the variance floor was hit inside the window.
    pub floored: bool,
}

/// Hyperbolic lag sums y[i] = sum_{j=1..i} j^(d-1) series[i-j] and, on
/// request, their d-derivatives (the same sums with weights multiplied by
/// log j). One FFT convolution pass each, exact to roundoff.
pub fn weighted_sums(
    series: &[f64],
    d: f64,
    with_log: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if !(d > 0.0 && d <= 0.5) {
        return Err(Error::InvalidParam(format!(
            "weight exponent d = {d} must lie in (0, 1/2]"
        )));
    }
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let conv = Convolver::new(series.len());
    let spec = conv.spectrum(series);
    let lnj: Vec<f64> = (0..series.len()).map(|j| (j as f64).ln()).collect();
    let y = conv.convolve(&kernel_spectrum(&conv, &lnj, d, false), &spec);
    let dy = if with_log {
        Some(conv.convolve(&kernel_spectrum(&conv, &lnj, d, true), &spec))
    } else {
        None
    };
    Ok((y, dy))
}

fn kernel_spectrum(conv: &Convolver, lnj: &[f64], d: f64, log_weight: bool) -> Vec<Complex<f64>> {
    let mut w = vec![0.0; lnj.len()];
    for j in 1..lnj.len() {
        let base = ((d - 1.0) * lnj[j]).exp();
        w[j] = if log_weight { base * lnj[j] } else { base };
    }
    conv.spectrum(&w)
}

/// Reusable likelihood evaluator for one (series, mode) pair.
///
/// Construction validates the combination and caches the series spectrum,
/// so that each parameter evaluation costs one kernel transform, one
/// inverse transform and one recursion sweep. Evaluations take &self and
/// may run concurrently.
pub struct QmlProblem {
    ext: Vec<f64>,
    /// Leading entries of `ext` that belong to the pre-sample block.
    skip: usize,
    n_obs: usize,
    window: usize,
    mode: PastMode,
    conv: Convolver,
    ext_spec: Vec<Complex<f64>>,
    lnj: Vec<f64>,
}

impl QmlProblem {
    pub fn new(series: &SamplePath, mode: PastMode) -> Result<Self> {
        mode.validate()?;
        let n_obs = series.observations.len();
        if n_obs < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 observations, got {n_obs}"
            )));
        }
        let mut ext = Vec::new();
        if matches!(mode, PastMode::Presample) {
            let pre = series
                .presample
                .as_ref()
                .filter(|p| !p.is_empty())
                .ok_or(Error::PresampleMissing)?;
            ext.extend_from_slice(pre);
        }
        let skip = ext.len();
        ext.extend_from_slice(&series.observations);
        if !ext.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "series contains non-finite values".into(),
            ));
        }
        let window = mode.window(n_obs)?;
        let conv = Convolver::new(ext.len());
        let ext_spec = conv.spectrum(&ext);
        let lnj = (0..ext.len()).map(|j| (j as f64).ln()).collect();
        Ok(QmlProblem {
            ext,
            skip,
            n_obs,
            window,
            mode,
            conv,
            ext_spec,
            lnj,
        })
    }

    pub fn n(&self) -> usize {
        self.n_obs
    }

    /// Number of observations averaged by the objective.
    pub fn effective_n(&self) -> usize {
        self.window
    }

    pub fn mode(&self) -> PastMode {
        self.mode
    }

    fn lag_sums(&self, d: f64, want_grad: bool) -> (Vec<f64>, Option<Vec<f64>>) {
        let y = self
            .conv
            .convolve(&kernel_spectrum(&self.conv, &self.lnj, d, false), &self.ext_spec);
        let dy = want_grad.then(|| {
            self.conv
                .convolve(&kernel_spectrum(&self.conv, &self.lnj, d, true), &self.ext_spec)
        });
        (y, dy)
    }

    /// Variance path (and derivatives) over t = 1..n.
    pub fn vol_path(&self, theta: &Theta, want_grad: bool) -> Result<VolPath> {
        theta.validate()?;
        let (y, dy) = self.lag_sums(theta.d, want_grad);
        let len = self.ext.len();
        let (gamma, omega, a, c) = (theta.gamma, theta.omega, theta.a, theta.c);
        let omega2 = omega * omega;

        let mut sigma2 = vec![0.0; len];
        let mut grad = want_grad.then(|| vec![[0.0; 5]; len]);
        let dy_ref = dy.as_deref().unwrap_or(&[]);
        let mut prev = 0.0;
        let mut prev_g = [0.0; 5];
        for s in 0..len {
            let q = a + c * y[s];
            let v = omega2 + q * q + gamma * prev;
            sigma2[s] = v;
            if let Some(g) = grad.as_mut() {
                let row = [
                    prev + gamma * prev_g[0],
                    2.0 * omega + gamma * prev_g[1],
                    2.0 * q + gamma * prev_g[2],
                    2.0 * c * q * dy_ref[s] + gamma * prev_g[3],
                    2.0 * q * y[s] + gamma * prev_g[4],
                ];
                g[s] = row;
                prev_g = row;
            }
            prev = v;
        }

        for (s, &v) in sigma2.iter().enumerate().skip(self.skip) {
            if v <= 0.0 {
                return Err(Error::NonpositiveVariance {
                    t: (s - self.skip + 1) as i64,
                    sigma2: v,
                });
            }
        }

        Ok(VolPath {
            sigma2: sigma2[self.skip..].to_vec(),
            grad: grad.map(|g| g[self.skip..].to_vec()),
            y: y[self.skip..].to_vec(),
            dy: dy.map(|v| v[self.skip..].to_vec()),
        })
    }

    /// Objective value, optionally with gradient and per-observation terms.
    pub fn eval(&self, theta: &Theta, want_grad: bool, want_per_obs: bool) -> Result<QmlValue> {
        let path = self.vol_path(theta, want_grad)?;
        let m = self.window;
        let start = self.n_obs - m;
        let mut acc = 0.0;
        let mut gacc = [0.0; 5];
        let mut per_obs = want_per_obs.then(|| Vec::with_capacity(m));
        let mut floored = false;

        for t in start..self.n_obs {
            let r = self.ext[self.skip + t];
            let raw = path.sigma2[t];
            let v = if raw < SIGMA2_FLOOR {
                floored = true;
                SIGMA2_FLOOR
            } else {
                raw
            };
            let term = r * r / v + v.ln();
            acc += term;
            if let Some(p) = per_obs.as_mut() {
                p.push(term);
            }
            if want_grad {
                let coef = (1.0 - r * r / v) / v;
                let row = &path.grad.as_ref().expect("requested")[t];
                for (g, dv) in gacc.iter_mut().zip(row) {
                    *g += coef * dv;
                }
            }
        }

        let scale = 1.0 / m as f64;
        Ok(QmlValue {
            value: acc * scale,
            gradient: want_grad.then(|| gacc.map(|g| g * scale)),
            per_obs,
            floored,
        })
    }
}

/// One-shot variance path; see [`QmlProblem::vol_path`].
pub fn vol_path(
    theta: &Theta,
    series: &SamplePath,
    mode: PastMode,
    want_grad: bool,
) -> Result<VolPath> {
    QmlProblem::new(series, mode)?.vol_path(theta, want_grad)
}

/// One-shot objective evaluation; see [`QmlProblem::eval`].
pub fn qml(
    theta: &Theta,
    series: &SamplePath,
    mode: PastMode,
    want_grad: bool,
) -> Result<QmlValue> {
    QmlProblem::new(series, mode)?.eval(theta, want_grad, true)
}
