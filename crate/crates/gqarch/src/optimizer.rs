//! Box-constrained QML optimization.
//!
//! The search runs in an unconstrained space: each coordinate passes
//! through a sigmoid onto (0, 1) and is then mapped affinely into its box
//! interval. The lag-weight coordinate is handled through
//! s = c^2 zeta(2(1-d)), whose interval depends on the current gamma, so
//! every point the search visits satisfies the stationarity part of the
//! box by construction and c comes out nonnegative (the model is
//! invariant under flipping the signs of a and c together, so nothing is
//! lost). The inner solver is Nelder-Mead; an optional projected-gradient
//! polish refines the winner using the analytic gradient.

use crate::error::{Error, Result};
use crate::likelihood::{PastMode, QmlProblem};
use crate::params::{project_into_box, zeta_real, ParamBox, Theta, COORD_NAMES};
use crate::rng::{key_rng, DOM_LHS, DOM_PERTURB};
use crate::simulator::SamplePath;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

const DIM: usize = 5;
type Z = [f64; DIM];

/// Objective value standing in for a failed evaluation; large enough that
/// the simplex retreats from the offending region.
const BAD_EVAL: f64 = 1e30;

/// Sigmoid outputs are kept this far from {0, 1} so the backtransformed
/// point never lands exactly on a box edge (where d = 1/2 would put the
/// zeta argument on its pole).
const U_MIN: f64 = 1e-12;

/// Relative distance to a box edge below which a coordinate is flagged.
const BOUNDARY_REL: f64 = 1e-3;

/// How initial points are chosen.
#[derive(Debug, Clone)]
pub enum StartStrategy {
    /// Centered Latin hypercube over the transformed unit cube; the
    /// default and fully determined by the seed.
    LatinHypercube { seed: u64 },
    /// Exactly these points (projected into the box), ignoring `starts`.
    UserSupplied(Vec<Theta>),
    /// The reference point plus `starts - 1` Gaussian perturbations of
    /// the given scale, applied in the transformed space.
    PerturbedReference {
        reference: Theta,
        seed: u64,
        scale: f64,
    },
}

#[derive(Debug, Clone)]
pub struct OptimOptions {
    pub bounds: ParamBox,
    pub starts: usize,
    pub max_iters: usize,
    /// Convergence tolerance on the simplex value spread, relative to
    /// 1 + |f|.
    pub f_tol: f64,
    /// Convergence tolerance on the simplex spread in the transformed
    /// coordinates.
    pub x_tol: f64,
    /// Run the projected-gradient polish on the multistart winner.
    pub use_gradient: bool,
    pub start_strategy: StartStrategy,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            bounds: ParamBox::default(),
            starts: 5,
            max_iters: 2000,
            f_tol: 1e-9,
            x_tol: 1e-7,
            use_gradient: false,
            start_strategy: StartStrategy::LatinHypercube { seed: 0 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub theta_hat: Theta,
    /// Objective value at `theta_hat`.
    pub objective: f64,
    pub mode: PastMode,
    /// True when the winning start met both tolerances within the
    /// iteration budget.
    pub converged: bool,
    /// Nelder-Mead iterations spent by the winning start.
    pub iterations: usize,
    pub starts_used: usize,
    /// Per-coordinate flags, set when the estimate sits within a 1e-3
    /// relative band of a box edge (for c, of its s-interval edge).
    pub at_boundary: [bool; 5],
    /// True when the variance floor was active at the optimum.
    pub floor_activated: bool,
    pub warnings: Vec<String>,
}

fn sigmoid(z: f64) -> f64 {
    let u = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    u.clamp(U_MIN, 1.0 - U_MIN)
}

fn logit(u: f64) -> f64 {
    let u = u.clamp(U_MIN, 1.0 - U_MIN);
    (u / (1.0 - u)).ln()
}

fn lerp((lo, hi): (f64, f64), u: f64) -> f64 {
    lo + u * (hi - lo)
}

fn unlerp((lo, hi): (f64, f64), x: f64) -> f64 {
    if hi - lo <= 0.0 {
        0.5
    } else {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

struct Transform<'a> {
    bounds: &'a ParamBox,
}

impl Transform<'_> {
    fn theta(&self, z: &Z) -> Theta {
        let u: [f64; DIM] = z.map(sigmoid);
        let gamma = lerp(self.bounds.gamma, u[0]);
        let omega = lerp(self.bounds.omega, u[1]);
        let a = lerp(self.bounds.a, u[2]);
        let d = lerp(self.bounds.d_interior(), u[3]);
        let s = lerp(self.bounds.s_bounds(gamma), u[4]);
        let zeta = zeta_real(2.0 * (1.0 - d)).expect("interior d keeps zeta off its pole");
        let c = (s.max(0.0) / zeta).sqrt();
        Theta { gamma, omega, a, d, c }
    }

    /// Inverse map for a point inside the box.
    fn z(&self, theta: &Theta) -> Z {
        let zeta = zeta_real(2.0 * (1.0 - theta.d)).expect("valid theta");
        let s = theta.c * theta.c * zeta;
        [
            logit(unlerp(self.bounds.gamma, theta.gamma)),
            logit(unlerp(self.bounds.omega, theta.omega)),
            logit(unlerp(self.bounds.a, theta.a)),
            logit(unlerp(self.bounds.d_interior(), theta.d)),
            logit(unlerp(self.bounds.s_bounds(theta.gamma), s)),
        ]
    }
}

fn validate_opts(opts: &OptimOptions) -> Result<()> {
    opts.bounds.validate()?;
    // The s-interval endpoints are maxima/minima of affine functions of
    // gamma, so lo - hi is convex and endpoint feasibility covers the
    // whole gamma range.
    for gamma in [opts.bounds.gamma.0, opts.bounds.gamma.1] {
        let (lo, hi) = opts.bounds.s_bounds(gamma);
        if lo > hi {
            return Err(Error::InfeasibleBox { gamma, lo, hi });
        }
    }
    let (dlo, dhi) = opts.bounds.d_interior();
    if dlo > dhi {
        return Err(Error::InvalidConfig(format!(
            "d box [{}, {}] collapses below the interior floor",
            opts.bounds.d.0, opts.bounds.d.1
        )));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be positive".into()));
    }
    if !(opts.f_tol.is_finite() && opts.f_tol > 0.0) || !(opts.x_tol.is_finite() && opts.x_tol > 0.0)
    {
        return Err(Error::InvalidConfig(format!(
            "tolerances must be positive and finite, got f_tol = {}, x_tol = {}",
            opts.f_tol, opts.x_tol
        )));
    }
    match &opts.start_strategy {
        StartStrategy::LatinHypercube { .. } => {
            if opts.starts == 0 {
                return Err(Error::InvalidConfig("starts must be positive".into()));
            }
        }
        StartStrategy::UserSupplied(list) => {
            if list.is_empty() {
                return Err(Error::InvalidConfig(
                    "user-supplied start list is empty".into(),
                ));
            }
        }
        StartStrategy::PerturbedReference { scale, .. } => {
            if opts.starts == 0 {
                return Err(Error::InvalidConfig("starts must be positive".into()));
            }
            if !(scale.is_finite() && *scale >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "perturbation scale {scale} must be finite and nonnegative"
                )));
            }
        }
    }
    Ok(())
}

fn lhs_starts(seed: u64, starts: usize) -> Vec<Z> {
    let perms: [Vec<usize>; DIM] = core::array::from_fn(|i| {
        let mut idx: Vec<usize> = (0..starts).collect();
        idx.shuffle(&mut key_rng(seed, i as u64, 0, DOM_LHS));
        idx
    });
    (0..starts)
        .map(|k| {
            let mut z = [0.0; DIM];
            for (i, p) in perms.iter().enumerate() {
                z[i] = logit((p[k] as f64 + 0.5) / starts as f64);
            }
            z
        })
        .collect()
}

fn build_starts(opts: &OptimOptions, tf: &Transform) -> Result<Vec<Z>> {
    match &opts.start_strategy {
        StartStrategy::LatinHypercube { seed } => Ok(lhs_starts(*seed, opts.starts)),
        StartStrategy::UserSupplied(list) => list
            .iter()
            .map(|t| Ok(tf.z(&project_into_box(t, tf.bounds)?)))
            .collect(),
        StartStrategy::PerturbedReference { reference, seed, scale } => {
            let zr = tf.z(&project_into_box(reference, tf.bounds)?);
            let mut out = vec![zr];
            for k in 1..opts.starts {
                let mut rng = key_rng(*seed, k as u64, 0, DOM_PERTURB);
                let mut z = zr;
                for zi in z.iter_mut() {
                    *zi += scale * rng.sample::<f64, _>(StandardNormal);
                }
                out.push(z);
            }
            Ok(out)
        }
    }
}

struct NmRun {
    z: Z,
    f: f64,
    iters: usize,
    converged: bool,
}

fn add(a: &Z, b: &Z, w: f64) -> Z {
    core::array::from_fn(|i| a[i] + w * b[i])
}

fn sub(a: &Z, b: &Z) -> Z {
    core::array::from_fn(|i| a[i] - b[i])
}

fn nelder_mead(obj: &dyn Fn(&Z) -> f64, z0: Z, opts: &OptimOptions) -> NmRun {
    const STEP: f64 = 0.5;
    let mut pts: Vec<(Z, f64)> = Vec::with_capacity(DIM + 1);
    pts.push((z0, obj(&z0)));
    for i in 0..DIM {
        let mut z = z0;
        z[i] += STEP;
        pts.push((z, obj(&z)));
    }

    let mut iters = 0;
    let mut converged = false;
    loop {
        pts.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("objective is never NaN"));
        let f_best = pts[0].1;
        let f_spread = pts[DIM].1 - f_best;
        let x_spread = pts[1..]
            .iter()
            .flat_map(|(z, _)| z.iter().zip(&pts[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= opts.f_tol * (1.0 + f_best.abs()) && x_spread <= opts.x_tol {
            converged = true;
            break;
        }
        if iters >= opts.max_iters {
            break;
        }
        iters += 1;

        let mut centroid = [0.0; DIM];
        for (z, _) in &pts[..DIM] {
            for (c, zi) in centroid.iter_mut().zip(z) {
                *c += zi / DIM as f64;
            }
        }
        let dir = sub(&centroid, &pts[DIM].0);

        let refl = add(&centroid, &dir, 1.0);
        let f_refl = obj(&refl);
        if f_refl < pts[0].1 {
            let expd = add(&centroid, &dir, 2.0);
            let f_expd = obj(&expd);
            pts[DIM] = if f_expd < f_refl { (expd, f_expd) } else { (refl, f_refl) };
        } else if f_refl < pts[DIM - 1].1 {
            pts[DIM] = (refl, f_refl);
        } else {
            let inside = f_refl >= pts[DIM].1;
            let con = add(&centroid, &dir, if inside { -0.5 } else { 0.5 });
            let f_con = obj(&con);
            if f_con < f_refl.min(pts[DIM].1) {
                pts[DIM] = (con, f_con);
            } else {
                let anchor = pts[0].0;
                for p in pts[1..].iter_mut() {
                    p.0 = core::array::from_fn(|i| anchor[i] + 0.5 * (p.0[i] - anchor[i]));
                    p.1 = obj(&p.0);
                }
            }
        }
    }
    NmRun { z: pts[0].0, f: pts[0].1, iters, converged }
}

fn polish(problem: &QmlProblem, opts: &OptimOptions, mut theta: Theta, mut f: f64) -> (Theta, f64) {
    for _ in 0..50 {
        let grad = match problem.eval(&theta, true, false) {
            Ok(q) => match q.gradient {
                Some(g) if g.iter().all(|v| v.is_finite()) => g,
                _ => break,
            },
            Err(_) => break,
        };
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            break;
        }
        let b = &opts.bounds;
        let zeta = zeta_real(2.0 * (1.0 - theta.d)).expect("valid theta");
        let (_, shi) = b.s_bounds(theta.gamma);
        let widths = [
            b.gamma.1 - b.gamma.0,
            b.omega.1 - b.omega.0,
            b.a.1 - b.a.0,
            b.d.1 - b.d.0,
            (shi.max(0.0) / zeta).sqrt(),
        ];
        let wnorm = widths.iter().map(|w| w * w).sum::<f64>().sqrt().max(1e-6);

        let f_before = f;
        let mut eta = 0.01 * wnorm / gnorm;
        let mut moved = false;
        for _ in 0..30 {
            let arr = theta.to_array();
            let raw = Theta {
                gamma: arr[0] - eta * grad[0],
                omega: arr[1] - eta * grad[1],
                a: arr[2] - eta * grad[2],
                d: arr[3] - eta * grad[3],
                c: arr[4] - eta * grad[4],
            };
            if let Ok(cand) = project_into_box(&raw, b) {
                if let Ok(q) = problem.eval(&cand, false, false) {
                    if q.value.is_finite() && q.value < f {
                        theta = cand;
                        f = q.value;
                        moved = true;
                        break;
                    }
                }
            }
            eta *= 0.5;
        }
        if !moved || f_before - f <= opts.f_tol * (1.0 + f.abs()) {
            break;
        }
    }
    (theta, f)
}

fn boundary_flags(theta: &Theta, bounds: &ParamBox) -> [bool; 5] {
    let near = |x: f64, (lo, hi): (f64, f64)| {
        let w = hi - lo;
        x - lo <= BOUNDARY_REL * w || hi - x <= BOUNDARY_REL * w
    };
    let zeta = zeta_real(2.0 * (1.0 - theta.d)).expect("valid theta");
    let s = theta.c * theta.c * zeta;
    [
        near(theta.gamma, bounds.gamma),
        near(theta.omega, bounds.omega),
        near(theta.a, bounds.a),
        near(theta.d, bounds.d),
        near(s, bounds.s_bounds(theta.gamma)),
    ]
}

/// Multistart QML fit of the model to a series.
///
/// Deterministic: the same series, mode and options reproduce the result
/// bit for bit. The returned point is canonical (c >= 0).
pub fn estimate(series: &SamplePath, mode: PastMode, opts: &OptimOptions) -> Result<EstimateResult> {
    validate_opts(opts)?;
    let problem = QmlProblem::new(series, mode)?;
    let tf = Transform { bounds: &opts.bounds };
    let starts = build_starts(opts, &tf)?;
    let starts_used = starts.len();

    let obj = |z: &Z| -> f64 {
        let theta = tf.theta(z);
        match problem.eval(&theta, false, false) {
            Ok(v) if v.value.is_finite() => v.value,
            _ => BAD_EVAL,
        }
    };

    let runs: Vec<NmRun> = starts.iter().map(|z0| nelder_mead(&obj, *z0, opts)).collect();
    let best_f = runs.iter().map(|r| r.f).fold(f64::INFINITY, f64::min);
    if best_f >= BAD_EVAL {
        return Err(Error::NoFeasibleStart);
    }

    // Starts whose minima agree within f_tol are the same optimum up to
    // solver noise; prefer the most interior point, then the
    // lexicographically smallest, so reruns are reproducible.
    let band = opts.f_tol * (1.0 + best_f.abs());
    let interior_dist = |z: &Z| -> f64 {
        z.iter().map(|&zi| (sigmoid(zi) - 0.5).powi(2)).sum::<f64>()
    };
    let winner = runs
        .iter()
        .filter(|r| r.f <= best_f + band)
        .min_by(|x, y| {
            let dx = interior_dist(&x.z);
            let dy = interior_dist(&y.z);
            dx.partial_cmp(&dy)
                .unwrap()
                .then_with(|| {
                    let tx = tf.theta(&x.z).to_array();
                    let ty = tf.theta(&y.z).to_array();
                    tx.partial_cmp(&ty).unwrap()
                })
        })
        .expect("at least one run survives the band filter");

    let mut theta_hat = tf.theta(&winner.z);
    if opts.use_gradient {
        theta_hat = polish(&problem, opts, theta_hat, winner.f).0;
    }
    theta_hat = theta_hat.canonicalized();

    // The canonical sign flip leaves the objective unchanged exactly;
    // re-evaluating here also recovers the floor indicator.
    let fin = problem.eval(&theta_hat, false, false)?;
    let objective = fin.value;

    let at_boundary = boundary_flags(&theta_hat, &opts.bounds);
    let mut warnings = Vec::new();
    if !winner.converged {
        warnings.push(format!(
            "stopped after {} iterations without meeting tolerances",
            winner.iters
        ));
    }
    if fin.floored {
        warnings.push("variance floor active at the optimum".into());
    }
    // When the fitted lag channel is a token contribution (bottom few
    // percent of its allowed range), d rides a near-flat ridge. That is a
    // property of the region, not of exact edge contact, so the threshold
    // here is looser than the boundary flags.
    let zeta = zeta_real(2.0 * (1.0 - theta_hat.d)).expect("valid theta");
    let s_hat = theta_hat.c * theta_hat.c * zeta;
    let (slo, shi) = opts.bounds.s_bounds(theta_hat.gamma);
    if s_hat - slo <= 0.05 * (shi - slo) {
        warnings.push(
            "c is near its smallest allowed value; d is weakly identified when the lag sums barely enter"
                .into(),
        );
    }
    for (i, flag) in at_boundary.iter().enumerate() {
        if *flag && i != 4 {
            warnings.push(format!("{} sits on the box boundary", COORD_NAMES[i]));
        }
    }

    Ok(EstimateResult {
        theta_hat,
        objective,
        mode,
        converged: winner.converged,
        iterations: winner.iters,
        starts_used,
        at_boundary,
        floor_activated: fin.floored,
        warnings,
    })
}

/// Objective values along one coordinate of `base`, others held fixed.
/// Points where the model or the objective cannot be evaluated come back
/// as NaN. Coordinates are named "gamma", "omega", "a", "d", "c".
pub fn profile_objective(
    series: &SamplePath,
    mode: PastMode,
    base: &Theta,
    coord: &str,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let idx = COORD_NAMES
        .iter()
        .position(|n| *n == coord)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown coordinate {coord:?}, expected one of {COORD_NAMES:?}"
            ))
        })?;
    base.validate()?;
    if grid.is_empty() {
        return Err(Error::EmptyWindow("profile grid".into()));
    }
    let problem = QmlProblem::new(series, mode)?;
    Ok(grid
        .iter()
        .map(|&v| {
            let mut arr = base.to_array();
            arr[idx] = v;
            match Theta::from_array(arr) {
                Ok(t) => match problem.eval(&t, false, false) {
                    Ok(q) if q.value.is_finite() => q.value,
                    _ => f64::NAN,
                },
                Err(_) => f64::NAN,
            }
        })
        .collect())
}
