//! Parameter vector, moment feasibility and the estimation box.
//!
//! Second-moment stationarity of the model is governed by
//! B2 = c^2 * zeta(2(1-d)), the squared L2 norm of the lag weights
//! c * j^(d-1). The returns have finite variance when B2 < 1 - gamma;
//! a fourth-moment analogue K4 * mu4 * B2^2 < 1 - gamma uses a universal
//! Rosenthal-type constant and is reported but deliberately not enforced,
//! since it is far from sharp for realistic designs.

use crate::error::{Error, Result};

/// Coordinate names in the canonical internal order (gamma, omega, a, d, c).
pub const COORD_NAMES: [&str; 5] = ["gamma", "omega", "a", "d", "c"];

/// Largest admissible memory exponent. Values within 1e-6 of 1/2 are
/// rejected so that zeta(2(1-d)) stays inside its numerical domain.
pub const D_MAX: f64 = 0.5 - 1e-6;

/// Fourth moment of a standard Gaussian innovation.
pub const MU4_GAUSSIAN: f64 = 3.0;

/// Conservative universal bound for the L4 Rosenthal constant, 32.207^4.
pub const K4_ROSENTHAL: f64 = 1_075_972.305_419_140_8;

/// Model parameters (gamma, omega, a, d, c).
///
/// Invariants: all entries finite, gamma in [0, 1), omega >= 0,
/// d in (0, 1/2). The pair (a, c) and (-a, -c) generate the same returns
/// distribution; the canonical representative has c >= 0, see
/// [`Theta::canonicalized`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub gamma: f64,
    pub omega: f64,
    pub a: f64,
    pub d: f64,
    pub c: f64,
}

impl Theta {
    pub fn new(gamma: f64, omega: f64, a: f64, d: f64, c: f64) -> Result<Self> {
        let theta = Theta { gamma, omega, a, d, c };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.to_array();
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite entry in {self}")));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParam(format!(
                "gamma = {} must lie in [0, 1)",
                self.gamma
            )));
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidParam(format!(
                "omega = {} must be nonnegative",
                self.omega
            )));
        }
        if !(self.d > 0.0 && self.d <= D_MAX) {
            return Err(Error::InvalidParam(format!(
                "d = {} must lie in (0, 1/2)",
                self.d
            )));
        }
        Ok(())
    }

    /// Flips the sign of (a, c) if needed so that c >= 0. The likelihood
    /// is invariant under this flip.
    pub fn canonicalized(mut self) -> Self {
        if self.c < 0.0 {
            self.a = -self.a;
            self.c = -self.c;
        }
        self
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.gamma, self.omega, self.a, self.d, self.c]
    }

    pub fn from_array(v: [f64; 5]) -> Result<Self> {
        Theta::new(v[0], v[1], v[2], v[3], v[4])
    }
}

impl std::fmt::Display for Theta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(gamma={}, omega={}, a={}, d={}, c={})",
            self.gamma, self.omega, self.a, self.d, self.c
        )
    }
}

/// Riemann zeta on the real axis, s > 1 + 1e-6.
///
/// Direct summation of the first 1e4 terms (smallest first) plus the
/// Euler-Maclaurin tail with Bernoulli corrections up to B8. The absolute
/// error is below 1e-10 over the whole admissible range; near the pole the
/// result is accurate for the exact binary value of s.
pub fn zeta_real(s: f64) -> Result<f64> {
    if !(s > 1.0 + 1e-6) || !s.is_finite() {
        return Err(Error::ZetaDomain { s });
    }
    const N: usize = 10_000;
    let n = N as f64;
    let mut acc = 0.0;
    for j in (1..=N).rev() {
        acc += (j as f64).powf(-s);
    }
    // Tail sum_{j>N} j^-s by Euler-Maclaurin; the B10 remainder is ~1e-40.
    let mut tail = n.powf(1.0 - s) / (s - 1.0) - 0.5 * n.powf(-s);
    tail += s / 12.0 * n.powf(-s - 1.0);
    tail -= s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0);
    tail += s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30_240.0 * n.powf(-s - 5.0);
    tail -= s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * (s + 5.0) * (s + 6.0) / 1_209_600.0
        * n.powf(-s - 7.0);
    Ok(acc + tail)
}

/// Squared L2 norm of the lag weight sequence, B2 = c^2 * zeta(2(1-d)).
///
/// Panics if theta violates its type invariants (d outside (0, 1/2)).
pub fn b2_of(theta: &Theta) -> f64 {
    let s = 2.0 * (1.0 - theta.d);
    theta.c * theta.c * zeta_real(s).expect("d in (0, 1/2) keeps 2(1-d) in the zeta domain")
}

/// Moment feasibility of a parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub b2: f64,
    /// B2 < 1 - gamma, necessary for finite variance. Estimation and
    /// simulation are gated on this.
    pub l2_ok: bool,
    /// K4 * mu4 * B2^2 < 1 - gamma, a sufficient condition for finite
    /// fourth moments. Conservative, reported only.
    pub l4_ok: bool,
    pub slack_l2: f64,
    pub slack_l4: f64,
}

/// Feasibility with default moment constants (Gaussian mu4, Rosenthal K4).
pub fn check_feasibility(theta: &Theta) -> FeasibilityReport {
    check_feasibility_with(theta, MU4_GAUSSIAN, K4_ROSENTHAL)
}

pub fn check_feasibility_with(theta: &Theta, mu4: f64, k4: f64) -> FeasibilityReport {
    let b2 = b2_of(theta);
    let slack_l2 = (1.0 - theta.gamma) - b2;
    let slack_l4 = (1.0 - theta.gamma) - k4 * mu4 * b2 * b2;
    FeasibilityReport {
        b2,
        l2_ok: slack_l2 > 0.0,
        l4_ok: slack_l4 > 0.0,
        slack_l2,
        slack_l4,
    }
}

/// Estimation box.
///
/// gamma, omega, a and d are constrained to intervals; c is constrained
/// through s = c^2 * zeta(2(1-d)), which must lie in the gamma-dependent
/// interval
///
///   max(c_lo_level - gamma, gamma * c_lo_ratio)
///     <= s <= min(c_hi_level - gamma, gamma * c_hi_ratio).
///
/// The default box is gamma in [0.001, 0.9], omega in [0, 2], a in [-2, 2],
/// d in [0, 1/2] and 0.05 - gamma v gamma/999 <= s <= 0.99 - gamma ^ 99 gamma.
/// The upper s bound keeps every interior point L2 feasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox {
    pub gamma: (f64, f64),
    pub omega: (f64, f64),
    pub a: (f64, f64),
    pub d: (f64, f64),
    pub c_lo_level: f64,
    pub c_lo_ratio: f64,
    pub c_hi_level: f64,
    pub c_hi_ratio: f64,
}

impl Default for ParamBox {
    fn default() -> Self {
        ParamBox {
            gamma: (0.001, 0.9),
            omega: (0.0, 2.0),
            a: (-2.0, 2.0),
            d: (0.0, 0.5),
            c_lo_level: 0.05,
            c_lo_ratio: 1.0 / 999.0,
            c_hi_level: 0.99,
            c_hi_ratio: 99.0,
        }
    }
}

/// Interior floor for d when the box allows 0; keeps theta valid.
pub(crate) const D_INTERIOR_LO: f64 = 1e-8;

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("gamma", self.gamma),
            ("omega", self.omega),
            ("a", self.a),
            ("d", self.d),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "box interval for {name} is empty or non-finite: [{lo}, {hi}]"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.gamma.0) || !(0.0..1.0).contains(&self.gamma.1) {
            return Err(Error::InvalidConfig(format!(
                "gamma box [{}, {}] must sit inside [0, 1)",
                self.gamma.0, self.gamma.1
            )));
        }
        if self.omega.0 < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "omega box lower bound {} must be nonnegative",
                self.omega.0
            )));
        }
        if self.d.0 < 0.0 || self.d.1 > 0.5 {
            return Err(Error::InvalidConfig(format!(
                "d box [{}, {}] must sit inside [0, 1/2]",
                self.d.0, self.d.1
            )));
        }
        Ok(())
    }

    /// Bounds for s = c^2 * zeta(2(1-d)) at a given gamma.
    pub fn s_bounds(&self, gamma: f64) -> (f64, f64) {
        let lo = (self.c_lo_level - gamma).max(gamma * self.c_lo_ratio);
        let hi = (self.c_hi_level - gamma).min(gamma * self.c_hi_ratio);
        (lo, hi)
    }

    /// Effective d interval after shaving the degenerate endpoints.
    pub(crate) fn d_interior(&self) -> (f64, f64) {
        (self.d.0.max(D_INTERIOR_LO), self.d.1.min(D_MAX))
    }

    /// True when theta satisfies every box constraint up to slack 1e-9.
    pub fn contains(&self, theta: &Theta) -> bool {
        const TOL: f64 = 1e-9;
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo - TOL && x <= hi + TOL;
        if !(within(theta.gamma, self.gamma)
            && within(theta.omega, self.omega)
            && within(theta.a, self.a)
            && within(theta.d, self.d))
        {
            return false;
        }
        let (lo, hi) = self.s_bounds(theta.gamma);
        let s = b2_of(theta);
        s >= lo * (1.0 - 1e-9) - TOL && s <= hi * (1.0 + 1e-9) + TOL
    }

    /// Midpoint of the box, used to break ties between equal minima.
    pub fn center(&self) -> Theta {
        let gamma = 0.5 * (self.gamma.0 + self.gamma.1);
        let omega = 0.5 * (self.omega.0 + self.omega.1);
        let a = 0.5 * (self.a.0 + self.a.1);
        let (dlo, dhi) = self.d_interior();
        let d = 0.5 * (dlo + dhi);
        let (slo, shi) = self.s_bounds(gamma);
        let s = 0.5 * (slo + shi);
        let zeta = zeta_real(2.0 * (1.0 - d)).expect("interior d");
        let c = (s.max(0.0) / zeta).sqrt();
        Theta { gamma, omega, a, d, c }
    }
}

/// Euclidean projection onto the box, coordinate-wise for (gamma, omega,
/// a, d); c is then rescaled (sign preserved) so that s = c^2 zeta(2(1-d))
/// lands inside its interval at the clipped gamma and d.
///
/// Rescaling fires only when s misses the interval by more than a 1e-12
/// relative slack, which makes the projection idempotent in floating point.
pub fn project_into_box(theta: &Theta, bounds: &ParamBox) -> Result<Theta> {
    bounds.validate()?;
    if !theta.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParam(format!("non-finite entry in {theta}")));
    }
    let gamma = theta.gamma.clamp(bounds.gamma.0, bounds.gamma.1);
    let omega = theta.omega.clamp(bounds.omega.0, bounds.omega.1);
    let a = theta.a.clamp(bounds.a.0, bounds.a.1);
    let (dlo, dhi) = bounds.d_interior();
    let d = theta.d.clamp(dlo, dhi);

    let (slo, shi) = bounds.s_bounds(gamma);
    if slo > shi {
        return Err(Error::InfeasibleBox { gamma, lo: slo, hi: shi });
    }
    let zeta = zeta_real(2.0 * (1.0 - d))?;
    let s = theta.c * theta.c * zeta;
    const SLACK: f64 = 1e-12;
    let c = if s < slo * (1.0 - SLACK) {
        let mag = (slo / zeta).sqrt();
        if theta.c < 0.0 {
            -mag
        } else {
            mag
        }
    } else if s > shi * (1.0 + SLACK) {
        theta.c * (shi / s).sqrt()
    } else {
        theta.c
    };
    Theta::new(gamma, omega, a, d, c)
}
