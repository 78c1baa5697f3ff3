//! Bernoulli divergences and the logistic link.

use crate::error::{Error, Result};

/// Validated probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!(
                "probability {value} is outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Smallest argument fed to a logarithm; only guards against underflow.
const LOG_FLOOR: f64 = 1e-300;

/// `d(x, y) = x ln(x/y) + (1-x) ln((1-x)/(1-y))` for Bernoulli means.
///
/// Uses `0 ln(0/.) = 0`. Returns `f64::INFINITY` when `y` is 0 or 1 and
/// `x != y`; callers only ever compare or take maxima with that value.
///
/// Both arguments must lie in `[0, 1]` (checked in debug builds; use
/// [`checked_bern_kl`] for untrusted input).
pub fn bern_kl(x: f64, y: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x), "x = {x} outside [0, 1]");
    debug_assert!((0.0..=1.0).contains(&y), "y = {y} outside [0, 1]");
    if x == y {
        return 0.0;
    }
    if y == 0.0 || y == 1.0 {
        return f64::INFINITY;
    }
    let y = y.max(LOG_FLOOR);
    let head = if x == 0.0 {
        0.0
    } else {
        x * (x.ln() - y.ln())
    };
    let tail = if x == 1.0 {
        0.0
    } else {
        // ln(1 - v) via ln_1p keeps precision when v is tiny.
        (1.0 - x) * ((-x).ln_1p() - (-y).ln_1p().max(LOG_FLOOR.ln()))
    };
    (head + tail).max(0.0)
}

pub fn checked_bern_kl(x: Probability, y: Probability) -> f64 {
    bern_kl(x.value(), y.value())
}

/// `kl(a, b)` as it appears in the sample-size lower bound. Same formula as
/// [`bern_kl`]; the separate name keeps lower-bound reporting readable.
pub fn bern_kl_binary(a: f64, b: f64) -> f64 {
    bern_kl(a, b)
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `logistic'(u) = logistic(u) (1 - logistic(u))`, in `(0, 1/4]`.
pub fn logistic_deriv(u: f64) -> f64 {
    let s = logistic(u);
    s * (1.0 - s)
}
