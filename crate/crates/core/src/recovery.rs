//! Parametric recovery functions of individual systems.
//!
//! A recovery function is the CDF of a system's random recovery time: the
//! probability that the system is functional again by time `t`.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Family tag and parameters, as serialized:
/// `{"family": "lognormal", "params": {"median": 3.0, "dispersion": 0.4}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum Family {
    /// `Phi(ln(t / median) / dispersion)`.
    Lognormal { median: f64, dispersion: f64 },
    /// `1 - exp(-(t / scale)^shape)`.
    Weibull { shape: f64, scale: f64 },
    /// Linear interpolation between knots. Repeated knot times encode jumps
    /// (the CDF is right-continuous). The first knot is `(0, 0)` and the last
    /// value is exactly 1.
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
}

/// A validated recovery function. Construct through the family constructors
/// or deserialize from JSON/TOML; both paths check the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct RecoveryFunction {
    family: Family,
}

impl TryFrom<Family> for RecoveryFunction {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        validate(&family)?;
        Ok(Self { family })
    }
}

impl From<RecoveryFunction> for Family {
    fn from(f: RecoveryFunction) -> Self {
        f.family
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn validate(family: &Family) -> Result<()> {
    match family {
        Family::Lognormal { median, dispersion } => {
            positive("median", *median)?;
            positive("dispersion", *dispersion)
        }
        Family::Weibull { shape, scale } => {
            positive("shape", *shape)?;
            positive("scale", *scale)
        }
        Family::PiecewiseLinear { times, values } => {
            if times.len() != values.len() {
                return Err(Error::Domain("knot times and values differ in length".into()));
            }
            if times.len() < 2 {
                return Err(Error::Domain("piecewise-linear needs at least 2 knots".into()));
            }
            if times[0] != 0.0 || values[0] != 0.0 {
                return Err(Error::Domain("first knot must be (0, 0)".into()));
            }
            if times.iter().chain(values).any(|x| !x.is_finite()) {
                return Err(Error::Domain("non-finite knot".into()));
            }
            if times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Domain("knot times must be sorted".into()));
            }
            if values.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Domain("knot values must be nondecreasing".into()));
            }
            // no mass at t = 0
            if times.iter().zip(values).any(|(&t, &v)| t == 0.0 && v != 0.0) {
                return Err(Error::Domain("jump at t = 0 is not allowed".into()));
            }
            if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Domain("knot values must lie in [0, 1]".into()));
            }
            if *values.last().unwrap() != 1.0 {
                return Err(Error::Domain("last knot value must be exactly 1".into()));
            }
            Ok(())
        }
    }
}

/// Standard normal CDF.
pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile, polished with one Newton step.
pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    if pdf > 0.0 {
        z - (std_normal_cdf(z) - p) / pdf
    } else {
        z
    }
}

impl RecoveryFunction {
    pub fn lognormal(median: f64, dispersion: f64) -> Result<Self> {
        Family::Lognormal { median, dispersion }.try_into()
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        Family::Weibull { shape, scale }.try_into()
    }

    /// Exponential with the given rate, i.e. `weibull(1, 1 / rate)`.
    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Self::weibull(1.0, 1.0 / rate)
    }

    pub fn piecewise_linear(knots: &[(f64, f64)]) -> Result<Self> {
        let (times, values) = knots.iter().copied().unzip();
        Family::PiecewiseLinear { times, values }.try_into()
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Checked CDF: fails for negative `t`.
    pub fn eval_cdf(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cdf(t))
    }

    /// Checked density: fails for negative `t`.
    pub fn eval_density(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.density(t))
    }

    /// CDF, taken as 0 for `t <= 0`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Lognormal { median, dispersion } => {
                std_normal_cdf((t / median).ln() / dispersion)
            }
            Family::Weibull { shape, scale } => -(-(t / scale).powf(*shape)).exp_m1(),
            Family::PiecewiseLinear { times, values } => {
                let idx = times.partition_point(|&k| k <= t);
                if idx == times.len() {
                    return values[idx - 1];
                }
                let (t0, t1) = (times[idx - 1], times[idx]);
                let (v0, v1) = (values[idx - 1], values[idx]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Density `dφ/dt`. Piecewise-linear functions use the right derivative
    /// at knots. Weibull with `shape < 1` is infinite at `t = 0`.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Lognormal { median, dispersion } => {
                if t == 0.0 {
                    return 0.0;
                }
                let z = (t / median).ln() / dispersion;
                (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * dispersion * t)
            }
            Family::Weibull { shape, scale } => {
                if t == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 1.0 / scale,
                        _ => 0.0,
                    };
                }
                let x = t / scale;
                (shape / scale) * x.powf(shape - 1.0) * (-x.powf(*shape)).exp()
            }
            Family::PiecewiseLinear { times, values } => {
                let idx = times.partition_point(|&k| k <= t);
                if idx == times.len() {
                    return 0.0;
                }
                (values[idx] - values[idx - 1]) / (times[idx] - times[idx - 1])
            }
        }
    }

    /// Generalized inverse `inf { t : φ(t) >= u }`. `u <= 0` maps to 0 and
    /// `u >= 1` to the end of the support (infinite for the smooth families).
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Lognormal { median, dispersion } => {
                if u >= 1.0 {
                    return f64::INFINITY;
                }
                median * (dispersion * std_normal_quantile(u)).exp()
            }
            Family::Weibull { shape, scale } => {
                if u >= 1.0 {
                    return f64::INFINITY;
                }
                scale * (-(-u).ln_1p()).powf(1.0 / shape)
            }
            Family::PiecewiseLinear { times, values } => {
                let j = values.partition_point(|&v| v < u).min(values.len() - 1);
                let (t0, t1) = (times[j - 1], times[j]);
                let (v0, v1) = (values[j - 1], values[j]);
                if t1 == t0 {
                    t1
                } else {
                    t0 + (u - v0) / (v1 - v0) * (t1 - t0)
                }
            }
        }
    }

    /// Inverse-transform sample of the recovery time; one uniform per draw.
    pub fn sample_recovery_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile(u)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        Err(Error::Domain(format!("time must be nonnegative, got {t}")))
    } else {
        Ok(())
    }
}

/// Recovery functions of the systems in a SoS, in system-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RecoveryFunction>", into = "Vec<RecoveryFunction>")]
pub struct RecoveryFunctionSet {
    functions: Vec<RecoveryFunction>,
}

impl TryFrom<Vec<RecoveryFunction>> for RecoveryFunctionSet {
    type Error = Error;

    fn try_from(functions: Vec<RecoveryFunction>) -> Result<Self> {
        Self::new(functions)
    }
}

impl From<RecoveryFunctionSet> for Vec<RecoveryFunction> {
    fn from(s: RecoveryFunctionSet) -> Self {
        s.functions
    }
}

impl RecoveryFunctionSet {
    pub fn new(functions: Vec<RecoveryFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::Domain("a function set needs at least one system".into()));
        }
        Ok(Self { functions })
    }

    /// `n` copies of the same function.
    pub fn identical(f: RecoveryFunction, n: usize) -> Result<Self> {
        Self::new(vec![f; n])
    }

    pub fn n_systems(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[RecoveryFunction] {
        &self.functions
    }

    pub fn get(&self, k: usize) -> &RecoveryFunction {
        &self.functions[k]
    }

    /// Values of every system on `times`, system blocks concatenated.
    pub fn sensor_values(&self, times: &[f64]) -> Vec<f64> {
        self.functions
            .iter()
            .flat_map(|f| times.iter().map(move |&t| f.cdf(t)))
            .collect()
    }
}

/// Inclusive parameter range for random generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
}

impl ParamRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min > 0.0) {
            return Err(Error::Config(format!(
                "{name} range must be positive and finite, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.min > self.max {
            return Err(Error::Config(format!(
                "{name} range has min {} > max {}",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.min + (self.max - self.min) * u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GeneratorFamily {
    Lognormal { median: ParamRange, dispersion: ParamRange },
    Weibull { shape: ParamRange, scale: ParamRange },
}

/// How random recovery-function sets are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(flatten)]
    pub family: GeneratorFamily,
    /// One draw shared by all systems instead of one draw per system.
    pub identical: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            family: GeneratorFamily::Lognormal {
                median: ParamRange::new(1.0, 3.0),
                dispersion: ParamRange::new(0.3, 0.6),
            },
            identical: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.family {
            GeneratorFamily::Lognormal { median, dispersion } => {
                median.validate("median")?;
                dispersion.validate("dispersion")
            }
            GeneratorFamily::Weibull { shape, scale } => {
                shape.validate("shape")?;
                scale.validate("scale")
            }
        }
    }

    fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RecoveryFunction> {
        match &self.family {
            GeneratorFamily::Lognormal { median, dispersion } => {
                let m = median.draw(rng);
                RecoveryFunction::lognormal(m, dispersion.draw(rng))
            }
            GeneratorFamily::Weibull { shape, scale } => {
                let k = shape.draw(rng);
                RecoveryFunction::weibull(k, scale.draw(rng))
            }
        }
    }

    /// The largest `q`-quantile over every function the generator can
    /// produce. Quantiles are monotone in each parameter, so the maximum is
    /// attained at a corner of the parameter box.
    pub fn slowest_quantile(&self, q: f64) -> Result<f64> {
        self.validate()?;
        let corners: Vec<RecoveryFunction> = match &self.family {
            GeneratorFamily::Lognormal { median, dispersion } => {
                itertools::iproduct!([median.min, median.max], [dispersion.min, dispersion.max])
                    .map(|(m, b)| RecoveryFunction::lognormal(m, b))
                    .collect::<Result<_>>()?
            }
            GeneratorFamily::Weibull { shape, scale } => {
                itertools::iproduct!([shape.min, shape.max], [scale.min, scale.max])
                    .map(|(k, l)| RecoveryFunction::weibull(k, l))
                    .collect::<Result<_>>()?
            }
        };
        Ok(corners
            .iter()
            .map(|f| f.quantile(q))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Draw a random function set. In identical mode a single function is drawn
/// and shared by every system.
pub fn sample_random_function_set<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    n_systems: usize,
    rng: &mut R,
) -> Result<RecoveryFunctionSet> {
    cfg.validate()?;
    if n_systems == 0 {
        return Err(Error::Config("n_systems must be at least 1".into()));
    }
    if cfg.identical {
        let f = cfg.draw_one(rng)?;
        RecoveryFunctionSet::identical(f, n_systems)
    } else {
        let fs = (0..n_systems)
            .map(|_| cfg.draw_one(rng))
            .collect::<Result<Vec<_>>>()?;
        RecoveryFunctionSet::new(fs)
    }
}
