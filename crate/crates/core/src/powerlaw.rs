//! Yule–Simon fitting of node-degree distributions.
//!
//! The pmf is `p(k; rho) = rho * B(k, rho + 1)` for `k >= 1`, whose tail decays
//! like `k^-(rho + 1)`. Fitting uses EM on the exponential–geometric mixture
//! representation: `W ~ Exp(rho)` and, given `W`, `K - 1` is geometric with
//! success probability `exp(-W)`. The posterior of `exp(-W)` given `K = k` is
//! `Beta(rho + 1, k)`, so
//!
//! ```text
//! E[W | k] = digamma(rho + 1 + k) - digamma(rho + 1)
//! rho'     = n / sum_i E[W | k_i]
//! ```
//!
//! whose fixed point is the stationary point of the log-likelihood.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Geometric};
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower end of the admissible shape interval (exclusive in spirit; fits clamp here).
pub const RHO_MIN: f64 = 1e-3;
/// Upper end of the admissible shape interval.
pub const RHO_MAX: f64 = 20.0;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

const EM_START: f64 = 1.0;

/// Multiset of node degrees, all `>= 1`, stored as a histogram.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DegreeSample {
    histogram: BTreeMap<u64, u64>,
    n: u64,
}

impl DegreeSample {
    pub fn new(degrees: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut histogram = BTreeMap::new();
        let mut n = 0;
        for d in degrees {
            if d == 0 {
                return Err(Error::InvalidArgument("degrees must be at least 1".into()));
            }
            *histogram.entry(d).or_default() += 1;
            n += 1;
        }
        Ok(Self { histogram, n })
    }

    pub fn from_histogram(histogram: BTreeMap<u64, u64>) -> Result<Self> {
        if histogram.contains_key(&0) {
            return Err(Error::InvalidArgument("degrees must be at least 1".into()));
        }
        let histogram: BTreeMap<u64, u64> = histogram.into_iter().filter(|&(_, c)| c > 0).collect();
        let n = histogram.values().sum();
        Ok(Self { histogram, n })
    }

    pub fn histogram(&self) -> &BTreeMap<u64, u64> {
        &self.histogram
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Degrees in ascending order, with multiplicity.
    pub fn degrees(&self) -> impl Iterator<Item = u64> + '_ {
        self.histogram
            .iter()
            .flat_map(|(&k, &c)| std::iter::repeat_n(k, c as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit<F> {
    pub rho: F,
    /// Tail exponent, `rho + 1`.
    pub gamma: F,
    pub std_error: F,
    pub log_likelihood: F,
    pub iterations: usize,
    pub n: u64,
    /// The optimum sits on an end of `[RHO_MIN, RHO_MAX]`.
    pub boundary_warning: bool,
    /// Log-likelihood after each EM update, starting with the initial point.
    #[serde(skip)]
    pub log_likelihood_trace: Vec<F>,
}

fn check_rho<F: Scalar>(rho: F) -> Result<f64> {
    let r = rho.as_f64();
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("rho {rho} must be positive and finite")));
    }
    Ok(r)
}

fn ln_pmf(k: u64, rho: f64) -> f64 {
    let k = k as f64;
    rho.ln() + ln_gamma(k) + ln_gamma(rho + 1.0) - ln_gamma(k + rho + 1.0)
}

/// `rho * B(k, rho + 1)`.
pub fn yule_simon_pmf<F: Scalar>(k: u64, rho: F) -> Result<F> {
    if k == 0 {
        return Err(Error::InvalidArgument("Yule-Simon support starts at k = 1".into()));
    }
    let rho = check_rho(rho)?;
    Ok(F::from_f64_lossy(ln_pmf(k, rho).exp()))
}

fn log_likelihood_f64(histogram: &BTreeMap<u64, u64>, rho: f64) -> f64 {
    histogram.iter().map(|(&k, &c)| c as f64 * ln_pmf(k, rho)).sum()
}

/// Log-likelihood of `sample` under shape `rho`.
pub fn log_likelihood<F: Scalar>(sample: &DegreeSample, rho: F) -> Result<F> {
    let rho = check_rho(rho)?;
    Ok(F::from_f64_lossy(log_likelihood_f64(&sample.histogram, rho)))
}

fn em_update(histogram: &BTreeMap<u64, u64>, n: f64, rho: f64) -> f64 {
    let base = digamma(rho + 1.0);
    let expected_w: f64 = histogram
        .iter()
        .map(|(&k, &c)| c as f64 * (digamma(rho + 1.0 + k as f64) - base))
        .sum();
    n / expected_w
}

/// Maximum-likelihood Yule–Simon shape by EM, with an observed-information
/// standard error.
///
/// Iterates until successive shapes differ by at most `tol * max(1, rho)`.
/// A fit that runs into `[RHO_MIN, RHO_MAX]` is clamped and flagged.
pub fn fit_yule_simon<F: Scalar>(sample: &DegreeSample, tol: F, max_iter: usize) -> Result<PowerLawFit<F>> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty degree sample".into()));
    }
    let tol = tol.as_f64();
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let hist = &sample.histogram;
    let n = sample.n as f64;

    let mut rho = EM_START;
    let mut trace = vec![log_likelihood_f64(hist, rho)];
    let mut boundary = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut next = em_update(hist, n, rho);
        if next >= RHO_MAX {
            next = RHO_MAX;
            boundary = true;
        } else if next <= RHO_MIN {
            next = RHO_MIN;
            boundary = true;
        }
        let step = (next - rho).abs();
        rho = next;
        trace.push(log_likelihood_f64(hist, rho));
        if boundary || step <= tol * rho.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last_rho: rho,
        });
    }
    if boundary {
        log::warn!("Yule-Simon fit reached the search bound at rho = {rho}");
    }

    let h = 1e-4 * rho;
    let ll = *trace.last().unwrap();
    let second = (log_likelihood_f64(hist, rho + h) - 2.0 * ll + log_likelihood_f64(hist, rho - h)) / (h * h);
    let std_error = if second < 0.0 { (-second).powf(-0.5) } else { f64::INFINITY };

    let rho_f = F::from_f64_lossy(rho);
    Ok(PowerLawFit {
        rho: rho_f,
        gamma: rho_f + F::one(),
        std_error: F::from_f64_lossy(std_error),
        log_likelihood: F::from_f64_lossy(ll),
        iterations,
        n: sample.n,
        boundary_warning: boundary,
        log_likelihood_trace: trace.into_iter().map(F::from_f64_lossy).collect(),
    })
}

/// `n` draws from Yule–Simon(`rho`) through the exponential–geometric mixture.
pub fn sample_yule_simon<F: Scalar>(rho: F, n: usize, seed: u64) -> Result<DegreeSample> {
    let rho = check_rho(rho)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let exp = Exp::new(rho).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degrees = Vec::with_capacity(n);
    for _ in 0..n {
        let w: f64 = rng.sample(exp);
        let success = (-w).exp();
        let failures = Geometric::new(success)
            .map(|g| rng.sample(g))
            .unwrap_or(u64::MAX);
        degrees.push(failures.saturating_add(1));
    }
    DegreeSample::new(degrees)
}

/// Writes `degree<TAB>count<TAB>empirical_prob<TAB>theoretical_prob` rows
/// (with a header line), sorted by degree. The theoretical column is `NA`
/// without a fit.
pub fn export_histogram<F: Scalar>(sample: &DegreeSample, fit: Option<&PowerLawFit<F>>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if sample.is_empty() {
        return Err(Error::InvalidArgument("cannot export an empty degree sample".into()));
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(w, "degree\tcount\tempirical_prob\ttheoretical_prob").map_err(io)?;
    let n = sample.n as f64;
    for (&k, &c) in &sample.histogram {
        let empirical = c as f64 / n;
        match fit {
            Some(f) => writeln!(w, "{k}\t{c}\t{empirical}\t{}", yule_simon_pmf(k, f.rho)?),
            None => writeln!(w, "{k}\t{c}\t{empirical}\tNA"),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
