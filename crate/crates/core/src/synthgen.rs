//! Ground-truth simulators: homogeneous Poisson streams with i.i.d. marks and
//! multivariate Hawkes processes with an exponential kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventSequence;
use crate::rng::{self, FlowRng};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("mark probabilities must be non-negative and sum to 1 (sum = {sum})")]
    InvalidSimplex { sum: f64 },
    #[error("excitation matrix must be {expected}x{expected} with non-negative entries")]
    InvalidExcitation { expected: usize },
    #[error("decay must be positive and finite, got {0}")]
    InvalidDecay(f64),
    #[error("unstable Hawkes process: spectral radius of excitation/decay is {radius:.6} (must be < 1)")]
    Unstable { radius: f64 },
}

fn check_simplex(probs: &[f64]) -> Result<(), SimError> {
    let sum: f64 = probs.iter().sum();
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(SimError::InvalidSimplex { sum });
    }
    Ok(())
}

/// `n` events with Exponential(`rate`) gaps and Categorical(`mark_probs`) marks.
pub fn simulate_poisson(
    rate: f64,
    mark_probs: &[f64],
    length: usize,
    seed: u64,
) -> Result<EventSequence, SimError> {
    simulate_poisson_with(rate, mark_probs, length, &mut rng::stream(seed, 0))
}

pub fn simulate_poisson_with(
    rate: f64,
    mark_probs: &[f64],
    length: usize,
    rng: &mut FlowRng,
) -> Result<EventSequence, SimError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(SimError::InvalidRate(rate));
    }
    check_simplex(mark_probs)?;
    let mut dts = Vec::with_capacity(length);
    let mut marks = Vec::with_capacity(length);
    for _ in 0..length {
        dts.push(rng::exponential(rng, rate));
        marks.push(rng::categorical(rng, mark_probs));
    }
    Ok(EventSequence::new(dts, marks, mark_probs.len()).expect("simulator output is valid"))
}

/// Multivariate Hawkes process with intensity
/// `λ_k(t) = μ_k + Σ_{t_j < t} α[k][m_j] · exp(−β (t − t_j))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HawkesSpecRaw", into = "HawkesSpecRaw")]
pub struct HawkesSpec {
    base_rates: Vec<f64>,
    /// `excite[k][j]`: jump in mark-`k` intensity after a mark-`j` event.
    excite: Vec<Vec<f64>>,
    decay: f64,
}

#[derive(Serialize, Deserialize)]
struct HawkesSpecRaw {
    base_rates: Vec<f64>,
    excitation: Vec<Vec<f64>>,
    decay: f64,
}

impl TryFrom<HawkesSpecRaw> for HawkesSpec {
    type Error = SimError;
    fn try_from(raw: HawkesSpecRaw) -> Result<Self, SimError> {
        HawkesSpec::new(raw.base_rates, raw.excitation, raw.decay)
    }
}

impl From<HawkesSpec> for HawkesSpecRaw {
    fn from(s: HawkesSpec) -> Self {
        HawkesSpecRaw {
            base_rates: s.base_rates,
            excitation: s.excite,
            decay: s.decay,
        }
    }
}

impl HawkesSpec {
    pub fn new(base_rates: Vec<f64>, excite: Vec<Vec<f64>>, decay: f64) -> Result<Self, SimError> {
        let m = base_rates.len();
        if m == 0 {
            return Err(SimError::InvalidExcitation { expected: 0 });
        }
        if let Some(&bad) = base_rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(SimError::InvalidRate(bad));
        }
        if !(decay.is_finite() && decay > 0.0) {
            return Err(SimError::InvalidDecay(decay));
        }
        let shape_ok = excite.len() == m
            && excite
                .iter()
                .all(|row| row.len() == m && row.iter().all(|a| a.is_finite() && *a >= 0.0));
        if !shape_ok {
            return Err(SimError::InvalidExcitation { expected: m });
        }
        let scaled: Vec<Vec<f64>> = excite
            .iter()
            .map(|row| row.iter().map(|a| a / decay).collect())
            .collect();
        let radius = spectral_radius(&scaled);
        if radius >= 1.0 {
            return Err(SimError::Unstable { radius });
        }
        Ok(Self {
            base_rates,
            excite,
            decay,
        })
    }

    pub fn num_marks(&self) -> usize {
        self.base_rates.len()
    }

    pub fn base_rates(&self) -> &[f64] {
        &self.base_rates
    }

    pub fn excitation(&self) -> &[Vec<f64>] {
        &self.excite
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Long-run event rate `1ᵀ (I − α/β)⁻¹ μ`, by fixed-point iteration.
    pub fn stationary_rate(&self) -> f64 {
        let m = self.num_marks();
        let mut rates = self.base_rates.clone();
        for _ in 0..10_000 {
            let next: Vec<f64> = (0..m)
                .map(|k| {
                    self.base_rates[k]
                        + (0..m)
                            .map(|j| self.excite[k][j] / self.decay * rates[j])
                            .sum::<f64>()
                })
                .collect();
            let delta: f64 = next.iter().zip(&rates).map(|(a, b)| (a - b).abs()).sum();
            rates = next;
            if delta < 1e-14 {
                break;
            }
        }
        rates.iter().sum()
    }
}

/// Spectral radius of a square matrix via Gelfand's formula
/// `ρ = lim ‖Aᵏ‖^{1/k}`, evaluated at `k = 2⁶⁰` by repeated squaring with
/// log-scale renormalisation.
pub fn spectral_radius(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let norm = |m: &[Vec<f64>]| {
        m.iter()
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut b: Vec<Vec<f64>> = a.to_vec();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    let s = norm(&b);
    if s == 0.0 {
        return 0.0;
    }
    for row in b.iter_mut() {
        row.iter_mut().for_each(|x| *x /= s);
    }
    log_scale += s.ln();
    for _ in 0..60 {
        let mut c = vec![vec![0.0; n]; n];
        for (i, row) in b.iter().enumerate() {
            for (k, &bik) in row.iter().enumerate() {
                if bik == 0.0 {
                    continue;
                }
                for (cij, bkj) in c[i].iter_mut().zip(&b[k]) {
                    *cij += bik * bkj;
                }
            }
        }
        let s = norm(&c);
        if s == 0.0 {
            return 0.0;
        }
        for row in c.iter_mut() {
            row.iter_mut().for_each(|x| *x /= s);
        }
        log_scale = 2.0 * log_scale + s.ln();
        power *= 2.0;
        b = c;
    }
    (log_scale / power).exp()
}

/// Acceptance bookkeeping from one thinning run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinningStats {
    pub proposals: u64,
    pub accepted: u64,
    pub min_acceptance: f64,
    pub max_acceptance: f64,
}

/// `length` events by Ogata thinning.
pub fn simulate_hawkes(spec: &HawkesSpec, length: usize, seed: u64) -> EventSequence {
    simulate_hawkes_with(spec, length, &mut rng::stream(seed, 0)).0
}

/// Thinning with the intensity right after the current time as the bound: the
/// exponential kernel only decays between events, so the bound is exact until
/// the next accepted event. Rejected proposals still advance time.
pub fn simulate_hawkes_with(
    spec: &HawkesSpec,
    length: usize,
    rng: &mut FlowRng,
) -> (EventSequence, ThinningStats) {
    let m = spec.num_marks();
    // excitation[k] = Σ_j α[k][m_j] exp(−β (t − t_j))
    let mut excitation = vec![0.0; m];
    let mut intensities = vec![0.0; m];
    let mut dts = Vec::with_capacity(length);
    let mut marks = Vec::with_capacity(length);
    let mut stats = ThinningStats {
        proposals: 0,
        accepted: 0,
        min_acceptance: 1.0,
        max_acceptance: 0.0,
    };
    let mut since_last = 0.0;

    while marks.len() < length {
        let bound: f64 = spec
            .base_rates
            .iter()
            .zip(&excitation)
            .map(|(mu, e)| mu + e)
            .sum();
        let wait = rng::exponential(rng, bound);
        since_last += wait;
        let factor = (-spec.decay * wait).exp();
        excitation.iter_mut().for_each(|e| *e *= factor);
        for k in 0..m {
            intensities[k] = spec.base_rates[k] + excitation[k];
        }
        let total: f64 = intensities.iter().sum();
        let ratio = total / bound;
        debug_assert!(ratio > 0.0 && ratio <= 1.0 + 1e-12);
        stats.proposals += 1;
        stats.min_acceptance = stats.min_acceptance.min(ratio);
        stats.max_acceptance = stats.max_acceptance.max(ratio);

        if rng::uniform(rng) * bound < total {
            let mark = rng::categorical(rng, &intensities);
            for (e, row) in excitation.iter_mut().zip(&spec.excite) {
                *e += row[mark];
            }
            dts.push(since_last);
            marks.push(mark);
            since_last = 0.0;
            stats.accepted += 1;
        }
    }
    let seq = EventSequence::new(dts, marks, m).expect("simulator output is valid");
    (seq, stats)
}

/// A ground-truth process as it appears in configuration files:
/// `{"kind":"poisson","rate":1.0,"mark_probs":[..]}` or
/// `{"kind":"hawkes","base_rates":[..],"excitation":[[..]],"decay":1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Process {
    Poisson { rate: f64, mark_probs: Vec<f64> },
    Hawkes(HawkesSpec),
}

impl Process {
    pub fn num_marks(&self) -> usize {
        match self {
            Process::Poisson { mark_probs, .. } => mark_probs.len(),
            Process::Hawkes(spec) => spec.num_marks(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            Process::Poisson { rate, mark_probs } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(SimError::InvalidRate(*rate));
                }
                check_simplex(mark_probs)
            }
            Process::Hawkes(_) => Ok(()),
        }
    }

    pub fn simulate_with(&self, length: usize, rng: &mut FlowRng) -> Result<EventSequence, SimError> {
        match self {
            Process::Poisson { rate, mark_probs } => simulate_poisson_with(*rate, mark_probs, length, rng),
            Process::Hawkes(spec) => Ok(simulate_hawkes_with(spec, length, rng).0),
        }
    }
}

/// `count` independent sequences of `length` events. Different `split`
/// values give disjoint datasets for the same seed.
pub fn simulate_dataset(
    process: &Process,
    count: usize,
    length: usize,
    seed: u64,
    split: u64,
) -> Result<Vec<EventSequence>, SimError> {
    process.validate()?;
    let mut rng = rng::stream(seed, rng::streams::SIMULATE_BASE + split);
    (0..count).map(|_| process.simulate_with(length, &mut rng)).collect()
}
