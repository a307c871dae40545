//! Parzen density estimators used by the TPE sampler.
//!
//! Numeric parameters use a mixture of truncated Gaussian kernels, one per
//! observation, plus a uniform prior component. Categorical parameters use
//! a smoothed frequency table.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::params::{ParamKind, ParamSpec, Value};

use super::OptimizerError;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Per-kernel bandwidths: each observation's sigma is the larger gap to its
/// sorted neighbours (the domain bounds stand in at the ends), clipped to
/// `[(high - low) / min(100, n + 1), high - low]`.
pub fn kernel_bandwidths(observations: &[f64], low: f64, high: f64) -> Vec<f64> {
    let n = observations.len();
    let width = high - low;
    let floor = width / (100f64).min(1.0 + n as f64);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| observations[a].total_cmp(&observations[b]).then(a.cmp(&b)));
    let mut sigmas = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        let x = observations[i];
        let left = if rank == 0 { x - low } else { x - observations[order[rank - 1]] };
        let right = if rank + 1 == n { high - x } else { observations[order[rank + 1]] - x };
        sigmas[i] = left.max(right).clamp(floor, width);
    }
    sigmas
}

#[derive(Debug, Clone)]
struct Kernel {
    mu: f64,
    sigma: f64,
    // 1 / (sigma * Z) where Z is the kernel mass inside [low, high]
    scale: f64,
}

/// Mixture of truncated Gaussians on `[low, high]` with a uniform prior.
#[derive(Debug, Clone)]
pub struct ParzenEstimator {
    low: f64,
    high: f64,
    kernels: Vec<Kernel>,
    kernel_weight: f64,
    prior_weight: f64,
}

impl ParzenEstimator {
    /// Builds the mixture. Each kernel gets weight `1 / (n + prior)` and the
    /// uniform prior gets `prior / (n + prior)`.
    pub fn new(observations: &[f64], low: f64, high: f64, prior: f64) -> Self {
        assert!(low < high, "degenerate domain");
        let sigmas = kernel_bandwidths(observations, low, high);
        let kernels = observations
            .iter()
            .zip(sigmas)
            .map(|(&mu, sigma)| {
                let mass = std_normal_cdf((high - mu) / sigma) - std_normal_cdf((low - mu) / sigma);
                Kernel {
                    mu,
                    sigma,
                    scale: 1.0 / (sigma * mass),
                }
            })
            .collect();
        let total = observations.len() as f64 + prior;
        ParzenEstimator {
            low,
            high,
            kernels,
            kernel_weight: 1.0 / total,
            prior_weight: prior / total,
        }
    }

    pub fn sigmas(&self) -> impl Iterator<Item = f64> + '_ {
        self.kernels.iter().map(|k| k.sigma)
    }

    /// Density at `x`; zero outside the domain.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(self.low <= x && x <= self.high) {
            return 0.0;
        }
        let kernels: f64 = self
            .kernels
            .iter()
            .map(|k| {
                let z = (x - k.mu) / k.sigma;
                FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() * k.scale
            })
            .sum();
        self.kernel_weight * kernels + self.prior_weight / (self.high - self.low)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pick: f64 = rng.random::<f64>() * (self.kernels.len() as f64 * self.kernel_weight + self.prior_weight);
        let idx = (pick / self.kernel_weight) as usize;
        if idx >= self.kernels.len() {
            let u: f64 = rng.random();
            return (self.low + u * (self.high - self.low)).min(self.high);
        }
        let mu = self.kernels[idx].mu;
        let sigma = self.kernels[idx].sigma;
        // Rejection from the untruncated kernel. The centre lies inside the
        // domain and sigma is at most the width, so acceptance stays above
        // roughly a third.
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + z * sigma;
            if self.low <= x && x <= self.high {
                return x;
            }
        }
    }
}

/// Smoothed category frequencies `(count_c + prior) / (n + prior * K)`.
#[derive(Debug, Clone)]
pub struct CategoricalEstimator {
    weights: Vec<f64>,
}

impl CategoricalEstimator {
    pub fn new(observations: &[usize], n_choices: usize, prior: f64) -> Self {
        let mut counts = vec![0.0; n_choices];
        for &c in observations {
            counts[c] += 1.0;
        }
        let total = observations.len() as f64 + prior * n_choices as f64;
        CategoricalEstimator {
            weights: counts.into_iter().map(|c| (c + prior) / total).collect(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pmf(&self, choice: usize) -> f64 {
        self.weights[choice]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u: f64 = rng.random();
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        self.weights.len() - 1
    }
}

/// Evaluates the Parzen density built from `observations` for one parameter.
///
/// Numeric observations are given as reals (`Value::Int` and `Value::Real`
/// are both accepted); categorical observations by label.
pub fn tpe_density_eval(
    observations: &[Value],
    spec: &ParamSpec,
    query: &Value,
    prior_weight: f64,
) -> Result<f64, OptimizerError> {
    if spec.check_value(query).is_some() {
        return Err(OptimizerError::QueryOutOfDomain {
            name: spec.name.clone(),
            query: query.to_string(),
        });
    }
    let numeric = |v: &Value| match v {
        Value::Real(r) => Some(*r),
        Value::Int(i) => Some(*i as f64),
        Value::Choice(_) => None,
    };
    match &spec.kind {
        ParamKind::Continuous { low, high } => {
            let obs: Vec<f64> = observations.iter().filter_map(numeric).collect();
            let est = ParzenEstimator::new(&obs, *low, *high, prior_weight);
            Ok(est.pdf(numeric(query).expect("checked")))
        }
        ParamKind::Integer { low, high } => {
            if low == high {
                return Ok(1.0);
            }
            let obs: Vec<f64> = observations.iter().filter_map(numeric).collect();
            let est = ParzenEstimator::new(&obs, *low as f64, *high as f64, prior_weight);
            Ok(est.pdf(numeric(query).expect("checked")))
        }
        ParamKind::Categorical { choices } => {
            let obs: Vec<usize> = observations
                .iter()
                .filter_map(|v| v.as_choice().and_then(|c| spec.choice_index(c)))
                .collect();
            let est = CategoricalEstimator::new(&obs, choices.len(), prior_weight);
            Ok(est.pmf(spec.choice_index(query.as_choice().expect("checked")).expect("checked")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson's rule with `n` (even) intervals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn empty_is_uniform() {
        let est = ParzenEstimator::new(&[], 0.0, 1.0, 1.0);
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(est.pdf(x), 1.0);
        }
        let est = ParzenEstimator::new(&[], -2.0, 2.0, 1.0);
        assert_eq!(est.pdf(0.5), 0.25);
    }

    #[test]
    fn mode_at_observation() {
        let est = ParzenEstimator::new(&[0.5], 0.0, 1.0, 1.0);
        assert!(est.pdf(0.5) > est.pdf(0.0));
    }

    #[test]
    fn bandwidths_follow_neighbour_gaps() {
        // floor is width / min(100, n + 1)
        assert_eq!(kernel_bandwidths(&[0.4], 0.0, 2.0), vec![1.6]);
        assert_eq!(kernel_bandwidths(&[0.4, 0.4, 0.4], 0.0, 1.0), vec![0.4, 0.25, 0.6]);
        let obs: Vec<f64> = (0..200).map(|i| 0.5 + i as f64 * 1e-6).collect();
        assert!(kernel_bandwidths(&obs, 0.0, 1.0)[100] == 0.01);
        let s = kernel_bandwidths(&[0.1, 0.9, 0.5], 0.0, 1.0);
        assert!((s[0] - 0.4).abs() < 1e-15 && (s[1] - 0.4).abs() < 1e-15 && (s[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn mixture_integrates_to_one() {
        let cases: Vec<(Vec<f64>, f64, f64)> = vec![
            (vec![], 0.0, 1.0),
            (vec![0.5], 0.0, 1.0),
            (vec![0.0, 0.0, 1.0], 0.0, 1.0),
            (vec![0.3, 0.31, 0.29, 0.9, 0.05], 0.0, 1.0),
            (vec![-0.99, 0.2, 0.7], -1.0, 1.0),
            (vec![3.0, 7.5], 1.0, 9.0),
        ];
        for (obs, lo, hi) in cases {
            let est = ParzenEstimator::new(&obs, lo, hi, 1.0);
            let integral = simpson(|x| est.pdf(x), lo, hi, 200_000);
            assert!((integral - 1.0).abs() < 1e-6, "{obs:?}: {integral}");
        }
    }

    #[test]
    fn samples_stay_in_domain() {
        let est = ParzenEstimator::new(&[0.0, 1.0, 0.999], 0.0, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = est.sample(&mut rng);
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn categorical_smoothing() {
        // good counts {A:3, B:1}, prior 1, K = 2
        let est = CategoricalEstimator::new(&[0, 0, 0, 1], 2, 1.0);
        assert_eq!(est.pmf(0), 4.0 / 6.0);
        let est = CategoricalEstimator::new(&[], 2, 1.0);
        assert_eq!(est.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn density_eval_rejects_out_of_domain() {
        let spec = ParamSpec::continuous("x", 0.0, 1.0);
        assert!(tpe_density_eval(&[], &spec, &Value::Real(1.5), 1.0).is_err());
        assert_eq!(tpe_density_eval(&[], &spec, &Value::Real(0.2), 1.0).unwrap(), 1.0);
        let cat = ParamSpec::categorical("f", ["A", "B"]);
        let obs: Vec<Value> = ["A", "A", "A", "B"].iter().map(|s| Value::Choice(s.to_string())).collect();
        let w = tpe_density_eval(&obs, &cat, &Value::Choice("A".into()), 1.0).unwrap();
        assert!((w - 2.0 / 3.0).abs() < 1e-15);
        assert!(tpe_density_eval(&obs, &cat, &Value::Choice("C".into()), 1.0).is_err());
    }
}
