//! Bundled benchmark functions for comparing samplers.
//!
//! Every function lives on the unit box and has a known global minimum.

use crate::params::{Assignment, ParamSpace, ParamSpec, Value};

use super::{run_study, OptimizerError, SamplerKind, StudyConfig, StudyOutcome};

/// Minimizer of the sphere benchmarks; chosen off any regular grid.
// an arbitrary interior point; 0.7854 is not meant as pi/4
#[allow(clippy::approx_constant)]
pub const SPHERE_CENTER: [f64; 6] = [0.3716, 0.6423, 0.2589, 0.7854, 0.5313, 0.4142];

/// Global minimum of Branin, attained at three points.
pub const BRANIN_MIN: f64 = 0.397_887_357_729_738_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkId {
    Sphere2,
    Sphere6,
    QuadraticCategorical6,
    Branin,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 4] = [
        BenchmarkId::Sphere2,
        BenchmarkId::Sphere6,
        BenchmarkId::QuadraticCategorical6,
        BenchmarkId::Branin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::Sphere2 => "sphere-2d",
            BenchmarkId::Sphere6 => "sphere-6d",
            BenchmarkId::QuadraticCategorical6 => "quadratic-6d-categorical",
            BenchmarkId::Branin => "branin-unit-box",
        }
    }
}

/// Centre of the quadratic bowl for each categorical choice. `shifted` moves
/// the minimizer; every branch bottoms out at 0.
const QUAD_BRANCHES: [(&str, f64); 3] = [("base", 0.5), ("alt", 0.5), ("shifted", 0.25)];

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub id: BenchmarkId,
    pub space: ParamSpace,
    pub global_min: f64,
}

fn coords(a: &Assignment, n: usize) -> Vec<f64> {
    (0..n).map(|i| a.real(&format!("x{i}"))).collect()
}

fn unit_specs(n: usize) -> Vec<ParamSpec> {
    (0..n)
        .map(|i| ParamSpec::continuous(format!("x{i}"), 0.0, 1.0))
        .collect()
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().zip(SPHERE_CENTER).map(|(v, c)| (v - c).powi(2)).sum()
}

/// Branin evaluated at `(15u - 5, 15v)`.
pub fn branin_unit(u: f64, v: f64) -> f64 {
    use std::f64::consts::PI;
    let x1 = 15.0 * u - 5.0;
    let x2 = 15.0 * v;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

impl Benchmark {
    pub fn new(id: BenchmarkId) -> Self {
        let (specs, global_min) = match id {
            BenchmarkId::Sphere2 => (unit_specs(2), 0.0),
            BenchmarkId::Sphere6 => (unit_specs(6), 0.0),
            BenchmarkId::QuadraticCategorical6 => {
                let mut s = unit_specs(6);
                s.push(ParamSpec::categorical("branch", QUAD_BRANCHES.map(|b| b.0)));
                (s, 0.0)
            }
            BenchmarkId::Branin => (unit_specs(2), BRANIN_MIN),
        };
        Benchmark {
            id,
            space: ParamSpace::new(specs).expect("benchmark space is valid"),
            global_min,
        }
    }

    pub fn suite() -> Vec<Benchmark> {
        BenchmarkId::ALL.into_iter().map(Benchmark::new).collect()
    }

    pub fn eval(&self, a: &Assignment) -> f64 {
        match self.id {
            BenchmarkId::Sphere2 => sphere(&coords(a, 2)),
            BenchmarkId::Sphere6 => sphere(&coords(a, 6)),
            BenchmarkId::QuadraticCategorical6 => {
                let label = a.get("branch").and_then(Value::as_choice).expect("branch");
                let (_, centre) = QUAD_BRANCHES
                    .iter()
                    .find(|b| b.0 == label)
                    .expect("known branch");
                coords(a, 6).iter().map(|x| (x - centre).powi(2)).sum()
            }
            BenchmarkId::Branin => {
                let x = coords(a, 2);
                branin_unit(x[0], x[1])
            }
        }
    }

    pub fn run(&self, sampler: SamplerKind, budget: usize, seed: u64) -> Result<StudyOutcome, OptimizerError> {
        let config = StudyConfig {
            seed,
            budget,
            sampler,
            ..StudyConfig::default()
        };
        run_study(|a| Ok(self.eval(a)), &self.space, &config)
    }
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median best objective per sampler for one benchmark.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub id: BenchmarkId,
    pub tpe_median: f64,
    pub random_median: f64,
    pub tpe_best: Vec<f64>,
    pub random_best: Vec<f64>,
}

impl BenchRow {
    pub fn tpe_wins(&self) -> bool {
        self.tpe_median <= self.random_median
    }
}

/// Runs both samplers on seeds `0..seeds` and reports the median best objective.
pub fn compare_samplers(bench: &Benchmark, budget: usize, seeds: u64) -> Result<BenchRow, OptimizerError> {
    let bests = |sampler| -> Result<Vec<f64>, OptimizerError> {
        (0..seeds)
            .map(|seed| Ok(bench.run(sampler, budget, seed)?.best.objective.expect("complete")))
            .collect()
    };
    let tpe_best = bests(SamplerKind::Tpe)?;
    let random_best = bests(SamplerKind::Random)?;
    Ok(BenchRow {
        id: bench.id,
        tpe_median: median(&tpe_best),
        random_median: median(&random_best),
        tpe_best,
        random_best,
    })
}

/// Smallest value of a 2-D function over a `side x side` grid on the unit box,
/// grid points at `i / (side - 1)`.
pub fn grid_min_2d(f: impl Fn(f64, f64) -> f64, side: usize) -> f64 {
    let step = 1.0 / (side - 1) as f64;
    let mut best = f64::INFINITY;
    for i in 0..side {
        for j in 0..side {
            best = best.min(f(i as f64 * step, j as f64 * step));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minima_are_where_documented() {
        let b = Benchmark::new(BenchmarkId::Branin);
        let pi = std::f64::consts::PI;
        // (-pi, 12.275) in Branin coordinates
        let a = Assignment::from_pairs([
            ("x0", Value::Real((-pi + 5.0) / 15.0)),
            ("x1", Value::Real(12.275 / 15.0)),
        ]);
        assert!((b.eval(&a) - BRANIN_MIN).abs() < 1e-9);

        let q = Benchmark::new(BenchmarkId::QuadraticCategorical6);
        let mut a = Assignment::from_pairs((0..6).map(|i| (format!("x{i}"), Value::Real(0.25))));
        a.set("branch", Value::Choice("shifted".into()));
        assert_eq!(q.eval(&a), 0.0);
        a.set("branch", Value::Choice("base".into()));
        assert_eq!(q.eval(&a), 6.0 * 0.0625);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn grid_oracle_finds_sphere_minimum() {
        let g = grid_min_2d(|u, v| sphere(&[u, v]), 101);
        // nearest grid point to the centre is (0.37, 0.64)
        assert!((g - ((0.0016f64).powi(2) + (0.0023f64).powi(2))).abs() < 1e-12);
    }
}
