use rand::{Rng, SeedableRng};

use partran::optimizer::bench::grid_min_2d;
use partran::optimizer::parzen::{CategoricalEstimator, ParzenEstimator};
use partran::optimizer::{
    run_study, suggest, tpe_density_eval, SamplerKind, StudyConfig, StudyRng, TpeConfig, TrialRecord, TrialState,
};
use partran::params::{Assignment, ParamSpace, ParamSpec, Value};

fn unit_x() -> ParamSpace {
    ParamSpace::new(vec![ParamSpec::continuous("x", 0.0, 1.0)]).unwrap()
}

fn parabola(a: &Assignment) -> Result<f64, String> {
    let x = a.real("x");
    Ok((x - 0.3) * (x - 0.3))
}

fn tpe(seed: u64, budget: usize, gamma: f64, max_good: Option<usize>) -> StudyConfig {
    StudyConfig {
        seed,
        budget,
        sampler: SamplerKind::Tpe,
        tpe: TpeConfig {
            gamma,
            max_good,
            ..TpeConfig::default()
        },
        ..StudyConfig::default()
    }
}

#[test]
fn grid_puts_the_parabola_minimum_at_0_3() {
    let side = 10_001;
    let (mut best_x, mut best) = (0.0, f64::INFINITY);
    for i in 0..side {
        let x = i as f64 / (side - 1) as f64;
        let v = (x - 0.3) * (x - 0.3);
        if v < best {
            (best_x, best) = (x, v);
        }
    }
    assert!((best_x - 0.3).abs() < 1e-12);
    assert!(grid_min_2d(|u, v| (u - 0.3).powi(2) + (v - 0.3).powi(2), 101) < 1e-20);
}

#[test]
fn suggestions_concentrate_near_the_minimum() {
    let space = unit_x();
    let mut rng = StudyRng::seed_from_u64(1234);
    let history: Vec<TrialRecord> = (0..100)
        .map(|index| {
            let x: f64 = rng.random();
            let assignment = Assignment::from_pairs([("x", Value::Real(x))]);
            TrialRecord {
                index,
                objective: Some(parabola(&assignment).unwrap()),
                assignment,
                state: TrialState::Complete,
                message: None,
            }
        })
        .collect();
    let config = tpe(0, 200, 0.25, None);
    let inside = (0..100u64)
        .filter(|&seed| {
            let mut rng = StudyRng::seed_from_u64(seed);
            let x = suggest(&history, &space, &config, &mut rng).real("x");
            (0.1..=0.5).contains(&x)
        })
        .count();
    assert!(inside >= 95, "{inside}/100 inside [0.1, 0.5]");
}

#[test]
fn tpe_finds_the_parabola_minimum() {
    let out = run_study(parabola, &unit_x(), &tpe(7, 200, 0.1, Some(25))).unwrap();
    assert_eq!(out.history.len(), 200);
    let x = out.best.assignment.real("x");
    assert!((x - 0.3).abs() <= 0.05, "best x = {x}");

    // also at the textbook split
    let out = run_study(parabola, &unit_x(), &tpe(7, 200, 0.25, None)).unwrap();
    assert!((out.best.assignment.real("x") - 0.3).abs() <= 0.05);
}

#[test]
fn same_seed_same_history() {
    let space = ParamSpace::new(vec![
        ParamSpec::continuous("x", -1.0, 1.0),
        ParamSpec::integer("n", 0, 9),
        ParamSpec::categorical("c", ["a", "b", "c"]),
    ])
    .unwrap();
    let f = |a: &Assignment| {
        let c = match a.get("c").unwrap().as_choice().unwrap() {
            "a" => 0.0,
            "b" => 0.5,
            _ => 1.0,
        };
        Ok(a.real("x").abs() + a.get("n").unwrap().as_int().unwrap() as f64 * 0.1 + c)
    };
    for sampler in [SamplerKind::Tpe, SamplerKind::Random] {
        let config = StudyConfig {
            sampler,
            ..tpe(99, 60, 0.1, Some(25))
        };
        let a = run_study(f, &space, &config).unwrap();
        let b = run_study(f, &space, &config).unwrap();
        assert_eq!(a.history, b.history);
        for t in &a.history {
            assert!(space.validate(&t.assignment).is_empty());
        }
    }
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn parzen_mixtures_integrate_to_one() {
    let mut rng = StudyRng::seed_from_u64(5);
    for n in [0, 1, 2, 7, 40] {
        let (lo, hi) = (-2.0, 3.0);
        let obs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
        let est = ParzenEstimator::new(&obs, lo, hi, 1.0);
        let total = simpson(|x| est.pdf(x), lo, hi, 200_000);
        assert!((total - 1.0).abs() < 1e-6, "n = {n}: {total}");
    }
}

#[test]
fn density_examples() {
    let spec = ParamSpec::continuous("x", 0.0, 1.0);
    for q in [0.0, 0.25, 1.0] {
        assert_eq!(tpe_density_eval(&[], &spec, &Value::Real(q), 1.0).unwrap(), 1.0);
    }
    let obs = [Value::Real(0.5)];
    let at = |q: f64| tpe_density_eval(&obs, &spec, &Value::Real(q), 1.0).unwrap();
    assert!(at(0.5) > at(0.0));
    assert!(tpe_density_eval(&obs, &spec, &Value::Real(1.5), 1.0).is_err());

    let cat = ParamSpec::categorical("f", ["A", "B"]);
    let none: [Value; 0] = [];
    assert_eq!(tpe_density_eval(&none, &cat, &Value::Choice("A".into()), 1.0).unwrap(), 0.5);
    let good: Vec<Value> = ["A", "A", "A", "B"].iter().map(|s| Value::Choice(s.to_string())).collect();
    let a = tpe_density_eval(&good, &cat, &Value::Choice("A".into()), 1.0).unwrap();
    assert!((a - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(CategoricalEstimator::new(&[0, 0, 0, 1], 2, 1.0).weights(), &[4.0 / 6.0, 2.0 / 6.0]);
}

#[test]
fn startup_suggestions_are_uniform() {
    // with fewer completed trials than n_startup, suggest ignores the history
    let space = unit_x();
    let history: Vec<TrialRecord> = (0..5)
        .map(|index| TrialRecord {
            index,
            assignment: Assignment::from_pairs([("x", Value::Real(0.3))]),
            objective: Some(0.0),
            state: TrialState::Complete,
            message: None,
        })
        .collect();
    let config = tpe(0, 100, 0.1, Some(25));
    let mut r1 = StudyRng::seed_from_u64(3);
    let mut r2 = StudyRng::seed_from_u64(3);
    assert_eq!(
        suggest(&history, &space, &config, &mut r1),
        suggest(&[], &space, &config, &mut r2)
    );
}
