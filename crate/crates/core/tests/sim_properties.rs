use csi_sched::region::{achievability_weights, region_full, Achievability};
use csi_sched::sim::metrics::{DEPARTURES, QUEUE};
use csi_sched::sim::{detect_stability, run, run_replications, ArrivalSpec, PolicySpec, Scenario, Stability, AGGREGATE};
use csi_sched::{JointStatistics, RatePoint, RateSpace};

fn window_mean(m: &csi_sched::sim::Metrics, lo: f64, hi: f64) -> f64 {
    let h = m.horizon as f64;
    let q = m.series(QUEUE, AGGREGATE).unwrap();
    let pts: Vec<f64> = m
        .slots
        .iter()
        .zip(&q.values)
        .filter(|(&s, _)| s as f64 > lo * h && s as f64 <= hi * h)
        .map(|(_, &v)| v)
        .collect();
    pts.iter().sum::<f64>() / pts.len() as f64
}

#[test]
fn perfect_estimator_at_half_load_stays_bounded() {
    let rates = RateSpace::new(vec![1.0, 2.0, 3.0]).unwrap();
    let js = JointStatistics::perfect(rates, &[0.3, 0.4, 0.3], 1).unwrap();
    // E[C] = 2, so λ = 1.
    let s = Scenario::new(js, PolicySpec::Psi, ArrivalSpec::bernoulli(2.0, vec![1.0]), 200_000);
    let m = run(&s, 21).unwrap();
    assert!(window_mean(&m, 0.9, 1.0) < 2.0 * window_mean(&m, 0.4, 0.6).max(1.0));
    assert_eq!(detect_stability(&m), Stability::Stable);
}

#[test]
fn success_rate_converges_to_the_adapted_probability() {
    // The estimate always reads rank 1, so P(C ≥ r) drives every decision:
    // values 1, 1.6, 1.5 put the adapted rate at 2 with success 0.8.
    let rates = RateSpace::new(vec![1.0, 2.0, 3.0]).unwrap();
    let js = JointStatistics::independent(rates, &[0.2, 0.3, 0.5], &[0.0, 1.0, 0.0], 1).unwrap();
    let s = Scenario::new(js, PolicySpec::Psi, ArrivalSpec::bernoulli(2.0, vec![2.0]), 100_000);
    let m = run(&s, 4).unwrap();
    let c = m.totals[0];
    let p_hat = c.successes as f64 / c.attempts as f64;
    let se = (0.8 * 0.2 / c.attempts as f64).sqrt();
    assert!((p_hat - 0.8).abs() <= 3.0 * se, "{p_hat}");
}

#[test]
fn departures_match_arrivals_when_stable() {
    let js = JointStatistics::two_level(0.2, 1.0, 0.8, 0.8, 2).unwrap();
    let lambda = [0.3, 0.25];
    let s = Scenario::new(js, PolicySpec::Psi, ArrivalSpec::bernoulli(1.0, lambda.to_vec()), 200_000);
    let m = run(&s, 6).unwrap();
    for (u, &l) in lambda.iter().enumerate() {
        let served = *m.series(DEPARTURES, u as i64).unwrap().values.last().unwrap() / m.horizon as f64;
        assert!((served - l).abs() <= 0.02 * l, "user {u}: {served} vs {l}");
    }
}

fn boundary_point(region: &csi_sched::RegionTerms, angle: f64, factor: f64) -> Vec<f64> {
    let d = [angle.cos(), angle.sin()];
    let t = region.radial_extent(&d).unwrap();
    vec![factor * t * d[0], factor * t * d[1]]
}

#[test]
fn psi_is_stable_inside_and_unstable_outside() {
    let js = JointStatistics::two_level(0.2, 1.0, 0.8, 0.7, 2).unwrap();
    let region = region_full(&js.success_table().unwrap(), 2).unwrap();
    for (angle, factor, want) in [(0.5, 0.9, Stability::Stable), (1.1, 1.1, Stability::Unstable)] {
        let lambda = boundary_point(&region, angle, factor);
        let s = Scenario::new(js.clone(), PolicySpec::Psi, ArrivalSpec::bernoulli(1.0, lambda), 200_000);
        assert_eq!(detect_stability(&run_replications(&s, 4, 50).unwrap()), want);
    }
}

#[test]
fn randomized_reference_policy_supports_its_target() {
    let js = JointStatistics::two_level(0.2, 1.0, 0.8, 0.7, 2).unwrap();
    let region = region_full(&js.success_table().unwrap(), 2).unwrap();
    let lambda = boundary_point(&region, 0.7, 0.9);
    let slack = 0.05 * lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    let Achievability::Feasible(weights) =
        achievability_weights(&region, &RatePoint::new(lambda.clone()).unwrap(), slack).unwrap()
    else {
        panic!("0.9 of the boundary must be achievable");
    };
    let service = weights.service(&region);
    for (s, l) in service.iter().zip(&lambda) {
        assert!(*s >= l + slack - 1e-9);
    }
    let s = Scenario::new(js, PolicySpec::Reference { region, weights }, ArrivalSpec::bernoulli(1.0, lambda), 200_000);
    assert_eq!(detect_stability(&run_replications(&s, 4, 70).unwrap()), Stability::Stable);
}
