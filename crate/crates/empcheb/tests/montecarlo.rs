use empcheb::montecarlo::{convergence_sweep, draw, lemma1_trial, validate_bound, DistributionSpec};
use empcheb_core::Quantity;

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let specs = [
        DistributionSpec::standard_gaussian(3),
        DistributionSpec::student_t(2, 3.0),
        DistributionSpec::two_point(vec![-1.0, -1.0], vec![3.0, 3.0], 0.35),
    ];
    for spec in &specs {
        let run = |threads| pool(threads).install(|| validate_bound(spec, 40, &Quantity::integer(4), 4000, 7).unwrap());
        let one = run(1);
        assert_eq!(one, run(4), "{}", spec.name());
        assert_eq!(one, run(3), "{}", spec.name());
    }
}

#[test]
fn seeds_and_streams_are_reproducible() {
    let spec = DistributionSpec::unit_box(4);
    let a = draw(&spec, 11, 5, 50).unwrap();
    assert_eq!(a, draw(&spec, 11, 5, 50).unwrap());
    assert_ne!(a, draw(&spec, 11, 6, 50).unwrap());
    assert_ne!(a, draw(&spec, 12, 5, 50).unwrap());
    assert!(a.iter().flatten().all(|v| (-1.0..1.0).contains(v)));
}

#[test]
fn different_seeds_change_the_estimate_only() {
    let spec = DistributionSpec::standard_gaussian(2);
    let a = validate_bound(&spec, 20, &Quantity::integer(4), 3000, 1).unwrap();
    let b = validate_bound(&spec, 20, &Quantity::integer(4), 3000, 2).unwrap();
    assert_eq!(a.bound, b.bound);
    assert_ne!(a.events, b.events);
    assert!(a.pass && b.pass);
}

#[test]
fn sweep_gap_shrinks() {
    let rows = convergence_sweep(2, &Quantity::integer(9), &[100, 1000, 10_000]).unwrap();
    assert!(rows.windows(2).all(|w| w[1].gap.abs() < w[0].gap.abs()));
}

#[test]
fn whitening_trial_is_clean_and_reproducible() {
    let grid = [1.0, 2.0, 4.0, 9.0];
    let a = lemma1_trial(3, 40, &grid, 99).unwrap();
    assert_eq!(a.violations, 0);
    assert_eq!(a, lemma1_trial(3, 40, &grid, 99).unwrap());
}
