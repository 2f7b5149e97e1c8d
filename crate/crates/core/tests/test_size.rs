use rand::Rng;
use rand_distr::StandardNormal;
use raid_core::ptest::{permutation_test, polya_tree_statistic};

#[test]
fn rejection_rate_under_the_null_is_nominal() {
    let mut rng = raid_core::seed::rng(99);
    let reps = 400;
    let mut rejected = 0;
    for _ in 0..reps {
        let groups: Vec<Vec<f64>> = (0..4).map(|_| (0..50).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let r = permutation_test(&groups, 500, &mut rng).unwrap();
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        rejected += usize::from(r.p_value <= 0.05);
    }
    let rate = rejected as f64 / reps as f64;
    assert!((0.03..=0.08).contains(&rate), "rejection rate {rate}");
}

#[test]
fn identical_constant_groups_give_p_one() {
    let mut rng = raid_core::seed::rng(1);
    let groups = vec![vec![3.0; 40]; 4];
    assert_eq!(permutation_test(&groups, 200, &mut rng).unwrap().p_value, 1.0);
}

#[test]
fn separated_groups_are_rejected() {
    let mut rng = raid_core::seed::rng(5);
    let groups: Vec<Vec<f64>> = (0..3)
        .map(|g| (0..50).map(|_| 2.0 * g as f64 + rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let r = permutation_test(&groups, 500, &mut rng).unwrap();
    assert!(r.p_value < 0.01, "{}", r.p_value);
    assert!(polya_tree_statistic(&groups, None, 1.0).unwrap().is_finite());
}

#[test]
fn lm_size_on_permuted_responses() {
    use raid_core::data::{Dataset, Response};
    use raid_core::simgen::{generate, lm_detect, GeneratorSpec, ToyScenario};
    use rand::seq::SliceRandom;

    let alpha = 0.05;
    let reps = 400;
    let mut hits = [0usize; 3];
    let mut rng = raid_core::seed::rng(77);
    for r in 0..reps {
        let ds = generate(&GeneratorSpec::toy(ToyScenario::F1, 500), r).unwrap();
        let Response::Continuous(mut y) = ds.response().clone() else { unreachable!() };
        y.shuffle(&mut rng);
        let columns = (0..ds.n_columns()).map(|j| ds.column(j).clone()).collect();
        let permuted = Dataset::new(ds.columns().to_vec(), columns, Response::Continuous(y)).unwrap();
        for (h, t) in hits.iter_mut().zip(lm_detect(&permuted, alpha).unwrap()) {
            *h += usize::from(t.detected);
        }
    }
    for h in hits {
        let rate = h as f64 / reps as f64;
        assert!(rate >= alpha / 2.0 && rate <= 2.0 * alpha, "per-pair rate {rate}");
    }
}
