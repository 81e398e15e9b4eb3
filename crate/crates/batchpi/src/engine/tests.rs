use super::*;
use crate::combinatorics::FnStep;
use crate::types::order_statistics;
use proptest::prelude::*;
use rand::Rng;

fn p(s: &str) -> Probability {
    s.parse().unwrap()
}

fn upper_levels(alpha: &str) -> Levels {
    Levels::upper(p(alpha))
}

fn opts() -> EngineOptions {
    EngineOptions::exact()
}

#[test]
fn quantile_examples() {
    let id = RankOrderFn::OrderStat(1);
    let (_, qu) = rank_quantiles(&id, 9, 1, &upper_levels("0.1"), &opts()).unwrap();
    assert_eq!(qu, 9.0);

    let (ql, qu) = rank_quantiles(&RankOrderFn::sum(), 3, 2, &upper_levels("0.1"), &opts()).unwrap();
    assert_eq!(qu, 7.0);
    assert_eq!(ql, 2.0);
}

#[test]
fn sampled_matches_exact_at_interior_quantiles() {
    let levels = Levels::parse("0.2", "0.1", "0.1").unwrap();
    let exact = rank_quantiles(&RankOrderFn::sum(), 20, 5, &levels, &opts()).unwrap();
    let sampled = rank_quantiles(&RankOrderFn::sum(), 20, 5, &levels, &EngineOptions::sampled(1_000_000, 7)).unwrap();
    assert_eq!(exact, sampled);
    assert!(matches!(
        rank_quantiles(&RankOrderFn::sum(), 20, 5, &levels, &EngineOptions::sampled(999, 7)),
        Err(Error::SampleCountTooSmall(999))
    ));
}

#[test]
fn sampled_is_deterministic_given_seed() {
    let levels = upper_levels("0.1");
    let a = rank_quantiles(&RankOrderFn::mean(), 30, 4, &levels, &EngineOptions::sampled(5000, 11)).unwrap();
    let b = rank_quantiles(&RankOrderFn::mean(), 30, 4, &levels, &EngineOptions::sampled(5000, 11)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn endpoint_examples() {
    let s = order_statistics(&[1.0, 2.0, 3.0]).unwrap();
    let up = endpoint_upper(&s, 2, &BatchScoreFn::Sum, &RankOrderFn::sum(), 4.0, &opts()).unwrap();
    assert_eq!(up.value(), 4.0);
    let lo = endpoint_lower(&s, 2, &BatchScoreFn::Sum, &RankOrderFn::sum(), 6.0, &opts()).unwrap();
    assert_eq!(lo.value(), 4.0);
    // the top rank value pulls in the sentinel
    let top = endpoint_upper(&s, 2, &BatchScoreFn::Mean, &RankOrderFn::sum(), 8.0, &opts()).unwrap();
    assert_eq!(top, ExtendedScore::POS_INF);
    // below the smallest rank value nothing is admissible
    assert!(matches!(
        endpoint_upper(&s, 2, &BatchScoreFn::Sum, &RankOrderFn::sum(), 1.0, &opts()),
        Err(Error::NoFeasibleRank(_))
    ));
}

#[test]
fn single_test_point_endpoints_are_order_statistics() {
    let s = order_statistics(&[0.5, -1.0, 3.0, 2.0, 7.0, 1.5]).unwrap();
    let h = BatchScoreFn::OrderStat(1);
    let order = RankOrderFn::OrderStat(1);
    for q in 1..=7usize {
        let up = endpoint_upper(&s, 1, &h, &order, q as f64, &opts()).unwrap();
        assert_eq!(up, s.get(q));
        let lo = endpoint_lower(&s, 1, &h, &order, q as f64, &opts()).unwrap();
        assert_eq!(lo, s.get(q - 1));
    }
}

#[test]
fn empty_calibration_gives_trivial_interval() {
    let s = order_statistics(&[]).unwrap();
    let iv = batch_pi(&s, 3, &BatchScoreFn::Mean, &RankOrderFn::sum(), &Levels::two_sided(p("0.1")), &opts()).unwrap();
    assert_eq!(iv.lower(), ExtendedScore::NEG_INF);
    assert_eq!(iv.upper(), ExtendedScore::POS_INF);
}

#[test]
fn split_conformal_reduction() {
    let raw: Vec<f64> = (0..19).map(|i| ((i * 7) % 19) as f64 * 0.5).collect();
    let s = order_statistics(&raw).unwrap();
    for (alpha, rank) in [("0.1", 18usize), ("0.05", 19), ("0.2", 16), ("0.5", 10)] {
        for h in [BatchScoreFn::Mean, BatchScoreFn::OrderStat(1), BatchScoreFn::Sum] {
            let order = rank_order_from_h(&h).unwrap();
            let iv = batch_pi(&s, 1, &h, &order, &upper_levels(alpha), &opts()).unwrap();
            assert_eq!(iv.upper(), s.get(rank), "alpha={alpha} h={h:?}");
            assert_eq!(iv.lower(), ExtendedScore::NEG_INF);
        }
    }
}

#[test]
fn small_mean_instance_matches_oracle() {
    let s = order_statistics(&[0.4, 1.3, 0.9]).unwrap();
    let levels = upper_levels("0.1");
    let iv = batch_pi(&s, 2, &BatchScoreFn::Mean, &RankOrderFn::sum(), &levels, &opts()).unwrap();
    let oracle = oracle_batch_pi(&s, 2, &BatchScoreFn::Mean, &RankOrderFn::sum(), &levels, 200_000).unwrap();
    assert_eq!(iv, oracle.interval);
    assert_eq!(oracle.evaluations, 10);
    // 9 of the 10 rank pairs have sum <= 7; the best of them is (3, 4)
    assert_eq!(oracle.q_upper, 7.0);
    assert_eq!(iv.upper(), ExtendedScore::POS_INF);
    let iv = batch_pi(&s, 2, &BatchScoreFn::Mean, &RankOrderFn::sum(), &upper_levels("0.3"), &opts()).unwrap();
    // Q_0.7 of the sum is 6: pairs (2,4) and (3,3); (2,4) hits the sentinel
    assert_eq!(iv.upper(), ExtendedScore::POS_INF);
    // Q_0.4 is 4: pairs (1,1), (1,2), (1,3), (2,2); the largest mean is at (2,2)
    let iv = batch_pi(&s, 2, &BatchScoreFn::Mean, &RankOrderFn::sum(), &upper_levels("0.6"), &opts()).unwrap();
    assert_eq!(iv.upper().value(), 0.9);
}

#[test]
fn oracle_refuses_large_instances() {
    let raw: Vec<f64> = (0..40).map(f64::from).collect();
    let s = order_statistics(&raw).unwrap();
    let res = oracle_batch_pi(&s, 10, &BatchScoreFn::Mean, &RankOrderFn::sum(), &upper_levels("0.1"), 200_000);
    assert!(matches!(res, Err(Error::EnumerationCapExceeded { .. })));
}

#[test]
fn general_path_respects_cap() {
    let raw: Vec<f64> = (0..40).map(f64::from).collect();
    let s = order_statistics(&raw).unwrap();
    let h = BatchScoreFn::custom(|v| v.iter().sum::<f64>());
    let order = RankOrderFn::custom(|r| r.iter().sum::<usize>() as f64);
    let res = batch_pi(&s, 10, &h, &order, &upper_levels("0.1"), &opts());
    assert!(matches!(res, Err(Error::EnumerationCapExceeded { .. })));
    // the compositional route handles the same instance
    assert!(batch_pi(&s, 10, &BatchScoreFn::Sum, &RankOrderFn::sum(), &upper_levels("0.1"), &opts()).is_ok());
}

#[test]
fn one_sided_equals_two_sided_with_zero_beta() {
    let raw = [2.0, -0.5, 1.0, 4.0, 0.25, 3.5, 1.75];
    let s = order_statistics(&raw).unwrap();
    for alpha in ["0.05", "0.1", "0.25"] {
        let b = batch_pi_one_sided(&s, 3, &BatchScoreFn::Mean, &RankOrderFn::sum(), &p(alpha), &opts()).unwrap();
        let iv = batch_pi(&s, 3, &BatchScoreFn::Mean, &RankOrderFn::sum(), &upper_levels(alpha), &opts()).unwrap();
        assert_eq!(b, iv.upper());
    }
}

#[test]
fn rank_orders_from_h() {
    assert_eq!(rank_order_from_h(&BatchScoreFn::Mean).unwrap().eval(&[1, 2, 6]), 3.0);
    assert_eq!(rank_order_from_h(&BatchScoreFn::Sum).unwrap().eval(&[1, 2, 6]), 9.0);
    assert_eq!(rank_order_from_h(&BatchScoreFn::OrderStat(2)).unwrap().eval(&[1, 2, 6]), 2.0);
    let sparse = BatchScoreFn::sparse(vec![1, 3], |v| v[0] + 2.0 * v[1]);
    assert_eq!(rank_order_from_h(&sparse).unwrap().eval(&[1, 2, 6]), 13.0);
    let bad = BatchScoreFn::custom(|v| if v[0] >= 1.0 { f64::NAN } else { v[0] });
    assert!(matches!(rank_order_from_h(&bad), Err(Error::HNotDefinedOnIntegers)));
}

#[test]
fn rank_order_from_split_examples() {
    let split = order_statistics(&[5.0, 1.0, 3.0]).unwrap();
    let order = rank_order_from_split(&BatchScoreFn::Sum, &split, 3).unwrap();
    assert_eq!(order.eval(&[1, 3]), 6.0);
    assert_eq!(order.eval(&[2, 4]), f64::INFINITY);
    // strictly monotone along the simplex for strictly monotone h
    assert!(order.eval(&[1, 1]) < order.eval(&[1, 2]) && order.eval(&[1, 2]) < order.eval(&[2, 2]));
    let empty = order_statistics(&[]).unwrap();
    assert!(matches!(rank_order_from_split(&BatchScoreFn::Sum, &empty, 0), Err(Error::SplitTooSmall { .. })));
    assert!(matches!(rank_order_from_split(&BatchScoreFn::Sum, &split, 4), Err(Error::SplitTooSmall { .. })));
}

#[test]
fn split_ordering_gives_valid_interval() {
    let cal = order_statistics(&[0.3, 1.2, 0.8, 2.2, 1.7, 0.1, 0.9]).unwrap();
    let split = order_statistics(&[0.2, 1.0, 0.7, 2.5, 1.4, 0.05, 1.1]).unwrap();
    let order = rank_order_from_split(&BatchScoreFn::Mean, &split, cal.n()).unwrap();
    let levels = Levels::two_sided(p("0.2"));
    let iv = batch_pi(&cal, 3, &BatchScoreFn::Mean, &order, &levels, &opts()).unwrap();
    let oracle = oracle_batch_pi(&cal, 3, &BatchScoreFn::Mean, &order, &levels, 200_000).unwrap();
    assert_eq!(iv, oracle.interval);
}

#[test]
fn monotonicity_check_flags_decreasing_scores() {
    assert!(BatchScoreFn::Mean.check_monotone(5, 200, 1).is_ok());
    assert!(BatchScoreFn::OrderStat(3).check_monotone(5, 200, 1).is_ok());
    let neg = BatchScoreFn::custom(|v| -v.iter().sum::<f64>());
    assert!(matches!(neg.check_monotone(5, 200, 1), Err(Error::NotMonotone(_))));
}

#[test]
fn nan_from_opposite_infinities_is_reported() {
    assert_eq!(BatchScoreFn::Sum.eval(&[f64::NEG_INFINITY, f64::INFINITY]), Err(Error::UndefinedAtSentinels));
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> CalibrationScores {
    let raw: Vec<f64> = (0..n).map(|_| (rng.random_range(-50..50) as f64) / 8.0).collect();
    order_statistics(&raw).unwrap()
}

fn random_levels(rng: &mut ChaCha8Rng) -> Levels {
    let alpha = rng.random_range(1..=40u64);
    let beta = rng.random_range(0..=alpha);
    Levels::new(
        Probability::from_ratio(alpha, 100).unwrap(),
        Probability::from_ratio(beta, 100).unwrap(),
        Probability::from_ratio(alpha - beta, 100).unwrap(),
    )
    .unwrap()
}

#[test]
fn random_instances_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let n = rng.random_range(0..=12);
        let m = rng.random_range(1..=6);
        let s = random_scores(&mut rng, n);
        let levels = random_levels(&mut rng);
        let zeta = rng.random_range(1..=m);
        for h in [BatchScoreFn::Mean, BatchScoreFn::Sum, BatchScoreFn::OrderStat(zeta)] {
            let order = rank_order_from_h(&h).unwrap();
            let fast = batch_pi_report(&s, m, &h, &order, &levels, &opts()).unwrap();
            let slow = oracle_batch_pi(&s, m, &h, &order, &levels, 200_000).unwrap();
            assert_eq!(fast.interval, slow.interval, "case {case} n={n} m={m} h={h:?}");
            assert_eq!((fast.q_lower, fast.q_upper), (slow.q_lower, slow.q_upper), "case {case}");
        }
    }
}

#[test]
fn custom_compositional_rank_step_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let order = RankOrderFn::compositional(FnStep(|a: u64, r: u64| a + r * r));
    for _ in 0..40 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=4);
        let s = random_scores(&mut rng, n);
        let levels = random_levels(&mut rng);
        let fast = batch_pi(&s, m, &BatchScoreFn::Sum, &order, &levels, &opts()).unwrap();
        let slow = oracle_batch_pi(&s, m, &BatchScoreFn::Sum, &order, &levels, 200_000).unwrap();
        assert_eq!(fast, slow.interval);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shrinking_gamma_never_shrinks_upper(
        raw in prop::collection::vec(-20i32..20, 1..9),
        m in 1usize..4,
        g1 in 1u64..30,
        g2 in 1u64..30,
    ) {
        let s = order_statistics(&raw.iter().map(|&x| f64::from(x)).collect::<Vec<_>>()).unwrap();
        let (small, large) = (g1.min(g2), g1.max(g2));
        let a = batch_pi_one_sided(&s, m, &BatchScoreFn::Mean, &RankOrderFn::sum(), &Probability::from_ratio(small, 100).unwrap(), &opts()).unwrap();
        let b = batch_pi_one_sided(&s, m, &BatchScoreFn::Mean, &RankOrderFn::sum(), &Probability::from_ratio(large, 100).unwrap(), &opts()).unwrap();
        prop_assert!(a >= b);
    }

    #[test]
    fn shrinking_beta_never_raises_lower(
        raw in prop::collection::vec(-20i32..20, 1..9),
        m in 1usize..4,
        b1 in 0u64..30,
        b2 in 0u64..30,
    ) {
        let s = order_statistics(&raw.iter().map(|&x| f64::from(x)).collect::<Vec<_>>()).unwrap();
        let (small, large) = (b1.min(b2), b1.max(b2));
        let lv = |b: u64| Levels::lower(Probability::from_ratio(b, 100).unwrap());
        let lo_small = batch_pi(&s, m, &BatchScoreFn::Sum, &RankOrderFn::sum(), &lv(small), &opts()).unwrap().lower();
        let lo_large = batch_pi(&s, m, &BatchScoreFn::Sum, &RankOrderFn::sum(), &lv(large), &opts()).unwrap().lower();
        prop_assert!(lo_small <= lo_large);
    }

    #[test]
    fn strictly_increasing_reordering_leaves_interval(
        raw in prop::collection::vec(-20i32..20, 0..8),
        m in 1usize..4,
        alpha in 1u64..40,
    ) {
        let s = order_statistics(&raw.iter().map(|&x| f64::from(x)).collect::<Vec<_>>()).unwrap();
        let levels = Levels::two_sided(Probability::from_ratio(alpha, 100).unwrap());
        let plain = batch_pi(&s, m, &BatchScoreFn::Mean, &RankOrderFn::sum(), &levels, &opts()).unwrap();
        let warped = RankOrderFn::custom(|r| {
            let t = r.iter().sum::<usize>() as f64;
            t * t * t + 2.0 * t
        });
        let other = batch_pi(&s, m, &BatchScoreFn::Mean, &warped, &levels, &opts()).unwrap();
        prop_assert_eq!(plain, other);
    }
}
