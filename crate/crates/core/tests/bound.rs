use approx::assert_relative_eq;
use fsrdp::math::{b_tilde, moment, remainder_bound, renyi_step_bound, MechanismParams, RenyiOrder, TaylorOrder};
use fsrdp::oracle::{mc_moment, oracle_renyi, taylor_remainder_quadrature};
use fsrdp::{Real, Wide};
use proptest::prelude::*;

fn order(a: f64) -> RenyiOrder {
    RenyiOrder::new(a).unwrap()
}

const ALPHAS: [f64; 6] = [1.5, 2.0, 4.0, 8.0, 16.0, 32.0];
const QS: [f64; 4] = [0.001, 0.01, 0.05, 0.2];
const SIGMAS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

#[test]
fn b_tilde_examples() {
    let m2: f64 = moment(2.0, 2).unwrap();
    let m4: f64 = moment(2.0, 4).unwrap();
    assert_eq!(b_tilde::<f64>(2.0, 2).unwrap(), m2);
    assert_relative_eq!(b_tilde::<f64>(2.0, 3).unwrap(), (m2 * m4).sqrt(), max_relative = 1e-15);
    assert_eq!(b_tilde::<f64>(1.0, 4).unwrap(), moment::<f64>(1.0, 4).unwrap());
}

#[test]
fn odd_moment_matches_monte_carlo() {
    let exact: f64 = moment(1.0, 3).unwrap();
    let mc = mc_moment(1.0, 3, 2_000_000, 5).unwrap();
    assert!((exact - mc.mean).abs() < 3.0 * mc.std_err, "{exact} vs {mc:?}");
}

#[test]
fn remainder_examples() {
    assert_eq!(remainder_bound::<f64>(order(2.5), 2.0, 3, 0.0).unwrap(), 0.0);
    assert_eq!(remainder_bound::<f64>(order(3.0), 2.0, 4, 0.1).unwrap(), 0.0);
    assert!(remainder_bound::<f64>(order(3.0), 2.0, 4, 1.0).is_err());
    let bound: f64 = remainder_bound(order(10.0), 4.0, 5, 0.01).unwrap();
    let exact = taylor_remainder_quadrature(order(10.0), 4.0, 5, 0.01).unwrap();
    assert!(exact > 0.0 && bound >= exact, "bound {bound} vs quadrature {exact}");
}

#[test]
fn fixed_order_example_dominates_with_gap_below_remainder() {
    let (a, q, sigma) = (8.0, 0.02, 3.0);
    let b = renyi_step_bound::<f64>(order(a), &MechanismParams::new(q, sigma, TaylorOrder::Fixed(6)).unwrap()).unwrap();
    let o = oracle_renyi(order(a), q, sigma).unwrap();
    assert_eq!(b.order, 6);
    assert!(b.bound >= o);
    let gap = ((a - 1.0) * b.bound).exp() - ((a - 1.0) * o).exp();
    assert!(gap <= b.remainder + 1e-12);
}

#[test]
fn zero_sampling_ratio_is_exactly_zero() {
    let b = renyi_step_bound::<Wide>(order(4.0), &MechanismParams::new(0.0, 2.0, TaylorOrder::Fixed(5)).unwrap()).unwrap();
    assert_eq!(b.bound, 0.0);
    assert_eq!(oracle_renyi(order(4.0), 0.0, 2.0).unwrap(), 0.0);
}

#[test]
fn oracle_is_monotone_on_the_grid() {
    let tol = |x: f64| 1e-12 * x.abs().max(1e-300);
    let mut table = vec![vec![vec![0.0; SIGMAS.len()]; QS.len()]; ALPHAS.len()];
    for (i, &a) in ALPHAS.iter().enumerate() {
        for (j, &q) in QS.iter().enumerate() {
            for (k, &s) in SIGMAS.iter().enumerate() {
                table[i][j][k] = oracle_renyi(order(a), q, s).unwrap();
            }
        }
    }
    for i in 0..ALPHAS.len() {
        for j in 0..QS.len() {
            for k in 0..SIGMAS.len() {
                let v = table[i][j][k];
                if i + 1 < ALPHAS.len() {
                    assert!(table[i + 1][j][k] >= v - tol(v), "alpha at {i},{j},{k}");
                }
                if j + 1 < QS.len() {
                    assert!(table[i][j + 1][k] >= v - tol(v), "q at {i},{j},{k}");
                }
                if k + 1 < SIGMAS.len() {
                    assert!(table[i][j][k + 1] <= v + tol(v), "sigma at {i},{j},{k}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bound_dominates_oracle(alpha in 1.05f64..40.0, q in 1e-4f64..0.3, sigma in 0.8f64..10.0) {
        let b = renyi_step_bound::<Wide>(order(alpha), &MechanismParams::adaptive(q, sigma).unwrap()).unwrap();
        let o = oracle_renyi(order(alpha), q, sigma).unwrap();
        prop_assert!(b.bound >= o - 1e-12 * o.max(1.0), "bound {} < oracle {}", b.bound, o);
        prop_assert!(b.remainder >= Wide::from_f64(0.0));
    }

    #[test]
    fn remainder_bound_covers_true_remainder(alpha in 1.1f64..12.0, m in 3u32..8, q in 1e-3f64..0.2, sigma in 2.0f64..6.0) {
        let bound: f64 = remainder_bound(order(alpha), sigma, m, q).unwrap();
        let exact = taylor_remainder_quadrature(order(alpha), sigma, m, q).unwrap();
        prop_assert!(bound >= 0.0);
        prop_assert!(exact.abs() <= bound * (1.0 + 1e-8) + 1e-15, "|R| = {} > {}", exact.abs(), bound);
    }

    #[test]
    fn wide_and_f64_bounds_agree_in_range(alpha in 1.1f64..16.0, q in 1e-4f64..0.3, sigma in 2.0f64..10.0) {
        let p = MechanismParams::adaptive(q, sigma).unwrap();
        let narrow = renyi_step_bound::<f64>(order(alpha), &p).unwrap();
        let wide = renyi_step_bound::<Wide>(order(alpha), &p).unwrap();
        prop_assert_eq!(narrow.order, wide.order);
        prop_assert!((narrow.bound - wide.bound).abs() <= 1e-12 * wide.bound.max(1e-300));
        prop_assert!((narrow.remainder - wide.remainder.to_f64()).abs() <= 1e-12 * narrow.remainder.max(1e-300));
    }
}
