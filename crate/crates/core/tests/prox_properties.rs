use hsl_core::matrix::{norm2, DenseMatrix};
use hsl_core::prox::{columnwise_l2_prox, elementwise_l1_prox, l1_prox, l2_prox, lf_project};
use proptest::prelude::*;

fn l2_objective(y: &[f64], x: &[f64], u: f64) -> f64 {
    let d: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * d + u * norm2(y)
}

/// Minimizer of `½‖y − x‖² + u‖y‖` over `y = t·x/‖x‖`, `t ≥ 0`, by grid search
/// with successive refinement. The minimizer lies on that ray by symmetry.
fn l2_grid_oracle(x: &[f64], u: f64) -> Vec<f64> {
    let nrm = norm2(x);
    if nrm == 0.0 {
        return vec![0.0; x.len()];
    }
    let dir: Vec<f64> = x.iter().map(|v| v / nrm).collect();
    let f = |t: f64| {
        let y: Vec<f64> = dir.iter().map(|d| d * t).collect();
        l2_objective(&y, x, u)
    };
    let t = refine(f, 0.0, nrm);
    dir.iter().map(|d| d * t).collect()
}

fn l1_grid_oracle(b: f64, u: f64) -> f64 {
    let f = |y: f64| 0.5 * (y - b) * (y - b) + u * y.abs();
    let lo = b.min(0.0);
    let hi = b.max(0.0);
    refine(f, lo, hi)
}

fn refine(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let points = 201;
    let mut best = lo;
    for _ in 0..12 {
        let step = (hi - lo) / (points - 1) as f64;
        let mut best_val = f64::INFINITY;
        for i in 0..points {
            let t = lo + step * i as f64;
            let v = f(t);
            if v < best_val {
                best_val = v;
                best = t;
            }
        }
        let (a, b) = (best - step, best + step);
        lo = lo.max(a);
        hi = hi.min(b);
    }
    best
}

fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn l2_prox_matches_grid_oracle(x in vec_strategy(), u in 0.0f64..15.0) {
        let got = l2_prox(&x, u).unwrap();
        let want = l2_grid_oracle(&x, u);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-6, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn l1_prox_matches_grid_oracle(b in -10.0f64..10.0, u in 0.0f64..12.0) {
        let got = l1_prox(b, u).unwrap();
        prop_assert!((got - l1_grid_oracle(b, u)).abs() < 1e-6);
    }

    #[test]
    fn l2_prox_is_nonexpansive(x in prop::collection::vec(-5.0f64..5.0, 4), y in prop::collection::vec(-5.0f64..5.0, 4), u in 0.0f64..4.0) {
        let px = l2_prox(&x, u).unwrap();
        let py = l2_prox(&y, u).unwrap();
        let d_in: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let d_out: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        prop_assert!(norm2(&d_out) <= norm2(&d_in) + 1e-12);
    }

    #[test]
    fn l1_prox_is_nonexpansive(a in -5.0f64..5.0, b in -5.0f64..5.0, u in 0.0f64..4.0) {
        let d = (l1_prox(a, u).unwrap() - l1_prox(b, u).unwrap()).abs();
        prop_assert!(d <= (a - b).abs() + 1e-15);
    }

    #[test]
    fn support_only_shrinks_with_threshold(v in prop::collection::vec(-5.0f64..5.0, 1..20), u in 0.0f64..3.0, extra in 0.0f64..3.0) {
        let small = elementwise_l1_prox(&v, &vec![u; v.len()]).unwrap();
        let large = elementwise_l1_prox(&v, &vec![u + extra; v.len()]).unwrap();
        for (s, l) in small.iter().zip(&large) {
            prop_assert!(*s != 0.0 || *l == 0.0);
            prop_assert!(l.abs() <= s.abs());
        }
    }

    #[test]
    fn projection_lands_in_ball_and_is_idempotent(data in prop::collection::vec(-3.0f64..3.0, 12)) {
        let m = DenseMatrix::from_vec(3, 4, data).unwrap();
        let p = lf_project(&m);
        prop_assert!(p.frobenius_norm() <= 1.0 + 1e-12);
        let pp = lf_project(&p);
        prop_assert!(pp.sub(&p).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn columnwise_prox_acts_per_column(data in prop::collection::vec(-3.0f64..3.0, 12), t in prop::collection::vec(0.0f64..4.0, 4)) {
        let m = DenseMatrix::from_vec(3, 4, data).unwrap();
        let out = columnwise_l2_prox(&m, &t).unwrap();
        for j in 0..4 {
            let want = l2_prox(&m.column(j), t[j]).unwrap();
            prop_assert_eq!(out.column(j), want);
        }
    }
}
