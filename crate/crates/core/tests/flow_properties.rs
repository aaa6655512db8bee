mod common;

use common::{liouville_defect, max_abs_diff, round_trip_error, variational_fd_defect};
use langford::flow::{flow_map, next_section_crossing};
use langford::model::{axis_equilibria, eval_field, eval_jacobian, ModelParams};
use nalgebra::Matrix3;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = [f64; 3]> {
    [-1.0f64..1.0, -1.0f64..1.0, -0.5f64..1.5]
}

fn alpha() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.7, 0.82, 0.95, 1.1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_backward_round_trip(y0 in point(), a in prop::sample::select(vec![0.0, 0.7, 0.82])) {
        // start on the settled dynamics: off the attractor, backward runs
        // amplify local errors by the full transverse contraction
        let tol = 1e-11;
        let p = ModelParams::with_alpha(a);
        let x0 = flow_map(y0, 20.0, &p, 1e-10).unwrap();
        let err = round_trip_error(x0, 5.0, &p, tol);
        prop_assert!(err < 100.0 * tol, "err {err:e}");
    }

    #[test]
    fn liouville(x0 in point(), a in alpha(), t in 0.5f64..6.0) {
        let d = liouville_defect(x0, t, &ModelParams::with_alpha(a), 1e-11);
        prop_assert!(d < 1e-6, "defect {d:e}");
    }

    #[test]
    fn variational_matches_differences(x0 in point(), v in [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0],
                                       a in alpha(), t in 0.5f64..4.0) {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-3);
        let v = [v[0] / n, v[1] / n, v[2] / n];
        let d = variational_fd_defect(x0, v, t, &ModelParams::with_alpha(a), 1e-12, 1e-5);
        prop_assert!(d < 1e-5, "defect {d:e}");
    }

    #[test]
    fn axis_field_is_structurally_zero(z in -5.0f64..5.0, a in alpha()) {
        let f = eval_field(&[0.0, 0.0, z], &ModelParams::with_alpha(a));
        prop_assert!(f[0] == 0.0 && f[1] == 0.0);
    }
}

#[test]
fn jacobian_matches_central_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    for a in [0.0, 0.7, 0.95, 1.1] {
        let p = ModelParams::with_alpha(a);
        for _ in 0..100 {
            let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
            let j = eval_jacobian(&x, &p);
            let mut fd = Matrix3::zeros();
            for c in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[c] += h;
                xm[c] -= h;
                let (fp, fm) = (eval_field(&xp, &p), eval_field(&xm, &p));
                for r in 0..3 {
                    fd[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
            let rel = (fd - j).amax() / j.amax();
            assert!(rel < 1e-5, "alpha {a} at {x:?}: {rel:e}");
        }
    }
}

#[test]
fn equilibrium_spectra_solve_characteristic_polynomial() {
    for a in [0.0, 0.7, 0.95, 1.1] {
        let p = ModelParams::with_alpha(a);
        for e in axis_equilibria(&p) {
            let j = eval_jacobian(&e.point, &p).map(|v| num_complex::Complex64::new(v, 0.0));
            for lam in [e.lambda_pair, num_complex::Complex64::new(e.lambda_real, 0.0)] {
                let det = (j - Matrix3::identity() * lam).determinant();
                assert!(det.norm() < 1e-10, "alpha {a}: {det}");
            }
        }
    }
}

#[test]
fn error_shrinks_with_tolerance() {
    // error is proportional to tol, so each halving should gain at least 2x
    let p = ModelParams::with_alpha(0.7);
    let x0 = [0.3, -0.2, 0.5];
    let reference = flow_map(x0, 5.0, &p, 1e-13).unwrap();
    let err = |tol: f64| max_abs_diff(&flow_map(x0, 5.0, &p, tol).unwrap(), &reference);
    for e in 6..=11 {
        let tol = 10f64.powi(-e);
        let (coarse, fine) = (err(tol), err(tol / 2.0));
        assert!(coarse >= 2.0 * fine, "tol {tol:e}: {coarse:e} -> {fine:e}");
    }
}

#[test]
fn crossing_is_deterministic() {
    let p = ModelParams::with_alpha(0.82);
    let a = next_section_crossing([0.2, 0.8, 0.6], &p, 1e-12).unwrap();
    let b = next_section_crossing([0.2, 0.8, 0.6], &p, 1e-12).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.to_bits(), b.1.to_bits());
}
