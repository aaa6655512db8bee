//! The Langford vector field, its Jacobian and the equilibria on the
//! invariant z-axis.
//!
//! On the axis the field reduces to `z' = g(z) = tau + alpha z - z^3/3`,
//! so equilibria are the real roots of a cubic and their spectra are known
//! in closed form: the rotation block contributes `(z - beta) +- i delta`
//! and the axis direction contributes `g'(z) = alpha - z^2`.
//!
//! The saddle-node of axis equilibria sits where `g = g' = 0`. From
//! `g'(z) = 0` we get `z = -sqrt(alpha)`, and substituting into `g` gives
//! `tau = (2/3) alpha^{3/2}`, i.e. `alpha = (3 tau / 2)^{2/3}`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub delta: f64,
    pub beta: f64,
    pub zeta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            epsilon: 0.25,
            tau: 0.6,
            delta: 3.5,
            beta: 0.7,
            zeta: 0.1,
        }
    }
}

impl ModelParams {
    /// Default parameter set with the given bifurcation parameter.
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    /// The axis subsystem `g(z)`.
    pub fn axis_g(&self, z: f64) -> f64 {
        self.tau + self.alpha * z - z * z * z / 3.0
    }

    pub fn axis_dg(&self, z: f64) -> f64 {
        self.alpha - z * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityTag {
    /// Unstable complex pair, stable axis direction (p0).
    SaddleFocus2u1s,
    /// Stable complex pair, unstable axis direction (p1).
    SaddleFocus2s1u,
    /// All directions stable (p2). The degenerate fold point is also tagged
    /// `Sink` with its zero axis eigenvalue reported as is.
    Sink,
}

impl StabilityTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityTag::SaddleFocus2u1s => "saddle_focus_2u1s",
            StabilityTag::SaddleFocus2s1u => "saddle_focus_2s1u",
            StabilityTag::Sink => "sink",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub z_star: f64,
    pub point: [f64; 3],
    /// `(z* - beta) + i delta`; the conjugate is the other member of the pair.
    pub lambda_pair: Complex64,
    pub lambda_real: f64,
    pub stability_tag: StabilityTag,
}

impl Equilibrium {
    pub fn from_root(z_star: f64, params: &ModelParams) -> Self {
        let pair = Complex64::new(z_star - params.beta, params.delta);
        let lambda_real = params.alpha - z_star * z_star;
        let stability_tag = if pair.re > 0.0 {
            StabilityTag::SaddleFocus2u1s
        } else if lambda_real > 0.0 {
            StabilityTag::SaddleFocus2s1u
        } else {
            StabilityTag::Sink
        };
        Self {
            z_star,
            point: [0.0, 0.0, z_star],
            lambda_pair: pair,
            lambda_real,
            stability_tag,
        }
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda_pair
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.point)
    }

    /// Eigenvector for `lambda_pair` (the `+ i delta` member), unit length.
    pub fn pair_eigenvector(&self) -> [Complex64; 3] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        [
            Complex64::new(r, 0.0),
            Complex64::new(0.0, -r),
            Complex64::new(0.0, 0.0),
        ]
    }
}

/// Evaluates the vector field.
#[inline]
pub fn eval_field(x: &[f64; 3], p: &ModelParams) -> [f64; 3] {
    let [x, y, z] = *x;
    let zb = z - p.beta;
    [
        zb * x - p.delta * y,
        p.delta * x + zb * y,
        p.tau + p.alpha * z - z * z * z / 3.0 - (x * x + y * y) * (1.0 + p.epsilon * z)
            + p.zeta * z * x * x * x,
    ]
}

/// Jacobian matrix of the field.
#[inline]
pub fn eval_jacobian(x: &[f64; 3], p: &ModelParams) -> Matrix3<f64> {
    let [x, y, z] = *x;
    let zb = z - p.beta;
    let q = 1.0 + p.epsilon * z;
    Matrix3::new(
        zb,
        -p.delta,
        x,
        p.delta,
        zb,
        y,
        -2.0 * x * q + 3.0 * p.zeta * z * x * x,
        -2.0 * y * q,
        p.alpha - z * z - p.epsilon * (x * x + y * y) + p.zeta * x * x * x,
    )
}

/// Saddle-node value of the axis equilibria, `(3 tau / 2)^{2/3}`.
pub fn saddle_node_alpha(tau: f64) -> f64 {
    (1.5 * tau).powf(2.0 / 3.0)
}

/// Real roots of `g`, descending.
pub fn axis_roots(params: &ModelParams) -> Vec<f64> {
    let (alpha, tau) = (params.alpha, params.tau);
    // z^3 - 3 alpha z - 3 tau = 0; discriminant of the depressed cubic.
    let disc = 108.0 * alpha.powi(3) - 243.0 * tau * tau;
    let disc_tol = 1e-12 * (243.0 * tau * tau).max(1.0);
    let mut roots = if disc > disc_tol {
        let r = 2.0 * alpha.sqrt();
        let arg = (1.5 * tau / alpha.powf(1.5)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect::<Vec<_>>()
    } else if disc.abs() <= disc_tol {
        let s = alpha.sqrt();
        vec![2.0 * s, -s]
    } else {
        let h = 1.5 * tau;
        let w = (h * h - alpha.powi(3)).sqrt();
        vec![(h + w).cbrt() + (h - w).cbrt()]
    };
    for z in roots.iter_mut() {
        let d = params.axis_dg(*z);
        if d.abs() > 1e-6 {
            *z -= params.axis_g(*z) / d;
        }
    }
    roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
    roots
}

/// Axis equilibria sorted by descending `z*`; the first entry is `p0`.
pub fn axis_equilibria(params: &ModelParams) -> Vec<Equilibrium> {
    axis_roots(params)
        .into_iter()
        .map(|z| Equilibrium::from_root(z, params))
        .collect()
}

/// Looks up an equilibrium by its conventional name `p0`, `p1` or `p2`.
pub fn equilibrium_by_name(params: &ModelParams, name: &str) -> Option<Equilibrium> {
    let eqs = axis_equilibria(params);
    match name {
        "p0" => eqs.first().copied(),
        "p1" if eqs.len() == 3 => Some(eqs[1]),
        "p2" if eqs.len() == 3 => Some(eqs[2]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_reduces_to_tau() {
        let p = ModelParams::with_alpha(0.95);
        assert_eq!(eval_field(&[0.0, 0.0, 0.0], &p), [0.0, 0.0, 0.6]);
    }

    #[test]
    fn axis_points_stay_on_axis() {
        let p = ModelParams::with_alpha(0.95);
        for i in 0..50 {
            let z = -5.0 + 0.2 * i as f64;
            let f = eval_field(&[0.0, 0.0, z], &p);
            assert_eq!(f[0], 0.0);
            assert_eq!(f[1], 0.0);
            assert_eq!(f[2], p.axis_g(z));
        }
    }

    #[test]
    fn substitution_example() {
        let p = ModelParams::with_alpha(0.95);
        let f = eval_field(&[1.0, 0.0, p.beta], &p);
        let expect = 0.6 + 0.95 * 0.7 - 0.7f64.powi(3) / 3.0 - (1.0 + 0.25 * 0.7) + 0.1 * 0.7;
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 3.5);
        assert!((f[2] - expect).abs() < 1e-15);
        assert!((expect - (0.6 + 0.665 - 0.343 / 3.0 - 1.175 + 0.07)).abs() < 1e-15);
    }

    #[test]
    fn jacobian_entry_by_hand() {
        let p = ModelParams::with_alpha(1.0);
        let j = eval_jacobian(&[1.0, 1.0, 1.0], &p);
        assert!((j[(2, 0)] + 2.2).abs() < 1e-15);
    }

    #[test]
    fn jacobian_block_structure_on_axis() {
        let p = ModelParams::with_alpha(0.95);
        for e in axis_equilibria(&p) {
            let j = eval_jacobian(&e.point, &p);
            let zb = e.z_star - p.beta;
            assert_eq!(j[(0, 0)], zb);
            assert_eq!(j[(0, 1)], -p.delta);
            assert_eq!(j[(1, 0)], p.delta);
            assert_eq!(j[(1, 1)], zb);
            assert_eq!(j[(2, 2)], e.lambda_real);
            for (r, c) in [(0, 2), (1, 2), (2, 0), (2, 1)] {
                assert_eq!(j[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn single_root_at_alpha_zero() {
        let p = ModelParams::with_alpha(0.0);
        let eqs = axis_equilibria(&p);
        assert_eq!(eqs.len(), 1);
        let z = (3.0f64 * 0.6).cbrt();
        assert!((eqs[0].z_star - z).abs() < 1e-14);
        assert!((z - 1.216440399).abs() < 1e-9);
        assert!((eqs[0].lambda().re - (z - 0.7)).abs() < 1e-14);
        assert_eq!(eqs[0].lambda().im, 3.5);
        assert!((eqs[0].lambda_real + z * z).abs() < 1e-14);
        assert_eq!(eqs[0].stability_tag, StabilityTag::SaddleFocus2u1s);
    }

    #[test]
    fn three_roots_past_the_fold() {
        let p = ModelParams::with_alpha(0.95);
        let eqs = axis_equilibria(&p);
        assert_eq!(eqs.len(), 3);
        assert_eq!(eqs[0].stability_tag, StabilityTag::SaddleFocus2u1s);
        assert_eq!(eqs[1].stability_tag, StabilityTag::SaddleFocus2s1u);
        assert_eq!(eqs[2].stability_tag, StabilityTag::Sink);
        assert!(eqs[1].z_star < 0.0 && eqs[2].z_star < eqs[1].z_star);
        for e in &eqs {
            assert!(p.axis_g(e.z_star).abs() < 1e-12);
        }
    }

    #[test]
    fn fold_value() {
        let a4 = saddle_node_alpha(0.6);
        assert!((a4 - 0.9321697517861).abs() < 1e-12);
        assert!((saddle_node_alpha(2.0 / 3.0) - 1.0).abs() < 1e-15);
        let p = ModelParams::with_alpha(a4);
        let z = -a4.sqrt();
        assert!(p.axis_g(z).abs() < 1e-12);
        assert!(p.axis_dg(z).abs() < 1e-12);
    }

    #[test]
    fn exact_fold_gives_two_roots() {
        // Choose tau so the discriminant vanishes exactly for alpha = 1.
        let p = ModelParams {
            alpha: 1.0,
            tau: 2.0 / 3.0,
            ..ModelParams::default()
        };
        let eqs = axis_equilibria(&p);
        assert_eq!(eqs.len(), 2);
        assert!((eqs[1].z_star + 1.0).abs() < 1e-12);
        assert_eq!(eqs[1].stability_tag, StabilityTag::Sink);
    }
}
