//! Two-dimensional unstable manifold chart at p0: decay of the Taylor
//! coefficients versus eigenvector scale, automatic rescaling, and the
//! conjugacy error on the unit circle.

use langford::model::{equilibrium_by_name, ModelParams};
use langford::parm::{auto_scaled_chart, decay_fit, error_conj, eval_real, solve_homological, Stability, ERROR_CONJ_K};

fn main() -> langford::Result<()> {
    for alpha in [0.0, 0.95] {
        let p = ModelParams::with_alpha(alpha);
        let eq = equilibrium_by_name(&p, "p0").expect("p0 always exists");
        println!("alpha = {alpha}, lambda = {}", eq.lambda_pair);
        for scale in [1.0, 0.5] {
            let chart = solve_homological(&eq, &p, Stability::Unstable, 20, scale)?;
            let fit = decay_fit(&chart)?;
            println!(
                "  scale {scale}: |p| at degree 20 = {:.2e}, fit C = {:.3}, R = {:.3}",
                chart.max_abs_at_degree(20),
                fit.c,
                fit.r1
            );
        }
        let chart = auto_scaled_chart(&eq, &p, Stability::Unstable, 20, 1e-12)?;
        println!(
            "  auto scale {:.4}: degree 20 = {:.2e}, Error_conj(T = -1) = {:.2e}",
            chart.scaling.s1,
            chart.max_abs_at_degree(20),
            error_conj(&chart, -1.0, ERROR_CONJ_K, 1e-12)?
        );
        println!("  P(1, 0) = {:?}", eval_real(&chart, 1.0, 0.0)?);
    }
    Ok(())
}
