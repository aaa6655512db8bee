//! The attracting periodic orbit as a fixed point of the return map, its
//! loss of stability, and the invariant circle born there.

use langford::model::ModelParams;
use langford::poincare::{fixed_point_spectral_radius, locate_neimark_sacker, sample_invariant_circle, CircleSample, FIXED_POINT_SEED};

fn main() -> langford::Result<()> {
    let base = ModelParams::default();
    for alpha in [0.5, 0.65, 0.7, 0.75] {
        let (c, rho) = fixed_point_spectral_radius(FIXED_POINT_SEED, &ModelParams::with_alpha(alpha), 1e-11)?;
        println!("alpha = {alpha}: fixed point ({:.6}, {:.6}), spectral radius {rho:.5}", c.points[0].y, c.points[0].z);
    }

    let ns = locate_neimark_sacker(FIXED_POINT_SEED, 0.69, &base, 1e-12)?;
    println!(
        "Neimark-Sacker at alpha = {:.10} (residual {:.1e}, trace {:.4}, {} iterations)",
        ns.alpha, ns.residual, ns.trace, ns.iterations
    );

    for alpha in [0.65, 0.75] {
        match sample_invariant_circle(alpha, &base, 2000, 500, 1e-11)? {
            CircleSample::Circle { curve, star_shaped, .. } => println!(
                "alpha = {alpha}: invariant circle, {} points, length {:.4}, star-shaped {star_shaped}",
                curve.points.len(),
                curve.arclength
            ),
            CircleSample::Resonant { cluster_count, .. } => {
                println!("alpha = {alpha}: iterates settle on {cluster_count} point(s)")
            }
        }
    }
    Ok(())
}
