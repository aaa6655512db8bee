//! Intersections of W^u(p0) and W^s(p1) before and after the tangency, and
//! connecting orbits solved from the mesh hits.

use langford::config::ExperimentConfig;
use langford::experiments::{hetero_scan, hetero_solve};

fn main() -> langford::Result<()> {
    let cfg = ExperimentConfig::default();
    for alpha in [0.95, 1.1022] {
        let scan = hetero_scan(&cfg, alpha)?;
        println!(
            "alpha = {alpha}: {} unstable and {} stable triangles, {} intersections",
            scan.soup_u.len(),
            scan.soup_s.len(),
            scan.hits.len()
        );
        for o in hetero_solve(&cfg, &scan) {
            println!(
                "  connection: theta_u = {:.6}, sigma_s = ({:.4}, {:.4}), T = {:.4}, residual {:.1e}",
                o.theta_u, o.sigma_s[0], o.sigma_s[1], o.t, o.residual
            );
        }
    }
    Ok(())
}
