//! Grows the unstable manifold of p0 one fundamental domain at a time and
//! writes the generations as Wavefront OBJ.

use std::sync::Arc;

use langford::atlas::{advect, combined_obj, fundamental_radius, lift_mesh, mesh_annulus, DEFAULT_EDGE_MAX, DEFAULT_TAU};
use langford::model::{equilibrium_by_name, ModelParams};
use langford::parm::{auto_scaled_chart, Stability};

fn main() -> langford::Result<()> {
    let p = ModelParams::with_alpha(0.8);
    let eq = equilibrium_by_name(&p, "p0").expect("p0 always exists");
    let chart = Arc::new(auto_scaled_chart(&eq, &p, Stability::Unstable, 20, 1e-12)?);
    let r_in = fundamental_radius(&chart, DEFAULT_TAU);
    println!("fundamental annulus: radius {r_in:.4} to 1");

    let domain = lift_mesh(&chart, &mesh_annulus(r_in, 10, 50), DEFAULT_TAU)?;
    let grown = advect(&domain, 15, DEFAULT_EDGE_MAX, &p, 1e-10)?;
    for m in &grown.generations {
        println!(
            "generation {:2}: {:6} vertices, max edge {:.4}, euler characteristic {}",
            m.generation,
            m.vertices.len(),
            m.max_edge(),
            m.euler_characteristic()
        );
    }
    let path = std::env::temp_dir().join("p0_unstable_bubble.obj");
    std::fs::write(&path, combined_obj(&grown.generations))?;
    println!("wrote {}", path.display());
    Ok(())
}
