//! Period-3 cycles of the return map, the saddle's stable and unstable
//! curves, and where they cross.

use langford::model::ModelParams;
use langford::poincare::{count_crossings, grow_cycle_manifold_all, scan_cycles, CycleTag, ManifoldKind, ManifoldOptions, Polyline, SectionPoint};

fn main() -> langford::Result<()> {
    let (lo, hi) = (SectionPoint::new(0.2, -0.3), SectionPoint::new(1.6, 1.4));
    let opts = ManifoldOptions { arclength_max: 6.0, ..ManifoldOptions::default() };
    for alpha in [0.85, 0.92, 0.93] {
        let p = ModelParams::with_alpha(alpha);
        let cycles = scan_cycles(&p, lo, hi, 30, 3, 1e-10);
        println!("alpha = {alpha}");
        for c in &cycles {
            println!("  {}-cycle {}: |mu| = {:.4}, {:.4}", c.k, c.tag.as_str(), c.multipliers[0].norm(), c.multipliers[1].norm());
        }
        let Some(saddle) = cycles.iter().find(|c| c.tag == CycleTag::Saddle && c.k == 3) else {
            continue;
        };
        let wu = grow_cycle_manifold_all(saddle, ManifoldKind::Unstable, &p, &opts)?;
        let ws = grow_cycle_manifold_all(saddle, ManifoldKind::Stable, &p, &opts)?;
        let cu: Vec<Polyline> = wu.iter().map(|b| b.curve.clone()).collect();
        let cs: Vec<Polyline> = ws.iter().map(|b| b.curve.clone()).collect();
        println!("  W^u/W^s crossings: {}", count_crossings(&cu, &cs));
    }
    Ok(())
}
