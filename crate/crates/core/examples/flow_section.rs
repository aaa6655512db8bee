//! Orbits, the variational equation and returns to the section x = 0, y > 0.

use langford::flow::{flow_map, integrate, integrate_variational, section_crossing, TimeDirection, CROSSING_BUDGET};
use langford::model::ModelParams;

fn main() -> langford::Result<()> {
    let p = ModelParams::with_alpha(0.6);
    let x0 = [0.0, 0.9, 0.7];
    let traj = integrate(x0, 100.0, &p, 1e-10)?;
    println!("{} steps to t = 100, end {:?}", traj.times.len(), traj.final_state());

    let there = flow_map(x0, 5.0, &p, 1e-12)?;
    let back = flow_map(there, -5.0, &p, 1e-12)?;
    println!("round trip error {:.2e}", (0..3).map(|i| (back[i] - x0[i]).abs()).fold(0.0, f64::max));

    let v = integrate_variational(x0, 2.0, &p, 1e-12)?;
    println!("det M = {:.12}, exp(int trace) = {:.12}", v.m.determinant(), v.trace_integral.exp());

    let mut q = x0;
    for i in 0..5 {
        let c = section_crossing(q, &p, 1e-11, TimeDirection::Forward, CROSSING_BUDGET)?;
        println!("return {i}: t = {:.6}, (y, z) = ({:.9}, {:.9})", c.time, c.state[1], c.state[2]);
        q = c.state;
    }
    Ok(())
}
