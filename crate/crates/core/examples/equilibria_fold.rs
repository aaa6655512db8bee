//! Axis equilibria across the saddle-node where p1 and p2 appear.

use langford::model::{axis_equilibria, saddle_node_alpha, ModelParams};

fn main() {
    let fold = saddle_node_alpha(ModelParams::default().tau);
    println!("saddle-node at alpha = {fold:.13}");
    for alpha in [0.0, 0.9, fold + 1e-6, 0.95, 1.1022] {
        let p = ModelParams::with_alpha(alpha);
        println!("alpha = {alpha}");
        for (i, e) in axis_equilibria(&p).iter().enumerate() {
            println!(
                "  p{i}: z* = {:+.6}  pair = {:+.4} +- {:.1}i  axis = {:+.4}  {}",
                e.z_star,
                e.lambda_pair.re,
                e.lambda_pair.im,
                e.lambda_real,
                e.stability_tag.as_str()
            );
        }
    }
}
