//! Truncated Cauchy products of bivariate series and the corner-stripped
//! coefficients that feed the homological equations.

use langford::series2::{corner_stripped_coeff, TaylorPoly2};
use num_complex::Complex64;

fn main() -> langford::Result<()> {
    let order = 6;
    // 1 / (1 - a - b) truncated: every coefficient is a binomial count.
    let geometric = TaylorPoly2::from_fn(order, |m, n| {
        let binom = (1..=n).fold(1.0, |acc, i| acc * (m + i) as f64 / i as f64);
        Complex64::new(binom, 0.0)
    });
    let sq = geometric.product(&geometric)?;
    println!("(1 - a - b)^-2 at (2,1): {}", sq.get(2, 1));

    let a = TaylorPoly2::from_fn(order, |m, n| Complex64::new(1.0 / (1 + m + n) as f64, m as f64 - n as f64));
    let cube = TaylorPoly2::product_chain(&[&a, &a, &a])?;
    let stripped = corner_stripped_coeff(&[&a, &a, &a], 3, 2)?;
    println!("a^3 at (3,2):           {}", cube.get(3, 2));
    println!("corner-stripped (3,2):  {stripped}");
    // The difference is the part linear in a's own (3,2) entry.
    let a00 = a.get(0, 0);
    println!("removed linear part:    {}", 3.0 * a00 * a00 * a.get(3, 2));

    let t = Complex64::new(0.3, 0.1);
    println!("a(t, conj t) = {}", a.evaluate(t, t.conj()));
    Ok(())
}
