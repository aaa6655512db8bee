//! Bivariate truncated power series with complex coefficients.
//!
//! A [`TaylorPoly2`] of order `N` stores every coefficient `p(m, n)` with
//! `m + n <= N` in a dense triangular array, ordered by total degree and
//! then by `m`. Products are truncated Cauchy convolutions.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPoly2 {
    order: usize,
    coeffs: Vec<Complex64>,
}

/// Scale factors and the fitted Cauchy estimate `|p_mn| <= C / (R1^m R2^n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRecord {
    pub s1: f64,
    pub s2: f64,
    pub c: f64,
    pub r1: f64,
    pub r2: f64,
}

impl ScalingRecord {
    /// Record for a chart solved at scale `s` with no decay fit yet.
    pub fn unfitted(s: f64) -> Self {
        Self {
            s1: s,
            s2: s,
            c: 1.0,
            r1: 1.0,
            r2: 1.0,
        }
    }
}

#[inline]
fn tri_index(m: usize, n: usize) -> usize {
    let d = m + n;
    d * (d + 1) / 2 + m
}

#[inline]
fn tri_len(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

impl TaylorPoly2 {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            coeffs: vec![Complex64::new(0.0, 0.0); tri_len(order)],
        }
    }

    /// The constant series 1.
    pub fn unit(order: usize) -> Self {
        let mut p = Self::zeros(order);
        p.coeffs[0] = Complex64::new(1.0, 0.0);
        p
    }

    /// Builds a series from a coefficient function evaluated on the triangle.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut p = Self::zeros(order);
        for (m, n) in Self::indices(order) {
            p.coeffs[tri_index(m, n)] = f(m, n);
        }
        p
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Index pairs in storage order: ascending total degree, then ascending `m`.
    pub fn indices(order: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..=order).flat_map(|d| (0..=d).map(move |m| (m, d - m)))
    }

    /// Coefficient of `theta1^m theta2^n`.
    ///
    /// Panics if `m + n` exceeds the order.
    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        assert!(m + n <= self.order, "index ({m},{n}) outside order {}", self.order);
        self.coeffs[tri_index(m, n)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, value: Complex64) {
        assert!(m + n <= self.order, "index ({m},{n}) outside order {}", self.order);
        self.coeffs[tri_index(m, n)] = value;
    }

    pub fn try_get(&self, m: usize, n: usize) -> Result<Complex64> {
        if m + n > self.order {
            return Err(Error::Range {
                m,
                n,
                order: self.order,
            });
        }
        Ok(self.coeffs[tri_index(m, n)])
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Largest coefficient modulus among the monomials of total degree `d`.
    pub fn max_abs_at_degree(&self, d: usize) -> f64 {
        (0..=d)
            .map(|m| self.get(m, d - m).norm())
            .fold(0.0, f64::max)
    }

    /// Evaluates the polynomial at `(theta1, theta2)`.
    pub fn evaluate(&self, theta1: Complex64, theta2: Complex64) -> Complex64 {
        let mut pow1 = Vec::with_capacity(self.order + 1);
        let mut pow2 = Vec::with_capacity(self.order + 1);
        let (mut a, mut b) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        for _ in 0..=self.order {
            pow1.push(a);
            pow2.push(b);
            a *= theta1;
            b *= theta2;
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for (m, n) in Self::indices(self.order) {
            sum += self.coeffs[tri_index(m, n)] * pow1[m] * pow2[n];
        }
        sum
    }

    /// Partial derivatives `(dP/dtheta1, dP/dtheta2)` at `(theta1, theta2)`.
    pub fn evaluate_gradient(&self, theta1: Complex64, theta2: Complex64) -> (Complex64, Complex64) {
        let mut d1 = Complex64::new(0.0, 0.0);
        let mut d2 = Complex64::new(0.0, 0.0);
        for (m, n) in Self::indices(self.order) {
            let c = self.coeffs[tri_index(m, n)];
            if m > 0 {
                d1 += c * (m as f64) * theta1.powu(m as u32 - 1) * theta2.powu(n as u32);
            }
            if n > 0 {
                d2 += c * (n as f64) * theta1.powu(m as u32) * theta2.powu(n as u32 - 1);
            }
        }
        (d1, d2)
    }

    /// Returns the series with coefficients `s1^m s2^n p(m, n)`.
    pub fn rescale(&self, s1: f64, s2: f64) -> Result<Self> {
        if s1 == 0.0 || s2 == 0.0 || !s1.is_finite() || !s2.is_finite() {
            return Err(Error::DegenerateScale { s1, s2 });
        }
        Ok(Self::from_fn(self.order, |m, n| {
            self.get(m, n) * s1.powi(m as i32) * s2.powi(n as i32)
        }))
    }

    /// Truncated Cauchy product.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::OrderMismatch {
                left: self.order,
                right: other.order,
            });
        }
        Ok(Self::from_fn(self.order, |m, n| conv_at(self, other, m, n)))
    }

    /// Left fold of [`TaylorPoly2::product`] over 2 to 4 factors.
    pub fn product_chain(factors: &[&Self]) -> Result<Self> {
        check_chain(factors)?;
        let mut acc = factors[0].product(factors[1])?;
        for f in &factors[2..] {
            acc = acc.product(f)?;
        }
        Ok(acc)
    }

    /// Writes the coefficient table as CSV rows `m,n,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,re,im\n");
        for (m, n) in Self::indices(self.order) {
            let c = self.get(m, n);
            let _ = writeln!(out, "{m},{n},{:e},{:e}", c.re, c.im);
        }
        out
    }

    /// Parses a table produced by [`TaylorPoly2::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("m,") || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Parse(format!("bad coefficient row '{line}'")));
            }
            let parse_u = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("{s}: {e}")))
            };
            let parse_f = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{s}: {e}")))
            };
            rows.push((
                parse_u(parts[0])?,
                parse_u(parts[1])?,
                Complex64::new(parse_f(parts[2])?, parse_f(parts[3])?),
            ));
        }
        let order = rows.iter().map(|&(m, n, _)| m + n).max().unwrap_or(0);
        if rows.len() != tri_len(order) {
            return Err(Error::Parse(format!(
                "expected {} coefficients for order {order}, found {}",
                tri_len(order),
                rows.len()
            )));
        }
        let mut p = Self::zeros(order);
        for (m, n, c) in rows {
            p.set(m, n, c);
        }
        Ok(p)
    }
}

fn check_chain(factors: &[&TaylorPoly2]) -> Result<()> {
    if !(2..=4).contains(&factors.len()) {
        return Err(Error::Arity(factors.len()));
    }
    let order = factors[0].order;
    for f in &factors[1..] {
        if f.order != order {
            return Err(Error::OrderMismatch {
                left: order,
                right: f.order,
            });
        }
    }
    Ok(())
}

/// Coefficient `(m, n)` of the Cauchy product of `a` and `b`.
#[inline]
fn conv_at(a: &TaylorPoly2, b: &TaylorPoly2, m: usize, n: usize) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for j in 0..=m {
        for k in 0..=n {
            sum += a.get(m - j, n - k) * b.get(j, k);
        }
    }
    sum
}

/// Coefficient `(m, n)` of the product of `factors` with every term that is
/// linear in some factor's `(m, n)` entry (all other factors at `(0, 0)`)
/// removed.
///
/// For two factors this is the Cauchy product with the two corner terms
/// `a(0,0) b(m,n)` and `a(m,n) b(0,0)` dropped. At `(0, 0)` nothing is
/// removed twice: the single term `prod_i f_i(0,0)` is the whole product.
pub fn corner_stripped_coeff(factors: &[&TaylorPoly2], m: usize, n: usize) -> Result<Complex64> {
    if factors.is_empty() || factors.len() > 4 {
        return Err(Error::Arity(factors.len()));
    }
    for f in factors {
        if m + n > f.order {
            return Err(Error::Range {
                m,
                n,
                order: f.order,
            });
        }
    }
    if factors.len() == 1 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if m + n == 0 {
        // The (0,0) coefficient is a single product of constant terms; it is
        // "linear in each factor's (0,0) entry", so nothing is left.
        return Ok(Complex64::new(0.0, 0.0));
    }
    let full = rect_chain_coeff(factors, m, n);
    let mut linear = Complex64::new(0.0, 0.0);
    for i in 0..factors.len() {
        let mut term = factors[i].get(m, n);
        for (j, f) in factors.iter().enumerate() {
            if j != i {
                term *= f.get(0, 0);
            }
        }
        linear += term;
    }
    Ok(full - linear)
}

/// Coefficient `(m, n)` of the full product, computed by folding
/// convolutions over the rectangle `[0, m] x [0, n]` only.
fn rect_chain_coeff(factors: &[&TaylorPoly2], m: usize, n: usize) -> Complex64 {
    let w = n + 1;
    let mut acc: Vec<Complex64> = (0..=m)
        .flat_map(|j| (0..=n).map(move |k| (j, k)))
        .map(|(j, k)| factors[0].get(j, k))
        .collect();
    let mut next = vec![Complex64::new(0.0, 0.0); acc.len()];
    for f in &factors[1..] {
        for j in 0..=m {
            for k in 0..=n {
                let mut s = Complex64::new(0.0, 0.0);
                for a in 0..=j {
                    for b in 0..=k {
                        s += acc[(j - a) * w + (k - b)] * f.get(a, b);
                    }
                }
                next[j * w + k] = s;
            }
        }
        std::mem::swap(&mut acc, &mut next);
    }
    acc[m * w + n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn theta1(order: usize) -> TaylorPoly2 {
        let mut p = TaylorPoly2::zeros(order);
        p.set(1, 0, c(1.0, 0.0));
        p
    }

    #[test]
    fn unit_is_product_identity() {
        let b = TaylorPoly2::from_fn(4, |m, n| c(m as f64 + 0.5, n as f64 - 1.0));
        assert_eq!(TaylorPoly2::unit(4).product(&b).unwrap(), b);
    }

    #[test]
    fn monomial_square() {
        let t = theta1(3);
        let r = t.product(&t).unwrap();
        for (m, n) in TaylorPoly2::indices(3) {
            let expect = if (m, n) == (2, 0) { 1.0 } else { 0.0 };
            assert_eq!(r.get(m, n), c(expect, 0.0));
        }
    }

    #[test]
    fn hand_convolution() {
        let mut a = TaylorPoly2::zeros(2);
        a.set(0, 0, c(2.0, 0.0));
        a.set(1, 0, c(3.0, 0.0));
        let mut b = TaylorPoly2::zeros(2);
        b.set(0, 0, c(5.0, 0.0));
        b.set(0, 1, c(7.0, 0.0));
        let r = a.product(&b).unwrap();
        assert_eq!(r.get(0, 0), c(10.0, 0.0));
        assert_eq!(r.get(1, 0), c(15.0, 0.0));
        assert_eq!(r.get(0, 1), c(14.0, 0.0));
        assert_eq!(r.get(1, 1), c(21.0, 0.0));
        assert_eq!(r.get(2, 0), c(0.0, 0.0));
        assert_eq!(r.get(0, 2), c(0.0, 0.0));
    }

    #[test]
    fn order_mismatch() {
        let a = TaylorPoly2::unit(2);
        let b = TaylorPoly2::unit(3);
        assert!(matches!(a.product(&b), Err(Error::OrderMismatch { .. })));
    }

    #[test]
    fn chain_small_cases() {
        let u = TaylorPoly2::unit(4);
        assert_eq!(TaylorPoly2::product_chain(&[&u, &u, &u]).unwrap(), u);
        let t = theta1(4);
        let r = TaylorPoly2::product_chain(&[&t, &t, &t]).unwrap();
        for (m, n) in TaylorPoly2::indices(4) {
            let expect = if (m, n) == (3, 0) { 1.0 } else { 0.0 };
            assert_eq!(r.get(m, n), c(expect, 0.0));
        }
        assert!(matches!(
            TaylorPoly2::product_chain(&[&u]),
            Err(Error::Arity(1))
        ));
        assert!(matches!(TaylorPoly2::product_chain(&[]), Err(Error::Arity(0))));
    }

    #[test]
    fn corner_stripped_degree_one_is_zero() {
        let a = TaylorPoly2::from_fn(3, |m, n| c(1.0 + m as f64, 2.0 - n as f64));
        let b = TaylorPoly2::from_fn(3, |m, n| c(0.5 * n as f64, 1.0 + m as f64));
        let v = corner_stripped_coeff(&[&a, &b], 1, 0).unwrap();
        assert!(v.norm() < 1e-15);
        let v = corner_stripped_coeff(&[&a, &b], 0, 1).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn corner_stripped_range_error() {
        let a = TaylorPoly2::unit(2);
        assert!(matches!(
            corner_stripped_coeff(&[&a, &a], 2, 1),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn evaluate_cases() {
        let p = TaylorPoly2::from_fn(5, |m, n| c(m as f64 - n as f64, 0.25));
        assert_eq!(p.evaluate(c(0.0, 0.0), c(0.0, 0.0)), p.get(0, 0));
        assert_eq!(
            TaylorPoly2::unit(5).evaluate(c(0.3, -2.0), c(4.0, 1.0)),
            c(1.0, 0.0)
        );
        let mut lin = TaylorPoly2::zeros(2);
        lin.set(1, 0, c(1.0, 0.0));
        lin.set(0, 1, c(1.0, 0.0));
        assert_eq!(lin.evaluate(c(2.0, 0.0), c(0.0, 3.0)), c(2.0, 3.0));
    }

    #[test]
    fn rescale_cases() {
        let p = TaylorPoly2::from_fn(3, |m, n| c(8.0 * (m + 1) as f64, n as f64));
        assert_eq!(p.rescale(1.0, 1.0).unwrap(), p);
        let mut q = TaylorPoly2::zeros(2);
        q.set(2, 0, c(8.0, 0.0));
        assert_eq!(q.rescale(0.5, 0.5).unwrap().get(2, 0), c(2.0, 0.0));
        let back = p.rescale(0.3, 0.3).unwrap().rescale(1.0 / 0.3, 1.0 / 0.3).unwrap();
        for (m, n) in TaylorPoly2::indices(3) {
            assert!((back.get(m, n) - p.get(m, n)).norm() <= 1e-14 * p.get(m, n).norm().max(1.0));
        }
        assert!(matches!(p.rescale(0.0, 1.0), Err(Error::DegenerateScale { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let p = TaylorPoly2::from_fn(4, |m, n| c(1.0 / (1 + m) as f64, -(n as f64) / 3.0));
        let q = TaylorPoly2::from_csv(&p.to_csv()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn storage_order_is_degree_then_m() {
        let idx: Vec<_> = TaylorPoly2::indices(2).collect();
        assert_eq!(idx, vec![(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]);
    }
}
