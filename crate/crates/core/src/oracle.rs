//! Slow reference computations that share no code path with the fast ones.
//!
//! Everything here is meant for verification: exact rational evaluation of
//! `P̄^m_l`, exact weighted monomial integrals, the textbook Gauss-Legendre
//! rule, and dense linear algebra through `nalgebra`'s SVD.

use nalgebra::{DMatrix, DVector};
use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::scaled::ScaledReal;

/// Splits a finite `x` with `|x| < 1` into `(M, s)` with `x = M / 2^s`.
fn dyadic(x: f64) -> (BigInt, u64) {
    assert!(x.is_finite() && x.abs() < 1.0);
    if x == 0.0 {
        return (BigInt::zero(), 0);
    }
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let mut mant = BigInt::from(mant);
    if x < 0.0 {
        mant = -mant;
    }
    // |x| < 1 forces a negative binary exponent.
    (mant, (-exp) as u64)
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `num / den * 2^shift` rounded to a [`ScaledReal`] (to within one ulp).
fn ratio_to_scaled(num: &BigUint, den: &BigUint, shift: i64) -> ScaledReal {
    if num.is_zero() {
        return ScaledReal::ZERO;
    }
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    // Aim for a 64-bit integer quotient.
    let pre = 64 - (nb - db);
    let q = if pre >= 0 {
        (num << pre as usize) / den
    } else {
        num / (den << (-pre) as usize)
    };
    let q = q.to_f64().expect("quotient fits in f64");
    ScaledReal::from_f64(q).scale_pow2(shift - pre)
}

/// `P̄^m_l(x)` evaluated exactly in rational arithmetic from the Rodrigues
/// form, with one final rounding.
///
/// The square `P̄^2 = (2l+1)/2 (l-m)!/(l+m)! (1-x^2)^m (d^m P_l/dx^m)^2` is
/// rational for dyadic `x`; only its square root is taken in floating point.
pub fn legendre_exact(m: u32, l: u32, x: f64) -> ScaledReal {
    assert!(l >= m, "degree below order");
    let (m, l) = (m as u64, l as u64);
    let (big_m, s) = dyadic(x);

    // d^m/dx^m P_l = 2^{-l} * sum_k (-1)^k C(l,k) C(2l-2k,l) (p)_m x^{p-m}, p = l-2k.
    // Group by powers of x^2: x^{p-m} = x^r (x^2)^i, r = (l-m) mod 2.
    let r = (l - m) % 2;
    let top = (l - m - r) / 2;
    let mut coeffs = vec![BigInt::zero(); top as usize + 1];
    for k in 0..=l / 2 {
        let p = l - 2 * k;
        if p < m {
            break;
        }
        let falling: BigUint = ((p - m + 1)..=p).fold(BigUint::one(), |acc, v| acc * v);
        let mag = binomial(l, k) * binomial(2 * l - 2 * k, l) * falling;
        let term = BigInt::from_biguint(if k % 2 == 0 { Sign::Plus } else { Sign::Minus }, mag);
        let i = ((p - m - r) / 2) as usize;
        coeffs[i] += term;
    }

    // Horner in t = x^2 = M^2 / 2^{2s}, scaled by 2^{2s*top} to stay integral.
    let m2: BigInt = &big_m * &big_m;
    let two_s = 2 * s;
    let mut acc = coeffs[top as usize].clone();
    for i in (0..top as usize).rev() {
        let shift = two_s * (top - i as u64);
        acc = acc * &m2 + (&coeffs[i] << shift as usize);
    }
    // D = 2^{-l} x^r acc / 2^{2s*top}
    let mut numer_d = acc;
    if r == 1 {
        numer_d *= &big_m;
    }
    let sign = numer_d.sign();
    if sign == Sign::NoSign {
        return ScaledReal::ZERO;
    }
    let d_abs = numer_d.abs().to_biguint().expect("absolute value");
    let pow2_d = l + s * r + two_s * top;

    // (1 - x^2)^m = (2^{2s} - M^2)^m / 2^{2s m}
    let one_minus = (BigInt::one() << two_s as usize) - &m2;
    let one_minus = one_minus.to_biguint().expect("|x| < 1");
    let weight = num_traits::pow::pow(one_minus, m as usize);

    let numer = BigUint::from(2 * l + 1) * factorial(l - m) * weight * &d_abs * &d_abs;
    let denom = BigUint::from(2u32) * factorial(l + m);
    let shift = -((two_s * m + 2 * pow2_d) as i64);
    let square = ratio_to_scaled(&numer, &denom, shift);
    let value = square.sqrt();
    if sign == Sign::Minus {
        -value
    } else {
        value
    }
}

/// `∫_{-1}^{1} x^{2q} (1-x^2)^m dx` exactly, by binomial expansion.
pub fn weighted_monomial_integral_exact(m: u32, q: u32) -> BigRational {
    let mut total = BigRational::zero();
    for i in 0..=m as u64 {
        let c = BigInt::from(binomial(m as u64, i));
        let term = BigRational::new(c * 2, BigInt::from(2 * q as u64 + 2 * i + 1));
        if i % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

/// [`weighted_monomial_integral_exact`] rounded to `f64`.
pub fn weighted_monomial_integral(m: u32, q: u32) -> f64 {
    weighted_monomial_integral_exact(m, q)
        .to_f64()
        .expect("integral representable")
}

/// Textbook Gauss-Legendre rule of `order` points on (-1, 1), by Newton
/// iteration on the Bonnet recurrence. Nodes ascend.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                let jf = j as f64;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1e-300) {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).expect("finite singular values"));
    sv
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// `U diag(sigma) V^T` with Haar-like orthonormal factors drawn from
/// `gaussian`, which must yield independent standard normal samples.
pub fn planted_spectrum(
    rows: usize,
    cols: usize,
    sigma: &[f64],
    mut gaussian: impl FnMut() -> f64,
) -> DMatrix<f64> {
    let r = sigma.len();
    assert!(r <= rows.min(cols));
    let u = DMatrix::from_fn(rows, r, |_, _| gaussian()).qr().q();
    let v = DMatrix::from_fn(cols, r, |_, _| gaussian()).qr().q();
    let s = DMatrix::from_diagonal(&DVector::from_column_slice(sigma));
    u * s * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_low_degrees() {
        let v = legendre_exact(0, 0, 0.3).to_f64();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-16);
        let v = legendre_exact(0, 2, 0.3).to_f64();
        let expected = 2.5f64.sqrt() * (3.0 * 0.09 - 1.0) / 2.0;
        assert!((v - expected).abs() < 1e-15);
        let v = legendre_exact(1, 1, 0.3).to_f64();
        assert!((v - (0.75f64 * 0.91).sqrt()).abs() < 1e-15);
        let v = legendre_exact(2, 5, -0.4).to_f64();
        // P^2_5 is odd in x.
        assert!((v + legendre_exact(2, 5, 0.4).to_f64()).abs() < 1e-15);
        assert_eq!(legendre_exact(0, 3, 0.0).to_f64(), 0.0);
    }

    #[test]
    fn exact_is_normalized() {
        // Integrate P̄^3_7 squared with a fine Gauss-Legendre rule.
        let (x, w) = gauss_legendre(40);
        let total: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * legendre_exact(3, 7, xi).to_f64().powi(2))
            .sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn monomial_integrals() {
        assert_eq!(weighted_monomial_integral(0, 0), 2.0);
        assert!((weighted_monomial_integral(0, 1) - 2.0 / 3.0).abs() < 1e-16);
        // ∫ (1-x^2) dx = 4/3
        assert!((weighted_monomial_integral(1, 0) - 4.0 / 3.0).abs() < 1e-16);
        // m = 2, q = 3 against a classical rule that is exact for it.
        let (x, w) = gauss_legendre(20);
        let quad: f64 = x
            .iter()
            .zip(&w)
            .map(|(&t, &wi)| wi * t.powi(6) * (1.0 - t * t).powi(2))
            .sum();
        assert!((quad - weighted_monomial_integral(2, 3)).abs() < 1e-15);
    }

    #[test]
    fn classical_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-15);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }
}
