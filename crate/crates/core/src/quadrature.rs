//! Gauss-Jacobi rules on the positive zeros of `P̄^m_{m+2n}` (even chain)
//! and `P̄^m_{m+2n+1}` (odd chain).
//!
//! For the even chain the rule
//!
//! ```text
//! ∫_{-1}^{1} (1-x^2)^m p(x) dx = Σ_j ρ_j (1-x_j^2)^m p(x_j)
//! ```
//!
//! is exact for even polynomials `p` of degree at most `4n - 2`; the odd
//! chain adds a node at the origin and is exact up to degree `4n`.
//!
//! Zeros are seeded by the eigenvalues of the chain's Jacobi matrix (the
//! recurrence is three-term in `x^2`), polished by Newton's method on
//! values from the unit-step recurrence in degree, and certified by sign
//! changes between consecutive nodes.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::{
    weighted_derivative_scaled, Parity, RecurrenceCoefficients, UnitStepCoefficients,
};
use crate::scaled::ScaledReal;

const MAX_NEWTON_STEPS: usize = 100;

/// Positive nodes and weights of one Gauss-Jacobi rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub m: u32,
    pub n: usize,
    pub parity: Parity,
    /// Strictly increasing, in (0, 1).
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Weight of the node at the origin; present exactly for the odd chain.
    pub center_weight: Option<f64>,
}

impl QuadratureRule {
    /// Degree of the function whose zeros are the nodes.
    pub fn target_degree(&self) -> u32 {
        target_degree(self.m, self.n, self.parity)
    }

    /// Highest even polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        match self.parity {
            Parity::Even => 4 * self.n - 2,
            Parity::Odd => 4 * self.n,
        }
    }

    /// `Σ w_j (1-x_j^2)^m p(x_j)` (plus the center term) for
    /// `p(x) = Σ_i coeffs[i] x^{2i}`.
    pub fn integrate_even_polynomial(&self, coeffs: &[f64]) -> f64 {
        let poly = |x: f64| {
            let t = x * x;
            coeffs.iter().rev().fold(0.0, |acc, &a| acc * t + a)
        };
        let mut total = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let jacobi = ((1.0 - x) * (1.0 + x)).powi(self.m as i32);
            total += w * jacobi * poly(x);
        }
        if let Some(c) = self.center_weight {
            total += c * poly(0.0);
        }
        total
    }

    /// Checks ordering, positivity and the center-weight convention.
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| {
            Err(Error::Computation(format!(
                "quadrature rule (m={}, n={}, {}) {what}",
                self.m, self.n, self.parity
            )))
        };
        if self.nodes.len() != self.n || self.weights.len() != self.n {
            return fail("has the wrong number of nodes or weights");
        }
        if self.nodes.first().is_some_and(|&x| x <= 0.0)
            || self.nodes.last().is_some_and(|&x| x >= 1.0)
            || self.nodes.windows(2).any(|p| p[0] >= p[1])
        {
            return fail("has nodes that are not strictly increasing in (0, 1)");
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return fail("has a non-positive weight");
        }
        match (self.parity, self.center_weight) {
            (Parity::Even, None) => Ok(()),
            (Parity::Odd, Some(c)) if c > 0.0 && c.is_finite() => Ok(()),
            _ => fail("has an inconsistent center weight"),
        }
    }
}

pub fn target_degree(m: u32, n: usize, parity: Parity) -> u32 {
    m + 2 * n as u32 + parity.offset()
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument("quadrature needs n >= 1".into()))
    } else {
        Ok(())
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with the given diagonal
/// and off-diagonal, ascending. Implicit QL with Wilkinson shifts.
fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Computation(
                    "tridiagonal eigenvalue iteration did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(d)
}

/// Initial guesses: square roots of the Jacobi-matrix eigenvalues.
fn initial_guesses(m: u32, n: usize, parity: Parity) -> Result<Vec<f64>> {
    let table = RecurrenceCoefficients::new(m, target_degree(m, n, parity));
    let first = m + parity.offset();
    let diag: Vec<f64> = (0..n).map(|j| table.d(first + 2 * j as u32)).collect();
    let off: Vec<f64> = (0..n.saturating_sub(1))
        .map(|j| table.c(first + 2 * j as u32))
        .collect();
    let eig = tridiagonal_eigenvalues(&diag, &off)?;
    Ok(eig
        .into_iter()
        .map(|t| t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON).sqrt())
        .collect())
}

/// `P̄_L(x)` and `(1-x^2) P̄'_L(x)` for the target degree `L`.
fn value_and_weighted_slope(
    m: u32,
    degree: u32,
    x: f64,
    table: &UnitStepCoefficients,
) -> Result<(ScaledReal, ScaledReal)> {
    let (p, q) = table.evaluate_pair(degree, x)?;
    Ok((p, weighted_derivative_scaled(m, degree, x, p, q)))
}

fn newton_step(m: u32, degree: u32, x: f64, table: &UnitStepCoefficients) -> Result<f64> {
    let (p, slope) = value_and_weighted_slope(m, degree, x, table)?;
    if slope.is_zero() {
        return Err(Error::Computation(format!(
            "vanishing derivative of P̄^{m}_{degree} at {x}"
        )));
    }
    Ok((p * ((1.0 - x) * (1.0 + x)) / slope).to_f64())
}

fn polish(
    m: u32,
    n: usize,
    parity: Parity,
    guess: f64,
    bracket: (f64, f64),
    table: &UnitStepCoefficients,
) -> Result<f64> {
    let degree = target_degree(m, n, parity);
    let fail = || {
        Error::Computation(format!(
            "Newton iteration for a zero of P̄^{m}_{degree} (m={m}, n={n}, {parity}) \
             did not converge in bracket ({:e}, {:e})",
            bracket.0, bracket.1
        ))
    };
    let mut x = guess;
    let mut last = f64::INFINITY;
    for _ in 0..MAX_NEWTON_STEPS {
        let delta = newton_step(m, degree, x, table)?;
        let next = x - delta;
        if !(next > 0.0 && next < 1.0) {
            return Err(fail());
        }
        x = next;
        let size = delta.abs();
        if size <= 4.0 * f64::EPSILON * x {
            return Ok(x);
        }
        // Near the origin the recurrence in x^2 carries noise well above one
        // ulp; once Newton is in its quadratic regime, a step that fails to
        // halve marks that floor.
        if size <= 1e-8 * x && size > 0.5 * last {
            return Ok(x);
        }
        last = size;
    }
    Err(fail())
}

fn sign_at(degree: u32, x: f64, table: &UnitStepCoefficients) -> Result<f64> {
    Ok(table.evaluate_pair(degree, x)?.0.signum())
}

/// Checks that the target function changes sign exactly once around each
/// node, and that each node satisfies the residual certificate.
fn certify(
    m: u32,
    n: usize,
    parity: Parity,
    nodes: &[f64],
    table: &UnitStepCoefficients,
) -> Result<()> {
    let degree = target_degree(m, n, parity);
    let mut probes = Vec::with_capacity(n + 1);
    probes.push(nodes[0] / 2.0);
    probes.extend(nodes.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    probes.push(0.5 * (nodes[n - 1] + 1.0));
    let mut previous = sign_at(degree, probes[0], table)?;
    for (j, &probe) in probes.iter().enumerate().skip(1) {
        let sign = sign_at(degree, probe, table)?;
        if sign == 0.0 || previous == 0.0 || sign == previous {
            return Err(Error::Computation(format!(
                "zero certification failed for P̄^{m}_{degree} (m={m}, n={n}, {parity}) \
                 in bracket ({:e}, {:e})",
                probes[j - 1],
                probe
            )));
        }
        previous = sign;
    }
    for (j, &x) in nodes.iter().enumerate() {
        let left = if j == 0 { x } else { x - nodes[j - 1] };
        let right = if j + 1 == n {
            1.0 - x
        } else {
            nodes[j + 1] - x
        };
        let step = newton_step(m, degree, x, table)?;
        // The ulp term covers nodes so close to 1 that the spacing is
        // finer than the representable grid.
        if step.abs() > 1e-11 * left.min(right) + 2.0 * f64::EPSILON * x {
            return Err(Error::Computation(format!(
                "residual certificate failed at node {j} = {x} (m={m}, n={n}, {parity}): \
                 Newton step {step:e}"
            )));
        }
    }
    Ok(())
}

/// All `n` positive zeros of `P̄^m_{m+2n}` (even) or `P̄^m_{m+2n+1}` (odd),
/// increasing.
pub fn find_zeros(m: u32, n: usize, parity: Parity) -> Result<Vec<f64>> {
    check_size(n)?;
    let table = UnitStepCoefficients::new(m, target_degree(m, n, parity));
    find_zeros_with(m, n, parity, &table)
}

fn find_zeros_with(
    m: u32,
    n: usize,
    parity: Parity,
    table: &UnitStepCoefficients,
) -> Result<Vec<f64>> {
    let guesses = initial_guesses(m, n, parity)?;
    let mut nodes = Vec::with_capacity(n);
    for (j, &g) in guesses.iter().enumerate() {
        let lo = if j == 0 {
            0.0
        } else {
            0.5 * (guesses[j - 1] + g)
        };
        let hi = if j + 1 == n {
            1.0
        } else {
            0.5 * (g + guesses[j + 1])
        };
        nodes.push(polish(m, n, parity, g, (lo, hi), table)?);
    }
    if nodes.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Computation(format!(
            "Newton iteration merged distinct zeros (m={m}, n={n}, {parity})"
        )));
    }
    certify(m, n, parity, &nodes, table)?;
    Ok(nodes)
}

/// Weights `ρ_j` (even) or `σ_j` plus the center weight `σ_n` (odd) for
/// certified zeros.
pub fn compute_weights(
    m: u32,
    n: usize,
    parity: Parity,
    nodes: &[f64],
) -> Result<(Vec<f64>, Option<f64>)> {
    check_size(n)?;
    if nodes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: nodes.len(),
        });
    }
    let table = UnitStepCoefficients::new(m, target_degree(m, n, parity));
    compute_weights_with(m, n, parity, nodes, &table)
}

fn compute_weights_with(
    m: u32,
    n: usize,
    parity: Parity,
    nodes: &[f64],
    table: &UnitStepCoefficients,
) -> Result<(Vec<f64>, Option<f64>)> {
    let degree = target_degree(m, n, parity);
    let scale = (2 * degree + 1) as f64;
    let mut weights = Vec::with_capacity(n);
    for &x in nodes {
        let (_, slope) = value_and_weighted_slope(m, degree, x, table)?;
        if slope.is_zero() {
            return Err(Error::Computation(format!(
                "derivative of P̄^{m}_{degree} vanishes at node {x}"
            )));
        }
        // 2(2L+1) / ((1-x^2) P'^2) = 2(2L+1)(1-x^2) / ((1-x^2) P')^2
        let w = ScaledReal::from_f64(2.0 * scale * ((1.0 - x) * (1.0 + x))) / (slope * slope);
        weights.push(w.to_f64());
    }
    let center = match parity {
        Parity::Even => None,
        Parity::Odd => {
            let (_, slope) = value_and_weighted_slope(m, degree, 0.0, table)?;
            if slope.is_zero() {
                return Err(Error::Computation(format!(
                    "derivative of P̄^{m}_{degree} vanishes at the origin"
                )));
            }
            Some((ScaledReal::from_f64(scale) / (slope * slope)).to_f64())
        }
    };
    Ok((weights, center))
}

/// Zeros and weights together, with the rule's invariants checked.
pub fn build_rule(m: u32, n: usize, parity: Parity) -> Result<QuadratureRule> {
    check_size(n)?;
    let table = UnitStepCoefficients::new(m, target_degree(m, n, parity));
    let nodes = find_zeros_with(m, n, parity, &table)?;
    let (weights, center_weight) = compute_weights_with(m, n, parity, &nodes, &table)?;
    let rule = QuadratureRule {
        m,
        n,
        parity,
        nodes,
        weights,
        center_weight,
    };
    rule.validate()?;
    Ok(rule)
}

type RuleKey = (u32, usize, Parity);

/// Memoizes rules in memory and, optionally, as JSON files in a directory.
#[derive(Debug, Default)]
pub struct QuadratureCache {
    rules: Mutex<HashMap<RuleKey, Arc<QuadratureRule>>>,
    dir: Option<PathBuf>,
}

impl QuadratureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        QuadratureCache {
            rules: Mutex::default(),
            dir: Some(dir.into()),
        }
    }

    fn file_for(dir: &Path, (m, n, parity): RuleKey) -> PathBuf {
        dir.join(format!("quad-m{m}-n{n}-{parity}.json"))
    }

    fn load(path: &Path, key: RuleKey) -> Option<QuadratureRule> {
        let text = fs::read_to_string(path).ok()?;
        let rule: QuadratureRule = serde_json::from_str(&text).ok()?;
        let matches = (rule.m, rule.n, rule.parity) == key;
        (matches && rule.validate().is_ok()).then_some(rule)
    }

    pub fn get(&self, m: u32, n: usize, parity: Parity) -> Result<Arc<QuadratureRule>> {
        let key = (m, n, parity);
        if let Some(rule) = self.rules.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(rule));
        }
        let from_disk = self
            .dir
            .as_deref()
            .and_then(|dir| Self::load(&Self::file_for(dir, key), key));
        let rule = match from_disk {
            Some(rule) => rule,
            None => {
                let rule = build_rule(m, n, parity)?;
                if let Some(dir) = &self.dir {
                    let stored = fs::create_dir_all(dir).and_then(|_| {
                        let text = serde_json::to_string(&rule).expect("rule serializes");
                        fs::write(Self::file_for(dir, key), text)
                    });
                    if let Err(e) = stored {
                        log::warn!("could not write quadrature cache in {}: {e}", dir.display());
                    }
                }
                rule
            }
        };
        let rule = Arc::new(rule);
        self.rules
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&rule));
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.rules.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
