//! The associated Legendre transform for one order `m` and one degree chain.
//!
//! With nodes `x_i` and weights `w_i` from the matching quadrature rule,
//!
//! ```text
//! A[i][j] = sqrt(w_i) · P̄^m_{m+2j}(x_i)      (even chain)
//! A[i][j] = sqrt(w_i) · P̄^m_{m+2j+1}(x_i)    (odd chain)
//! ```
//!
//! is orthogonal, so the inverse transform is the transpose. The odd chain's
//! center node carries no information (every odd function vanishes there)
//! and is left out.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::butterfly::{build_plan, ButterflyPlan, ColumnSource, DEFAULT_BLOCK_WIDTH};
use crate::error::{Error, Result};
use crate::legendre::{DegreeSweep, Parity, RecurrenceCoefficients};
use crate::quadrature::{build_rule, QuadratureRule};

/// Columns of the transform matrix, produced by advancing one degree sweep
/// per node in lockstep.
#[derive(Clone, Debug)]
pub struct TransformSource {
    rule: Arc<QuadratureRule>,
    root_weights: Vec<f64>,
    table: RecurrenceCoefficients,
    sweeps: Vec<DegreeSweep>,
    next: usize,
}

impl TransformSource {
    pub fn new(rule: Arc<QuadratureRule>) -> Result<Self> {
        let table = RecurrenceCoefficients::new(rule.m, rule.target_degree() + 2);
        let root_weights = rule.weights.iter().map(|w| w.sqrt()).collect();
        let sweeps = Self::fresh_sweeps(&rule)?;
        Ok(TransformSource {
            rule,
            root_weights,
            table,
            sweeps,
            next: 0,
        })
    }

    fn fresh_sweeps(rule: &QuadratureRule) -> Result<Vec<DegreeSweep>> {
        rule.nodes
            .iter()
            .map(|&x| DegreeSweep::new(rule.m, x, rule.parity))
            .collect()
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }
}

impl ColumnSource for TransformSource {
    fn n_rows(&self) -> usize {
        self.rule.n
    }

    fn n_cols(&self) -> usize {
        self.rule.n
    }

    fn next_columns(&mut self, count: usize) -> Result<DMatrix<f64>> {
        let n = self.rule.n;
        if self.next + count > n {
            return Err(Error::InvalidArgument(format!(
                "requested columns {}..{} of {n}",
                self.next,
                self.next + count
            )));
        }
        let mut block = DMatrix::zeros(n, count);
        for mut column in block.column_iter_mut() {
            for ((entry, sweep), &root) in column
                .iter_mut()
                .zip(self.sweeps.iter_mut())
                .zip(&self.root_weights)
            {
                *entry = (sweep.next_value_with(&self.table) * root).to_f64();
            }
        }
        self.next += count;
        Ok(block)
    }

    fn reset(&mut self) -> Result<()> {
        self.sweeps = Self::fresh_sweeps(&self.rule)?;
        self.next = 0;
        Ok(())
    }
}

/// Direction of [`TransformPlan::node_scaling`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// Multiply entry `i` by `sqrt(w_i)`.
    ToWeighted,
    /// Divide entry `i` by `sqrt(w_i)`.
    FromWeighted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformPlan {
    rule: Arc<QuadratureRule>,
    plan: ButterflyPlan,
}

impl TransformPlan {
    /// Computes the quadrature rule and compresses the matrix with the
    /// default block width.
    pub fn build(m: u32, n: usize, parity: Parity, epsilon: f64) -> Result<Self> {
        let rule = Arc::new(build_rule(m, n, parity)?);
        Self::from_rule(rule, epsilon, DEFAULT_BLOCK_WIDTH)
    }

    pub fn from_rule(rule: Arc<QuadratureRule>, epsilon: f64, block_width: usize) -> Result<Self> {
        let mut source = TransformSource::new(Arc::clone(&rule))?;
        let plan = build_plan(&mut source, epsilon, block_width)?;
        Ok(TransformPlan { rule, plan })
    }

    /// Pairs a rule with a previously built plan of matching size.
    pub fn from_parts(rule: Arc<QuadratureRule>, plan: ButterflyPlan) -> Result<Self> {
        rule.validate()?;
        if plan.n_rows() != rule.n || plan.n_cols() != rule.n {
            return Err(Error::DimensionMismatch {
                expected: rule.n,
                found: plan.n_cols(),
            });
        }
        Ok(TransformPlan { rule, plan })
    }

    pub fn m(&self) -> u32 {
        self.rule.m
    }

    pub fn n(&self) -> usize {
        self.rule.n
    }

    pub fn parity(&self) -> Parity {
        self.rule.parity
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn rule_arc(&self) -> Arc<QuadratureRule> {
        Arc::clone(&self.rule)
    }

    pub fn plan(&self) -> &ButterflyPlan {
        &self.plan
    }

    /// Values at the nodes (weighted) from chain coefficients.
    pub fn forward(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.plan.apply(coeffs)
    }

    /// Chain coefficients from weighted node values.
    pub fn inverse(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.plan.apply_transpose(values)
    }

    pub fn node_scaling(&self, values: &[f64], direction: Scaling) -> Result<Vec<f64>> {
        if values.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(&self.rule.weights)
            .map(|(v, w)| match direction {
                Scaling::ToWeighted => v * w.sqrt(),
                Scaling::FromWeighted => v / w.sqrt(),
            })
            .collect())
    }

    /// The uncompressed matrix, from a fresh column sweep.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        dense_transform_matrix(Arc::clone(&self.rule))
    }
}

/// The full `n × n` transform matrix for `rule`.
pub fn dense_transform_matrix(rule: Arc<QuadratureRule>) -> Result<DMatrix<f64>> {
    let n = rule.n;
    TransformSource::new(rule)?.next_columns(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::evaluate;

    #[test]
    fn small_matrix_matches_direct_evaluation() {
        let tp = TransformPlan::build(0, 4, Parity::Even, 1e-14).unwrap();
        let rule = tp.rule();
        for j in 0..4 {
            let mut e = vec![0.0; 4];
            e[j] = 1.0;
            let col = tp.forward(&e).unwrap();
            for (i, &x) in rule.nodes.iter().enumerate() {
                let direct =
                    rule.weights[i].sqrt() * evaluate(0, 2 * j as u32, x).unwrap().to_f64();
                assert!((col[i] - direct).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn one_point_transform() {
        for parity in [Parity::Even, Parity::Odd] {
            let tp = TransformPlan::build(0, 1, parity, 1e-14).unwrap();
            let a = tp.forward(&[1.0]).unwrap()[0];
            assert!((a.abs() - 1.0).abs() < 1e-14, "{parity}: {a}");
        }
    }

    #[test]
    fn scaling_round_trip() {
        let tp = TransformPlan::build(0, 1, Parity::Even, 1e-14).unwrap();
        let up = tp.node_scaling(&[1.0], Scaling::ToWeighted).unwrap();
        assert!((up[0] - 2f64.sqrt()).abs() < 1e-15);
        let tp = TransformPlan::build(3, 20, Parity::Odd, 1e-14).unwrap();
        let ones = vec![1.0; 20];
        let up = tp.node_scaling(&ones, Scaling::ToWeighted).unwrap();
        for (u, w) in up.iter().zip(&tp.rule().weights) {
            assert_eq!(*u, w.sqrt());
        }
        let back = tp.node_scaling(&up, Scaling::FromWeighted).unwrap();
        for b in back {
            assert!((b - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
        assert!(tp.node_scaling(&[1.0], Scaling::ToWeighted).is_err());
    }

    #[test]
    fn dense_matrix_is_orthogonal() {
        let tp = TransformPlan::build(7, 90, Parity::Odd, 1e-14).unwrap();
        let a = tp.dense_matrix().unwrap();
        let gram = a.transpose() * &a - DMatrix::<f64>::identity(90, 90);
        assert!(gram.amax() < 1e-12, "{}", gram.amax());
    }

    #[test]
    fn source_replays_after_reset() {
        let rule = Arc::new(build_rule(2, 30, Parity::Even).unwrap());
        let mut src = TransformSource::new(rule).unwrap();
        let first = src.next_columns(7).unwrap();
        src.next_columns(23).unwrap();
        assert!(src.next_columns(1).is_err());
        src.reset().unwrap();
        assert_eq!(src.next_columns(7).unwrap(), first);
    }
}
