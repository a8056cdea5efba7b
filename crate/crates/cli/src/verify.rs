//! Property suite behind `bfly verify`.

use std::io::Write;

use bfly_core::id::{id_fixed_rank, id_reconstruct};
use bfly_core::legendre::{DegreeSweep, Parity};
use bfly_core::oracle::{
    legendre_exact, planted_spectrum, singular_values, spectral_norm, weighted_monomial_integral,
};
use bfly_core::quadrature::build_rule;
use bfly_core::transform::TransformPlan;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::args::VerifyArgs;
use crate::error::{CliError, CliResult};
use crate::vectors::{generator, unit_vector};

const PARITIES: [Parity; 2] = [Parity::Even, Parity::Odd];

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    /// Instances checked.
    pub checked: usize,
    /// The first failing instance, if any.
    pub failure: Option<String>,
    /// Worst observed ratio of error to tolerance.
    pub worst: f64,
}

impl Outcome {
    fn new(name: &'static str) -> Self {
        Outcome {
            name,
            checked: 0,
            failure: None,
            worst: 0.0,
        }
    }

    fn record(&mut self, error: f64, tolerance: f64, instance: impl FnOnce() -> String) {
        self.checked += 1;
        let ratio = if error == 0.0 { 0.0 } else { error / tolerance };
        self.worst = self.worst.max(ratio);
        if !(error <= tolerance) && self.failure.is_none() {
            self.failure = Some(format!(
                "{}: error {error:.3e} > {tolerance:.3e}",
                instance()
            ));
        }
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    /// Counts and the first failure, without the verdict.
    pub fn detail(&self) -> String {
        match &self.failure {
            None => format!(
                "{} ({} checks, worst error/tolerance {:.3})",
                self.name, self.checked, self.worst
            ),
            Some(f) => format!("{} ({} checks) {f}", self.name, self.checked),
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        format!("{verdict} {}", self.detail())
    }
}

/// Interpolative decompositions of matrices with planted spectra obey the
/// spectral error bound `sqrt(4k(n-k)+1) σ_{k+1}` and keep entries within 2.
pub fn id_bounds(seed: u64, cases: usize) -> CliResult<Outcome> {
    let mut out = Outcome::new("id-bounds");
    let mut rng = generator(seed, 1);
    for case in 0..cases {
        let rows = rng.random_range(2..48usize);
        let cols = rng.random_range(2..48usize);
        let decay = rng.random_range(0.05..0.95);
        let full = rows.min(cols);
        let k = rng.random_range(1..=full);
        let sigma: Vec<f64> = (0..full).map(|i| f64::powi(decay, i as i32)).collect();
        let a = planted_spectrum(rows, cols, &sigma, || rng.sample::<f64, _>(StandardNormal));
        let id = id_fixed_rank(&a, k)?;
        let err = spectral_norm(&(id_reconstruct(&id, &id.skeleton_of(&a))? - &a));
        let sv = singular_values(&a);
        let tail = sv.get(k).copied().unwrap_or(0.0);
        let bound = ((4 * k * (cols - k) + 1) as f64).sqrt() * tail + 1e-13 * sv[0];
        let what = || format!("case {case}: {rows}x{cols} decay {decay} rank {k}");
        out.record(err, bound, what);
        out.record(id.max_abs_entry(), 2.0 + 1e-12, || {
            format!("{} interpolation entry", what())
        });
    }
    Ok(out)
}

/// Random even polynomials of the maximal exact degree integrate to
/// relative 1e-12. `perturb` scales every weight by `1 + perturb`.
pub fn quadrature_exactness(seed: u64, polys: usize, perturb: Option<f64>) -> CliResult<Outcome> {
    let mut out = Outcome::new("quadrature-exactness");
    let mut rng = generator(seed, 2);
    for m in [0u32, 1, 2, 8, 32] {
        for n in [1usize, 2, 3, 8, 64] {
            for parity in PARITIES {
                let mut rule = build_rule(m, n, parity)?;
                if let Some(d) = perturb {
                    rule.weights.iter_mut().for_each(|w| *w *= 1.0 + d);
                    if let Some(c) = rule.center_weight.as_mut() {
                        *c *= 1.0 + d;
                    }
                }
                let terms = rule.exact_degree() / 2 + 1;
                for p in 0..polys {
                    let coeffs: Vec<f64> =
                        (0..terms).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let (exact, scale) =
                        coeffs
                            .iter()
                            .enumerate()
                            .fold((0.0, 0.0), |(e, s), (q, &a)| {
                                let i = weighted_monomial_integral(m, q as u32);
                                (e + a * i, s + a.abs() * i)
                            });
                    let err = (rule.integrate_even_polynomial(&coeffs) - exact).abs() / scale;
                    out.record(err, 1e-12, || {
                        format!("m={m} n={n} {parity} polynomial {p}")
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Sweep values at ten quadrature nodes against exact rational evaluation,
/// relative to the largest value along each chain.
pub fn recurrence_oracle(degrees: usize) -> CliResult<Outcome> {
    let mut out = Outcome::new("recurrence-oracle");
    for m in [0u32, 5, 100] {
        let rule = build_rule(m, 100, Parity::Even)?;
        for i in 0..10 {
            let x = rule.nodes[i * 11];
            for parity in PARITIES {
                let mut sweep = DegreeSweep::new(m, x, parity)?;
                let values: Vec<(u32, f64, f64)> = (0..degrees)
                    .map(|j| {
                        let l = sweep.degree_at(j);
                        (
                            l,
                            sweep.next_value().to_f64(),
                            legendre_exact(m, l, x).to_f64(),
                        )
                    })
                    .collect();
                let scale = values.iter().map(|v| v.2.abs()).fold(0.0, f64::max);
                for (l, got, exact) in values {
                    out.record((got - exact).abs(), 1e-12 * scale, || {
                        format!("m={m} l={l} x={x}")
                    });
                }
            }
        }
    }
    Ok(out)
}

fn transform_plans(args: &VerifyArgs) -> CliResult<Vec<TransformPlan>> {
    let mut plans = Vec::new();
    for &n in &args.n {
        for &m in &args.m {
            for parity in PARITIES {
                plans.push(TransformPlan::build(m, n, parity, args.eps)?);
            }
        }
    }
    Ok(plans)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|<Av, w> - <v, Aᵀw>| ≤ 1e-12 ‖v‖ ‖w‖` for unit `v`, `w`.
pub fn adjoint(plans: &[TransformPlan], rng: &mut ChaCha8Rng) -> CliResult<Outcome> {
    let mut out = Outcome::new("adjoint");
    for tp in plans {
        for trial in 0..5 {
            let v = unit_vector(tp.n(), rng);
            let w = unit_vector(tp.n(), rng);
            let gap = (dot(&tp.forward(&v)?, &w) - dot(&v, &tp.inverse(&w)?)).abs();
            out.record(gap, 1e-12, || {
                format!("m={} n={} {} trial {trial}", tp.m(), tp.n(), tp.parity())
            });
        }
    }
    Ok(out)
}

/// `‖inverse(forward(v)) - v‖_∞ ≤ 1e-11`.
pub fn round_trip(plans: &[TransformPlan], rng: &mut ChaCha8Rng) -> CliResult<Outcome> {
    let mut out = Outcome::new("round-trip");
    for tp in plans {
        for trial in 0..5 {
            let v = unit_vector(tp.n(), rng);
            let back = tp.inverse(&tp.forward(&v)?)?;
            let err = back
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.record(err, 1e-11, || {
                format!("m={} n={} {} trial {trial}", tp.m(), tp.n(), tp.parity())
            });
        }
    }
    Ok(out)
}

pub fn run_suite(args: &VerifyArgs) -> CliResult<Vec<Outcome>> {
    if args.n.contains(&0) || !(args.eps > 0.0) {
        return Err(CliError::Usage(
            "--n must be positive and --eps must be positive".into(),
        ));
    }
    let plans = transform_plans(args)?;
    Ok(vec![
        id_bounds(args.seed, args.cases)?,
        quadrature_exactness(args.seed, args.cases, args.perturb)?,
        recurrence_oracle(args.degrees)?,
        adjoint(&plans, &mut generator(args.seed, 3))?,
        round_trip(&plans, &mut generator(args.seed, 4))?,
    ])
}

pub fn run_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<()> {
    let outcomes = run_suite(args)?;
    for o in &outcomes {
        writeln!(out, "{}", o.line())?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    if failed > 0 {
        return Err(CliError::Verification(failed, outcomes.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_keeps_first_failure() {
        let mut o = Outcome::new("x");
        o.record(1.0, 2.0, || "a".into());
        o.record(3.0, 2.0, || "b".into());
        o.record(5.0, 2.0, || "c".into());
        assert!(!o.passed());
        assert!(o.line().starts_with("FAIL x (3 checks) b:"), "{}", o.line());
        o.record(f64::NAN, 1.0, || "d".into());
        assert_eq!(o.checked, 4);
    }

    #[test]
    fn perturbed_weights_break_exactness() {
        assert!(quadrature_exactness(0, 2, None).unwrap().passed());
        let o = quadrature_exactness(0, 2, Some(1e-6)).unwrap();
        assert!(!o.passed());
        assert!(o.line().contains("m=0 n=1 even"), "{}", o.line());
    }

    #[test]
    fn small_id_suite_passes() {
        assert!(id_bounds(3, 20).unwrap().passed());
    }
}
