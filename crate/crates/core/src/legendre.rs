//! Normalized associated Legendre functions `P̄^m_l` on (-1, 1).
//!
//! Functions of a fixed order split into an even chain (degrees `m + 2j`) and
//! an odd chain (degrees `m + 2j + 1`). Each chain is closed under a
//! three-term recurrence in `x^2`,
//!
//! ```text
//! x^2 P̄_l = c_{l-2} P̄_{l-2} + d_l P̄_l + c_l P̄_{l+2},
//! ```
//!
//! which [`DegreeSweep`] runs forward one degree at a time. All values are
//! carried as [`ScaledReal`]s so that orders in the tens of thousands never
//! underflow.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaled::ScaledReal;

/// Which degree chain of a fixed order is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Degrees `m, m + 2, m + 4, ...`
    Even,
    /// Degrees `m + 1, m + 3, m + 5, ...`
    Odd,
}

impl Parity {
    /// Offset of the chain's first degree above the order.
    pub fn offset(self) -> u32 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }

    /// Parity of `l - m`.
    pub fn of_degree(m: u32, l: u32) -> Parity {
        if (l - m).is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Parity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "even" => Ok(Parity::Even),
            "odd" => Ok(Parity::Odd),
            other => Err(Error::InvalidArgument(format!(
                "parity must be `even` or `odd`, got `{other}`"
            ))),
        }
    }
}

/// Off-diagonal recurrence coefficient `c_l`.
#[inline]
pub fn c_coefficient(m: u32, l: u32) -> f64 {
    let (m, l) = (m as f64, l as f64);
    let lo = (l - m + 1.0) * (l - m + 2.0) / (2.0 * l + 3.0);
    let hi = (l + m + 1.0) * (l + m + 2.0) / ((2.0 * l + 1.0) * (2.0 * l + 3.0) * (2.0 * l + 5.0));
    (lo * hi).sqrt()
}

/// Diagonal recurrence coefficient `d_l`.
#[inline]
pub fn d_coefficient(m: u32, l: u32) -> f64 {
    let (m, l) = (m as f64, l as f64);
    (2.0 * l * (l + 1.0) - 2.0 * m * m - 1.0) / ((2.0 * l - 1.0) * (2.0 * l + 3.0))
}

/// Tabulated `c_l` and `d_l` for `l = m ..= max_degree`.
#[derive(Clone, Debug)]
pub struct RecurrenceCoefficients {
    m: u32,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl RecurrenceCoefficients {
    pub fn new(m: u32, max_degree: u32) -> Self {
        let max_degree = max_degree.max(m);
        let (c, d) = (m..=max_degree)
            .map(|l| (c_coefficient(m, l), d_coefficient(m, l)))
            .unzip();
        RecurrenceCoefficients { m, c, d }
    }

    pub fn order(&self) -> u32 {
        self.m
    }

    pub fn max_degree(&self) -> u32 {
        self.m + self.c.len() as u32 - 1
    }

    #[inline]
    pub fn c(&self, l: u32) -> f64 {
        self.c[(l - self.m) as usize]
    }

    #[inline]
    pub fn d(&self, l: u32) -> f64 {
        self.d[(l - self.m) as usize]
    }

    pub fn c_values(&self) -> &[f64] {
        &self.c
    }

    pub fn d_values(&self) -> &[f64] {
        &self.d
    }
}

fn check_domain(x: f64) -> Result<()> {
    if x.is_finite() && x.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { x })
    }
}

/// `P̄^m_m(x)`, `P̄^m_{m+1}(x)`, `P̄^m_{m+2}(x)` and `P̄^m_{m+3}(x)`.
///
/// `P̄^m_m(x) = sqrt(1/2) * prod_{k=1..m} sqrt((2k+1)/(2k)) * (1-x^2)^{m/2}`
/// is accumulated with an explicit exponent; the next degree follows from
/// `P̄^m_{m+1} = sqrt(2m+3) x P̄^m_m`, and the two after that from the
/// two-term form of the recurrence at the bottom of each chain.
pub fn first_values(m: u32, x: f64) -> Result<[ScaledReal; 4]> {
    check_domain(x)?;
    let mut norm = ScaledReal::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    for k in 1..=m as u64 {
        let k = k as f64;
        norm = norm * ((2.0 * k + 1.0) / (2.0 * k)).sqrt();
    }
    let sine = ((1.0 - x) * (1.0 + x)).sqrt();
    let p_m = norm * ScaledReal::from_f64(sine).powi(m as u64);
    let p_m1 = p_m * ((2.0 * m as f64 + 3.0).sqrt() * x);
    let x2 = x * x;
    let p_m2 = p_m * ((x2 - d_coefficient(m, m)) / c_coefficient(m, m));
    let p_m3 = p_m1 * ((x2 - d_coefficient(m, m + 1)) / c_coefficient(m, m + 1));
    Ok([p_m, p_m1, p_m2, p_m3])
}

/// Forward evaluation of one degree chain at a fixed point.
///
/// Each call to [`DegreeSweep::next_value`] returns `P̄^m_l(x)` for the
/// chain's next degree `l` and advances in O(1) work.
#[derive(Clone, Debug)]
pub struct DegreeSweep {
    m: u32,
    x: f64,
    x2: f64,
    parity: Parity,
    before: ScaledReal,
    pending: ScaledReal,
    next_j: usize,
}

impl DegreeSweep {
    pub fn new(m: u32, x: f64, parity: Parity) -> Result<Self> {
        let seeds = first_values(m, x)?;
        let pending = match parity {
            Parity::Even => seeds[0],
            Parity::Odd => seeds[1],
        };
        Ok(DegreeSweep {
            m,
            x,
            x2: x * x,
            parity,
            before: ScaledReal::ZERO,
            pending,
            next_j: 0,
        })
    }

    pub fn order(&self) -> u32 {
        self.m
    }

    pub fn point(&self) -> f64 {
        self.x
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Index `j` of the value the next call will return.
    pub fn next_index(&self) -> usize {
        self.next_j
    }

    /// Degree of the `j`th value of this chain.
    pub fn degree_at(&self, j: usize) -> u32 {
        self.m + 2 * j as u32 + self.parity.offset()
    }

    /// Value the next call to `next_value` will return, without advancing.
    pub fn peek(&self) -> ScaledReal {
        self.pending
    }

    /// Value returned by the previous call (zero before the first call).
    pub fn previous(&self) -> ScaledReal {
        self.before
    }

    #[inline]
    fn advance(&mut self, c_prev: f64, d: f64, c: f64) -> ScaledReal {
        let out = self.pending;
        let lead = (self.x2 - d) / c;
        let following = if self.next_j == 0 {
            out * lead
        } else {
            out * lead - self.before * (c_prev / c)
        };
        self.before = out;
        self.pending = following;
        self.next_j += 1;
        out
    }

    /// Returns the current value and steps to the next degree of the chain.
    #[inline]
    pub fn next_value(&mut self) -> ScaledReal {
        let l = self.degree_at(self.next_j);
        let c_prev = if self.next_j == 0 {
            0.0
        } else {
            c_coefficient(self.m, l - 2)
        };
        self.advance(c_prev, d_coefficient(self.m, l), c_coefficient(self.m, l))
    }

    /// Same as [`next_value`](Self::next_value) with tabulated coefficients.
    ///
    /// # Panics
    /// If the table's order differs from the sweep's or it does not reach
    /// the current degree.
    #[inline]
    pub fn next_value_with(&mut self, table: &RecurrenceCoefficients) -> ScaledReal {
        assert_eq!(table.order(), self.m, "coefficient table for another order");
        let l = self.degree_at(self.next_j);
        let c_prev = if self.next_j == 0 {
            0.0
        } else {
            table.c(l - 2)
        };
        self.advance(c_prev, table.d(l), table.c(l))
    }
}

impl Iterator for DegreeSweep {
    type Item = ScaledReal;

    fn next(&mut self) -> Option<ScaledReal> {
        Some(self.next_value())
    }
}

/// `P̄^m_l(x)` by running the appropriate chain up to degree `l`.
pub fn evaluate(m: u32, l: u32, x: f64) -> Result<ScaledReal> {
    if l < m {
        return Err(Error::InvalidArgument(format!(
            "degree {l} below order {m}"
        )));
    }
    let mut sweep = DegreeSweep::new(m, x, Parity::of_degree(m, l))?;
    let steps = ((l - m) / 2) as usize;
    for _ in 0..steps {
        sweep.next_value();
    }
    Ok(sweep.peek())
}

/// `(P̄^m_l(x), P̄^m_{l-1}(x))`, the second being zero when `l = m`.
///
/// Both chains are swept; `table`, when given, must cover degree `l`.
pub fn evaluate_with_predecessor(
    m: u32,
    l: u32,
    x: f64,
    table: Option<&RecurrenceCoefficients>,
) -> Result<(ScaledReal, ScaledReal)> {
    if l < m {
        return Err(Error::InvalidArgument(format!(
            "degree {l} below order {m}"
        )));
    }
    let run = |degree: u32| -> Result<ScaledReal> {
        let mut sweep = DegreeSweep::new(m, x, Parity::of_degree(m, degree))?;
        let steps = ((degree - m) / 2) as usize;
        match table {
            Some(t) => {
                for _ in 0..steps {
                    sweep.next_value_with(t);
                }
            }
            None => {
                for _ in 0..steps {
                    sweep.next_value();
                }
            }
        }
        Ok(sweep.peek())
    };
    let p_l = run(l)?;
    let p_lm1 = if l == m {
        ScaledReal::ZERO
    } else {
        run(l - 1)?
    };
    Ok((p_l, p_lm1))
}

/// Coefficients of the unit-step recurrence in degree,
///
/// ```text
/// P̄_{l+1} = a_l x P̄_l - b_l P̄_{l-1},
/// ```
///
/// for `l = m .. max_degree`. Unlike the chain recurrence in `x^2`, whose
/// characteristic roots coalesce at `x = 0`, this one stays well
/// conditioned near the origin, and a single pass yields both `P̄_l` and
/// `P̄_{l-1}`.
#[derive(Clone, Debug)]
pub struct UnitStepCoefficients {
    m: u32,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl UnitStepCoefficients {
    pub fn new(m: u32, max_degree: u32) -> Self {
        let (a, b) = (m..max_degree.max(m))
            .map(|l| {
                let (mf, lf) = (m as f64, l as f64);
                let den = (lf + 1.0 - mf) * (lf + 1.0 + mf);
                let a = ((2.0 * lf + 1.0) * (2.0 * lf + 3.0) / den).sqrt();
                let b = if l == m {
                    0.0
                } else {
                    ((2.0 * lf + 3.0) * (lf - mf) * (lf + mf) / ((2.0 * lf - 1.0) * den)).sqrt()
                };
                (a, b)
            })
            .unzip();
        UnitStepCoefficients { m, a, b }
    }

    pub fn max_degree(&self) -> u32 {
        self.m + self.a.len() as u32
    }

    /// `(P̄^m_l(x), P̄^m_{l-1}(x))`.
    ///
    /// # Panics
    /// If `l` lies outside `m ..= max_degree`.
    pub fn evaluate_pair(&self, l: u32, x: f64) -> Result<(ScaledReal, ScaledReal)> {
        assert!(
            l >= self.m && l <= self.max_degree(),
            "degree {l} outside the table"
        );
        let mut current = first_values(self.m, x)?[0];
        let mut previous = ScaledReal::ZERO;
        for k in 0..(l - self.m) as usize {
            let next = current * (self.a[k] * x) - previous * self.b[k];
            previous = current;
            current = next;
        }
        Ok((current, previous))
    }
}

/// `(1 - x^2) d/dx P̄^m_l(x)` as a scaled value.
#[inline]
pub fn weighted_derivative_scaled(
    m: u32,
    l: u32,
    x: f64,
    p_l: ScaledReal,
    p_lm1: ScaledReal,
) -> ScaledReal {
    let (mf, lf) = (m as f64, l as f64);
    let link = if l == m {
        0.0
    } else {
        ((2.0 * lf + 1.0) * (lf - mf) * (lf + mf) / (2.0 * lf - 1.0)).sqrt()
    };
    p_l * (-lf * x) + p_lm1 * link
}

/// `d/dx P̄^m_l(x)` as a scaled value. See [`derivative`].
pub fn derivative_scaled(
    m: u32,
    l: u32,
    x: f64,
    p_l: ScaledReal,
    p_lm1: ScaledReal,
) -> Result<ScaledReal> {
    check_domain(x)?;
    Ok(weighted_derivative_scaled(m, l, x, p_l, p_lm1) * (1.0 / ((1.0 - x) * (1.0 + x))))
}

/// `d/dx P̄^m_l(x)` from `p_l = P̄^m_l(x)` and `p_lm1 = P̄^m_{l-1}(x)`, via
///
/// ```text
/// (1 - x^2) P̄'_l = -l x P̄_l + sqrt((2l+1)(l^2-m^2)/(2l-1)) P̄_{l-1}.
/// ```
pub fn derivative(m: u32, l: u32, x: f64, p_l: ScaledReal, p_lm1: ScaledReal) -> Result<f64> {
    if l < m {
        return Err(Error::InvalidArgument(format!(
            "degree {l} below order {m}"
        )));
    }
    Ok(derivative_scaled(m, l, x, p_l, p_lm1)?.to_f64())
}
