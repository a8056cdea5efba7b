//! Binary plan files.
//!
//! Layout, all integers `u64` and all reals `f64`, little-endian:
//!
//! ```text
//! "BFLY1"  n_rows n_cols epsilon block_width levels
//! node_count, then per node:
//!     level kind a b stripe_count
//!     per stripe: row_start row_end rank rest_len selected.. rest.. coefficients..
//! root_count, then per root:
//!     node skeleton_count, per skeleton: rows cols entries (column-major)
//! peak_words build_seconds
//! m parity n nodes.. weights.. has_center [center]
//! ```
//!
//! `kind` is 0 for a leaf (`a..b` its columns), 1 for a merge (`a`, `b` the
//! children) and 2 for a promotion (`a` the child, `b` zero).

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use bfly_core::butterfly::{ButterflyPlan, Node, NodeKind, PlanParts, Root, Stripe, Telemetry};
use bfly_core::id::CompactInterpolation;
use bfly_core::legendre::Parity;
use bfly_core::quadrature::QuadratureRule;
use bfly_core::transform::TransformPlan;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 5] = b"BFLY1";

/// A malformed plan file, located by byte offset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormatError {
    pub offset: usize,
    pub reason: String,
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "corrupt plan file at byte {}: {}",
            self.offset, self.reason
        )
    }
}

impl std::error::Error for FormatError {}

impl From<FormatError> for io::Error {
    fn from(e: FormatError) -> io::Error {
        io::Error::new(io::ErrorKind::InvalidData, e)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn indices(&mut self, v: &[usize]) {
        v.iter().for_each(|&i| self.u(i));
    }

    fn reals(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f(x));
    }
}

pub fn encode(plan: &TransformPlan) -> Vec<u8> {
    let parts = plan.plan().parts();
    let mut w = Writer(MAGIC.to_vec());
    w.u(parts.n_rows);
    w.u(parts.n_cols);
    w.f(parts.epsilon);
    w.u(parts.block_width);
    w.u(plan.plan().levels() as usize);

    w.u(parts.nodes.len());
    for node in &parts.nodes {
        w.u(node.level as usize);
        let (kind, a, b) = match &node.kind {
            NodeKind::Leaf { columns } => (0, columns.start, columns.end),
            NodeKind::Merge { left, right } => (1, *left, *right),
            NodeKind::Promote { child } => (2, *child, 0),
        };
        w.u(kind);
        w.u(a);
        w.u(b);
        w.u(node.stripes.len());
        for stripe in &node.stripes {
            let t = &stripe.interpolation;
            w.u(stripe.rows.start);
            w.u(stripe.rows.end);
            w.u(t.selected.len());
            w.u(t.rest.len());
            w.indices(&t.selected);
            w.indices(&t.rest);
            w.reals(&t.coefficients);
        }
    }

    w.u(parts.roots.len());
    for root in &parts.roots {
        w.u(root.node);
        w.u(root.skeletons.len());
        for s in &root.skeletons {
            w.u(s.nrows());
            w.u(s.ncols());
            w.reals(s.as_slice());
        }
    }
    w.u(parts.telemetry.peak_words);
    w.f(parts.telemetry.seconds);

    let rule = plan.rule();
    w.u(rule.m as usize);
    w.u(rule.parity.offset() as usize);
    w.u(rule.n);
    w.reals(&rule.nodes);
    w.reals(&rule.weights);
    match rule.center_weight {
        Some(c) => {
            w.u(1);
            w.f(c);
        }
        None => w.u(0),
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, FormatError> {
        Err(FormatError {
            offset: self.pos,
            reason: reason.into(),
        })
    }

    fn take(&mut self, len: usize) -> Result<&[u8], FormatError> {
        if self.bytes.len() - self.pos < len {
            return self.fail(format!("truncated, expected {len} more bytes"));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u(&mut self) -> Result<usize, FormatError> {
        let raw = u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes"));
        match usize::try_from(raw) {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos -= 8;
                self.fail(format!("value {raw} does not fit in memory"))
            }
        }
    }

    fn f(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("eight bytes"),
        ))
    }

    /// A length prefix that must leave room for `len` further 8-byte words.
    fn count(&mut self) -> Result<usize, FormatError> {
        let len = self.u()?;
        self.room(len)?;
        Ok(len)
    }

    fn room(&self, words: usize) -> Result<(), FormatError> {
        let left = (self.bytes.len() - self.pos) / 8;
        if words > left {
            return self.fail(format!("length {words} exceeds the {left} words left"));
        }
        Ok(())
    }

    fn indices(&mut self, len: usize) -> Result<Vec<usize>, FormatError> {
        (0..len).map(|_| self.u()).collect()
    }

    fn reals(&mut self, len: usize) -> Result<Vec<f64>, FormatError> {
        (0..len).map(|_| self.f()).collect()
    }

    fn small(&mut self, what: &str) -> Result<u32, FormatError> {
        let v = self.u()?;
        match u32::try_from(v) {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos -= 8;
                self.fail(format!("{what} {v} out of range"))
            }
        }
    }

    fn node(&mut self) -> Result<Node, FormatError> {
        let level = self.small("level")?;
        let start = self.pos;
        let (kind, a, b) = (self.u()?, self.u()?, self.u()?);
        let kind = match kind {
            0 if a < b => NodeKind::Leaf { columns: a..b },
            1 => NodeKind::Merge { left: a, right: b },
            2 if b == 0 => NodeKind::Promote { child: a },
            _ => {
                self.pos = start;
                return self.fail(format!("bad node record ({kind}, {a}, {b})"));
            }
        };
        let stripe_count = self.count()?;
        let mut stripes = Vec::with_capacity(stripe_count);
        for _ in 0..stripe_count {
            let (row_start, row_end) = (self.u()?, self.u()?);
            if row_start > row_end {
                self.pos -= 16;
                return self.fail("stripe rows decrease");
            }
            let k = self.count()?;
            let rest = self.count()?;
            let selected = self.indices(k)?;
            let rest = self.indices(rest)?;
            let words = k.saturating_mul(rest.len());
            self.room(words)?;
            let coefficients = self.reals(words)?;
            stripes.push(Stripe {
                rows: row_start..row_end,
                interpolation: CompactInterpolation {
                    selected,
                    rest,
                    coefficients,
                },
            });
        }
        Ok(Node {
            level,
            kind,
            stripes,
        })
    }

    fn root(&mut self) -> Result<Root, FormatError> {
        let node = self.u()?;
        let count = self.count()?;
        let mut skeletons = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = self.u()?;
            let cols = self.u()?;
            let words = rows.saturating_mul(cols);
            self.room(words)?;
            skeletons.push(DMatrix::from_vec(rows, cols, self.reals(words)?));
        }
        Ok(Root { node, skeletons })
    }
}

pub fn decode(bytes: &[u8]) -> Result<TransformPlan, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        r.pos = 0;
        return r.fail("bad magic or unsupported version");
    }
    let n_rows = r.u()?;
    let n_cols = r.u()?;
    let epsilon = r.f()?;
    let block_width = r.u()?;
    let levels_at = r.pos;
    let levels = r.u()?;

    let node_count = r.count()?;
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        nodes.push(r.node()?);
    }
    let root_count = r.count()?;
    let mut roots = Vec::with_capacity(root_count);
    for _ in 0..root_count {
        roots.push(r.root()?);
    }
    let telemetry = Telemetry {
        peak_words: r.u()?,
        seconds: r.f()?,
    };
    let plan_end = r.pos;
    let parts = PlanParts {
        n_rows,
        n_cols,
        epsilon,
        block_width,
        nodes,
        roots,
        telemetry,
    };
    let plan = ButterflyPlan::from_parts(parts).map_err(|e| FormatError {
        offset: plan_end,
        reason: e.to_string(),
    })?;
    if plan.levels() as usize != levels {
        r.pos = levels_at;
        return r.fail(format!(
            "header claims {levels} levels, nodes give {}",
            plan.levels()
        ));
    }

    let m = r.small("order")?;
    let parity = match r.u()? {
        0 => Parity::Even,
        1 => Parity::Odd,
        p => {
            r.pos -= 8;
            return r.fail(format!("bad parity {p}"));
        }
    };
    let n = r.count()?;
    let nodes = r.reals(n)?;
    r.room(n)?;
    let weights = r.reals(n)?;
    let center_weight = match r.u()? {
        0 => None,
        1 => Some(r.f()?),
        c => {
            r.pos -= 8;
            return r.fail(format!("bad center flag {c}"));
        }
    };
    if r.pos != bytes.len() {
        return r.fail(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let rule = QuadratureRule {
        m,
        n,
        parity,
        nodes,
        weights,
        center_weight,
    };
    TransformPlan::from_parts(Arc::new(rule), plan).map_err(|e| FormatError {
        offset: plan_end,
        reason: e.to_string(),
    })
}

pub fn save(path: &Path, plan: &TransformPlan) -> CliResult<()> {
    fs::write(path, encode(plan)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> CliResult<TransformPlan> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| CliError::io(path, e.into()))
}
