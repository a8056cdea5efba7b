//! Multilevel (butterfly) compression of a matrix delivered column block by
//! column block, and fast application of the compressed form and its
//! transpose.
//!
//! The build is depth-first: each new leaf is compressed and then merged
//! with its pending neighbours for as long as two pending nodes share a
//! level, so only the skeletons of unmerged nodes are ever held in memory.
//!
//! A node at level `ℓ` covers a contiguous column range and splits the rows
//! into `2^(ℓ-1)` stripes. Each stripe carries an interpolation matrix that
//! maps the coefficients of its children (leaf: the input vector segment)
//! to coefficients on the stripe's skeleton columns. Nodes that stop merging
//! become roots and keep their skeleton columns.

use std::ops::Range;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::id::{id_with_tolerance, CompactInterpolation, InterpolativeDecomposition};

pub const DEFAULT_BLOCK_WIDTH: usize = 60;

/// Sequential producer of matrix columns.
pub trait ColumnSource {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// The next `count` columns as an `n_rows × count` matrix, continuing
    /// after the last column returned.
    fn next_columns(&mut self, count: usize) -> Result<DMatrix<f64>>;
    /// Rewinds to column 0.
    fn reset(&mut self) -> Result<()>;
}

/// Columns of an explicit matrix.
#[derive(Clone, Debug)]
pub struct DenseSource {
    matrix: DMatrix<f64>,
    next: usize,
}

impl DenseSource {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        DenseSource { matrix, next: 0 }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ColumnSource for DenseSource {
    fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn next_columns(&mut self, count: usize) -> Result<DMatrix<f64>> {
        let end = self.next + count;
        if end > self.matrix.ncols() {
            return Err(Error::InvalidArgument(format!(
                "requested columns {}..{end} of {}",
                self.next,
                self.matrix.ncols()
            )));
        }
        let block = self.matrix.columns(self.next, count).into_owned();
        self.next = end;
        Ok(block)
    }

    fn reset(&mut self) -> Result<()> {
        self.next = 0;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Leaf {
        columns: Range<usize>,
    },
    Merge {
        left: usize,
        right: usize,
    },
    /// One-sided merge of a node that has no partner at its level.
    Promote {
        child: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stripe {
    pub rows: Range<usize>,
    pub interpolation: CompactInterpolation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub level: u32,
    pub kind: NodeKind,
    pub stripes: Vec<Stripe>,
}

/// A node that was not merged further, with one skeleton per stripe
/// (`stripe rows × stripe rank`).
#[derive(Clone, Debug, PartialEq)]
pub struct Root {
    pub node: usize,
    pub skeletons: Vec<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Telemetry {
    /// Peak number of matrix-entry words held during the build.
    pub peak_words: usize,
    pub seconds: f64,
}

/// Raw contents of a plan, in build order. Children precede parents.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanParts {
    pub n_rows: usize,
    pub n_cols: usize,
    pub epsilon: f64,
    pub block_width: usize,
    pub nodes: Vec<Node>,
    pub roots: Vec<Root>,
    pub telemetry: Telemetry,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanStats {
    pub k_max: usize,
    pub k_avg: f64,
    pub k_sigma: f64,
    pub id_count: usize,
    pub levels: u32,
    pub leaves: usize,
    /// Interpolation entries plus root skeleton entries.
    pub stored_words: usize,
    pub peak_words: usize,
    pub build_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ButterflyPlan {
    parts: PlanParts,
    /// Offset of each node's first stripe coefficient; stripes follow
    /// contiguously.
    offsets: Vec<usize>,
    coefficient_len: usize,
}

fn split_rows(rows: &Range<usize>) -> (Range<usize>, Range<usize>) {
    let mid = rows.start + rows.len().div_ceil(2);
    (rows.start..mid, mid..rows.end)
}

fn skeleton_words(skeletons: &[DMatrix<f64>]) -> usize {
    skeletons.iter().map(|s| s.len()).sum()
}

impl ButterflyPlan {
    /// Validates `parts` and lays out the coefficient buffer.
    pub fn from_parts(parts: PlanParts) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if parts.n_rows == 0 || parts.n_cols == 0 {
            return bad("plan with an empty dimension".into());
        }
        let mut consumed = vec![false; parts.nodes.len()];
        let mut next_column = 0;
        let mut offsets = Vec::with_capacity(parts.nodes.len());
        let mut total = 0;
        let ranks = |node: &Node| -> Vec<usize> {
            node.stripes
                .iter()
                .map(|s| s.interpolation.rank())
                .collect()
        };
        for (i, node) in parts.nodes.iter().enumerate() {
            for stripe in &node.stripes {
                stripe.interpolation.validate()?;
            }
            let mut take = |c: usize| -> Result<()> {
                if c >= i || consumed[c] {
                    return Err(Error::InvalidArgument(format!(
                        "node {i} refers to unavailable child {c}"
                    )));
                }
                consumed[c] = true;
                Ok(())
            };
            let (expected_rows, inputs): (Vec<Range<usize>>, Vec<usize>) = match &node.kind {
                NodeKind::Leaf { columns } => {
                    if node.level != 1 || columns.start != next_column || columns.is_empty() {
                        return bad(format!("leaf {i} is out of sequence"));
                    }
                    next_column = columns.end;
                    (vec![0..parts.n_rows], vec![columns.len()])
                }
                NodeKind::Merge { left, right } => {
                    take(*left)?;
                    take(*right)?;
                    let (l, r) = (&parts.nodes[*left], &parts.nodes[*right]);
                    if l.level != r.level || node.level != l.level + 1 {
                        return bad(format!("merge node {i} has inconsistent levels"));
                    }
                    if l.stripes
                        .iter()
                        .map(|s| &s.rows)
                        .ne(r.stripes.iter().map(|s| &s.rows))
                    {
                        return bad(format!("merge node {i} joins misaligned stripes"));
                    }
                    let rows = l.stripes.iter().map(|s| s.rows.clone()).collect();
                    let inputs = ranks(l).iter().zip(ranks(r)).map(|(a, b)| a + b).collect();
                    (rows, inputs)
                }
                NodeKind::Promote { child } => {
                    take(*child)?;
                    let c = &parts.nodes[*child];
                    if node.level != c.level + 1 {
                        return bad(format!("promoted node {i} has an inconsistent level"));
                    }
                    (c.stripes.iter().map(|s| s.rows.clone()).collect(), ranks(c))
                }
            };
            let split = !matches!(node.kind, NodeKind::Leaf { .. });
            let factor = if split { 2 } else { 1 };
            if node.stripes.len() != factor * expected_rows.len() {
                return bad(format!("node {i} has {} stripes", node.stripes.len()));
            }
            for (s, (rows, &width)) in expected_rows.iter().zip(&inputs).enumerate() {
                let parts_rows = if split {
                    let (top, bottom) = split_rows(rows);
                    vec![top, bottom]
                } else {
                    vec![rows.clone()]
                };
                for (h, want) in parts_rows.into_iter().enumerate() {
                    let stripe = &node.stripes[factor * s + h];
                    if stripe.rows != want || stripe.interpolation.n_cols() != width {
                        return bad(format!(
                            "node {i} stripe {} does not fit its inputs",
                            factor * s + h
                        ));
                    }
                }
            }
            offsets.push(total);
            total += node
                .stripes
                .iter()
                .map(|s| s.interpolation.rank())
                .sum::<usize>();
        }
        if next_column != parts.n_cols {
            return bad(format!(
                "leaves cover {next_column} of {} columns",
                parts.n_cols
            ));
        }
        for root in &parts.roots {
            let Some(node) = parts.nodes.get(root.node) else {
                return bad(format!("root refers to missing node {}", root.node));
            };
            if consumed[root.node] {
                return bad(format!("node {} is both merged and a root", root.node));
            }
            consumed[root.node] = true;
            if root.skeletons.len() != node.stripes.len() {
                return bad(format!(
                    "root {} has the wrong number of skeletons",
                    root.node
                ));
            }
            for (skel, stripe) in root.skeletons.iter().zip(&node.stripes) {
                if skel.shape() != (stripe.rows.len(), stripe.interpolation.rank()) {
                    return bad(format!("root {} has a misshapen skeleton", root.node));
                }
            }
        }
        if let Some(orphan) = consumed.iter().position(|&c| !c) {
            return bad(format!("node {orphan} is neither merged nor a root"));
        }
        Ok(ButterflyPlan {
            parts,
            offsets,
            coefficient_len: total,
        })
    }

    pub fn parts(&self) -> &PlanParts {
        &self.parts
    }

    pub fn into_parts(self) -> PlanParts {
        self.parts
    }

    pub fn n_rows(&self) -> usize {
        self.parts.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.parts.n_cols
    }

    pub fn epsilon(&self) -> f64 {
        self.parts.epsilon
    }

    pub fn block_width(&self) -> usize {
        self.parts.block_width
    }

    pub fn levels(&self) -> u32 {
        self.parts.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    fn stripe_slot(&self, node: usize, stripe: usize) -> Range<usize> {
        let stripes = &self.parts.nodes[node].stripes;
        let start = self.offsets[node]
            + stripes[..stripe]
                .iter()
                .map(|s| s.interpolation.rank())
                .sum::<usize>();
        start..start + stripes[stripe].interpolation.rank()
    }

    fn node_slots(&self, node: usize) -> Vec<Range<usize>> {
        let mut start = self.offsets[node];
        self.parts.nodes[node]
            .stripes
            .iter()
            .map(|s| {
                let r = start..start + s.interpolation.rank();
                start = r.end;
                r
            })
            .collect()
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                found: v.len(),
            });
        }
        let mut coef = vec![0.0; self.coefficient_len];
        let mut scratch = Vec::new();
        for (i, node) in self.parts.nodes.iter().enumerate() {
            let (done, current) = coef.split_at_mut(self.offsets[i]);
            let base = self.offsets[i];
            let slots = self.node_slots(i);
            let out = |s: usize| slots[s].start - base..slots[s].end - base;
            match &node.kind {
                NodeKind::Leaf { columns } => {
                    let r = out(0);
                    node.stripes[0]
                        .interpolation
                        .apply(&v[columns.clone()], &mut current[r]);
                }
                NodeKind::Merge { left, right } => {
                    let left_slots = self.node_slots(*left);
                    let right_slots = self.node_slots(*right);
                    for (s, (ls, rs)) in left_slots.iter().zip(&right_slots).enumerate() {
                        scratch.clear();
                        scratch.extend_from_slice(&done[ls.clone()]);
                        scratch.extend_from_slice(&done[rs.clone()]);
                        for h in 0..2 {
                            let r = out(2 * s + h);
                            node.stripes[2 * s + h]
                                .interpolation
                                .apply(&scratch, &mut current[r]);
                        }
                    }
                }
                NodeKind::Promote { child } => {
                    for (s, cs) in self.node_slots(*child).iter().enumerate() {
                        for h in 0..2 {
                            let r = out(2 * s + h);
                            node.stripes[2 * s + h]
                                .interpolation
                                .apply(&done[cs.clone()], &mut current[r]);
                        }
                    }
                }
            }
        }
        let mut y = vec![0.0; self.n_rows()];
        for root in &self.parts.roots {
            let stripes = &self.parts.nodes[root.node].stripes;
            for (s, (skel, stripe)) in root.skeletons.iter().zip(stripes).enumerate() {
                let c = &coef[self.stripe_slot(root.node, s)];
                let target = &mut y[stripe.rows.clone()];
                for (col, &cj) in skel.column_iter().zip(c) {
                    if cj != 0.0 {
                        for (t, &a) in target.iter_mut().zip(col.iter()) {
                            *t += a * cj;
                        }
                    }
                }
            }
        }
        Ok(y)
    }

    /// `Aᵀ w`.
    pub fn apply_transpose(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                found: w.len(),
            });
        }
        let mut grad = vec![0.0; self.coefficient_len];
        for root in &self.parts.roots {
            let stripes = &self.parts.nodes[root.node].stripes;
            for (s, (skel, stripe)) in root.skeletons.iter().zip(stripes).enumerate() {
                let slot = self.stripe_slot(root.node, s);
                let source = &w[stripe.rows.clone()];
                for (g, col) in grad[slot].iter_mut().zip(skel.column_iter()) {
                    *g = col.iter().zip(source).map(|(a, b)| a * b).sum();
                }
            }
        }
        let mut x = vec![0.0; self.n_cols()];
        let mut scratch = Vec::new();
        for (i, node) in self.parts.nodes.iter().enumerate().rev() {
            let (earlier, current) = grad.split_at_mut(self.offsets[i]);
            let base = self.offsets[i];
            let slots = self.node_slots(i);
            let own = |s: usize| slots[s].start - base..slots[s].end - base;
            match &node.kind {
                NodeKind::Leaf { columns } => {
                    node.stripes[0]
                        .interpolation
                        .apply_transpose_add(&current[own(0)], &mut x[columns.clone()]);
                }
                NodeKind::Merge { left, right } => {
                    let left_slots = self.node_slots(*left);
                    let right_slots = self.node_slots(*right);
                    for (s, (ls, rs)) in left_slots.iter().zip(&right_slots).enumerate() {
                        scratch.clear();
                        scratch.resize(ls.len() + rs.len(), 0.0);
                        for h in 0..2 {
                            node.stripes[2 * s + h]
                                .interpolation
                                .apply_transpose_add(&current[own(2 * s + h)], &mut scratch);
                        }
                        for (g, v) in earlier[ls.clone()].iter_mut().zip(&scratch[..ls.len()]) {
                            *g += v;
                        }
                        for (g, v) in earlier[rs.clone()].iter_mut().zip(&scratch[ls.len()..]) {
                            *g += v;
                        }
                    }
                }
                NodeKind::Promote { child } => {
                    for (s, cs) in self.node_slots(*child).iter().enumerate() {
                        for h in 0..2 {
                            node.stripes[2 * s + h].interpolation.apply_transpose_add(
                                &current[own(2 * s + h)],
                                &mut earlier[cs.clone()],
                            );
                        }
                    }
                }
            }
        }
        Ok(x)
    }

    pub fn stats(&self) -> PlanStats {
        let ranks: Vec<usize> = self
            .parts
            .nodes
            .iter()
            .flat_map(|n| n.stripes.iter().map(|s| s.interpolation.rank()))
            .collect();
        let count = ranks.len().max(1) as f64;
        let k_avg = ranks.iter().sum::<usize>() as f64 / count;
        let var = ranks
            .iter()
            .map(|&k| (k as f64 - k_avg).powi(2))
            .sum::<f64>()
            / count;
        PlanStats {
            k_max: ranks.iter().copied().max().unwrap_or(0),
            k_avg,
            k_sigma: var.sqrt(),
            id_count: ranks.len(),
            levels: self.levels(),
            leaves: self
                .parts
                .nodes
                .iter()
                .filter(|n| matches!(n.kind, NodeKind::Leaf { .. }))
                .count(),
            stored_words: self.stored_words(),
            peak_words: self.parts.telemetry.peak_words,
            build_seconds: self.parts.telemetry.seconds,
        }
    }

    pub fn stored_words(&self) -> usize {
        let interp: usize = self
            .parts
            .nodes
            .iter()
            .flat_map(|n| n.stripes.iter().map(|s| s.interpolation.words()))
            .sum();
        let roots: usize = self
            .parts
            .roots
            .iter()
            .map(|r| skeleton_words(&r.skeletons))
            .sum();
        interp + roots
    }
}

struct Pending {
    node: usize,
    level: u32,
    /// Squared Frobenius norm of the node's full column block.
    norm2: f64,
    skeletons: Vec<DMatrix<f64>>,
}

struct Builder {
    n_rows: usize,
    epsilon: f64,
    block_width: usize,
    nodes: Vec<Node>,
    roots: Vec<Root>,
    stack: Vec<Pending>,
    /// Interpolation plus root skeleton words.
    kept_words: usize,
    pending_words: usize,
    peak_words: usize,
}

impl Builder {
    fn note_peak(&mut self, transient: usize) {
        let now = self.kept_words + self.pending_words + transient;
        self.peak_words = self.peak_words.max(now);
    }

    fn compress(
        &self,
        block: &DMatrix<f64>,
        tolerance: f64,
    ) -> Result<(InterpolativeDecomposition, DMatrix<f64>)> {
        let id = id_with_tolerance(block, tolerance)?;
        let skeleton = id.skeleton_of(block);
        Ok((id, skeleton))
    }

    fn push_node(&mut self, node: Node, pending: Pending) {
        self.kept_words += node
            .stripes
            .iter()
            .map(|s| s.interpolation.words())
            .sum::<usize>();
        self.pending_words += skeleton_words(&pending.skeletons);
        self.nodes.push(node);
        self.stack.push(pending);
    }

    fn leaf(&mut self, columns: Range<usize>, block: DMatrix<f64>) -> Result<()> {
        let norm2 = block.norm_squared();
        let (id, skeleton) = self.compress(&block, self.epsilon * norm2.sqrt())?;
        self.note_peak(block.len() + skeleton.len());
        let node = Node {
            level: 1,
            kind: NodeKind::Leaf { columns },
            stripes: vec![Stripe {
                rows: 0..self.n_rows,
                interpolation: id.compact(),
            }],
        };
        let pending = Pending {
            node: self.nodes.len(),
            level: 1,
            norm2,
            skeletons: vec![skeleton],
        };
        self.push_node(node, pending);
        Ok(())
    }

    fn stripe_rows(&self, node: usize) -> Vec<Range<usize>> {
        self.nodes[node]
            .stripes
            .iter()
            .map(|s| s.rows.clone())
            .collect()
    }

    /// Splits each input block by rows and compresses both halves. Gives
    /// up (returning `None`) as soon as a new stripe would have fewer rows
    /// than `max(2 · its rank, C)`.
    fn try_split(
        &mut self,
        rows: &[Range<usize>],
        blocks: &[DMatrix<f64>],
        norm2: f64,
    ) -> Result<Option<(Vec<Stripe>, Vec<DMatrix<f64>>)>> {
        let narrowest = rows.iter().map(|r| r.len() / 2).min().unwrap_or(0);
        if narrowest < self.block_width.max(1) {
            return Ok(None);
        }
        let stripe_count = 2 * rows.len();
        let tolerance = self.epsilon * (norm2 / stripe_count as f64).sqrt();
        let mut stripes = Vec::with_capacity(stripe_count);
        let mut skeletons = Vec::with_capacity(stripe_count);
        for (r, block) in rows.iter().zip(blocks) {
            let (top, bottom) = split_rows(r);
            for half in [top, bottom] {
                let part = block.rows(half.start - r.start, half.len()).into_owned();
                let (id, skeleton) = self.compress(&part, tolerance)?;
                if half.len() < 2 * id.rank {
                    return Ok(None);
                }
                stripes.push(Stripe {
                    rows: half,
                    interpolation: id.compact(),
                });
                skeletons.push(skeleton);
            }
        }
        let transient = blocks.iter().map(|b| b.len()).sum::<usize>() + skeleton_words(&skeletons);
        self.note_peak(transient);
        Ok(Some((stripes, skeletons)))
    }

    fn push_split(
        &mut self,
        level: u32,
        kind: NodeKind,
        norm2: f64,
        (stripes, skeletons): (Vec<Stripe>, Vec<DMatrix<f64>>),
        consumed_words: usize,
    ) {
        self.pending_words -= consumed_words;
        let pending = Pending {
            node: self.nodes.len(),
            level,
            norm2,
            skeletons,
        };
        self.push_node(
            Node {
                level,
                kind,
                stripes,
            },
            pending,
        );
    }

    /// Merges two same-level entries, or seals both as roots.
    fn merge_or_seal(&mut self, left: Pending, right: Pending) -> Result<()> {
        let rows = self.stripe_rows(left.node);
        let blocks: Vec<DMatrix<f64>> = left
            .skeletons
            .iter()
            .zip(&right.skeletons)
            .map(|(a, b)| {
                let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
                m.columns_mut(0, a.ncols()).copy_from(a);
                m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
                m
            })
            .collect();
        let norm2 = left.norm2 + right.norm2;
        match self.try_split(&rows, &blocks, norm2)? {
            Some(split) => {
                let consumed = skeleton_words(&left.skeletons) + skeleton_words(&right.skeletons);
                let kind = NodeKind::Merge {
                    left: left.node,
                    right: right.node,
                };
                self.push_split(left.level + 1, kind, norm2, split, consumed);
            }
            None => {
                self.seal(left);
                self.seal(right);
            }
        }
        Ok(())
    }

    /// Promotes an entry that has no partner, or seals it.
    fn promote_or_seal(&mut self, entry: Pending) -> Result<()> {
        let rows = self.stripe_rows(entry.node);
        match self.try_split(&rows, &entry.skeletons, entry.norm2)? {
            Some(split) => {
                let consumed = skeleton_words(&entry.skeletons);
                let kind = NodeKind::Promote { child: entry.node };
                self.push_split(entry.level + 1, kind, entry.norm2, split, consumed);
            }
            None => self.seal(entry),
        }
        Ok(())
    }

    fn seal(&mut self, entry: Pending) {
        let words = skeleton_words(&entry.skeletons);
        self.pending_words -= words;
        self.kept_words += words;
        self.roots.push(Root {
            node: entry.node,
            skeletons: entry.skeletons,
        });
    }

    /// Merges the top two stack entries while their levels agree.
    fn collapse(&mut self) -> Result<()> {
        while self.stack.len() >= 2 {
            let n = self.stack.len();
            if self.stack[n - 1].level != self.stack[n - 2].level {
                break;
            }
            let right = self.stack.pop().expect("two entries");
            let left = self.stack.pop().expect("two entries");
            self.merge_or_seal(left, right)?;
        }
        Ok(())
    }

    /// Pairs up whatever remains once the source is exhausted.
    fn finish(&mut self) -> Result<()> {
        while let Some(top) = self.stack.pop() {
            match self.stack.last() {
                None => self.seal(top),
                Some(below) if below.level == top.level => {
                    let left = self.stack.pop().expect("entry below");
                    self.merge_or_seal(left, top)?;
                }
                Some(_) => self.promote_or_seal(top)?,
            }
        }
        Ok(())
    }
}

/// Compresses the matrix delivered by `source`.
///
/// Interpolation tolerances are absolute: a leaf is compressed to
/// `epsilon · ‖leaf‖_F`, and each stripe of a node with `s` stripes covering
/// a column block of norm `F` to `epsilon · F / sqrt(s)`.
pub fn build_plan<S: ColumnSource + ?Sized>(
    source: &mut S,
    epsilon: f64,
    block_width: usize,
) -> Result<ButterflyPlan> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if block_width < 2 {
        return Err(Error::InvalidArgument(format!(
            "block width must be at least 2, got {block_width}"
        )));
    }
    let (n_rows, n_cols) = (source.n_rows(), source.n_cols());
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::InvalidArgument(
            "source has an empty dimension".into(),
        ));
    }
    let started = Instant::now();
    let mut builder = Builder {
        n_rows,
        epsilon,
        block_width,
        nodes: Vec::new(),
        roots: Vec::new(),
        stack: Vec::new(),
        kept_words: 0,
        pending_words: 0,
        peak_words: 0,
    };
    let mut start = 0;
    while start < n_cols {
        let width = block_width.min(n_cols - start);
        let block = source.next_columns(width)?;
        if block.shape() != (n_rows, width) {
            return Err(Error::DimensionMismatch {
                expected: n_rows * width,
                found: block.len(),
            });
        }
        builder.leaf(start..start + width, block)?;
        builder.collapse()?;
        start += width;
    }
    builder.finish()?;
    let seconds = started.elapsed().as_secs_f64();
    ButterflyPlan::from_parts(PlanParts {
        n_rows,
        n_cols,
        epsilon,
        block_width,
        nodes: builder.nodes,
        roots: builder.roots,
        telemetry: Telemetry {
            peak_words: builder.peak_words,
            seconds,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dense_mul(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        (a * nalgebra::DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_source() {
        let mut src = DenseSource::new(DMatrix::identity(256, 256));
        let plan = build_plan(&mut src, 1e-14, 60).unwrap();
        let stats = plan.stats();
        assert_eq!(stats.k_max, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_vector(256, &mut rng);
        assert!(max_diff(&plan.apply(&v).unwrap(), &v) < 1e-13);
        assert!(max_diff(&plan.apply_transpose(&v).unwrap(), &v) < 1e-13);
    }

    #[test]
    fn low_rank_source_merges_fully() {
        // Rank one: every ID has rank one and no merge is refused.
        let c = 4;
        let a = DMatrix::from_fn(64, 8 * c, |i, j| {
            ((i + 1) as f64).sqrt() * (1.0 + 0.1 * j as f64)
        });
        let mut src = DenseSource::new(a.clone());
        let plan = build_plan(&mut src, 1e-14, c).unwrap();
        let stats = plan.stats();
        assert_eq!(stats.leaves, 8);
        assert_eq!(stats.levels, 4);
        assert_eq!(stats.k_max, 1);
        assert_eq!(plan.parts().roots.len(), 1);
        let v: Vec<f64> = (0..8 * c).map(|j| (j as f64).cos()).collect();
        let diff = max_diff(&plan.apply(&v).unwrap(), &dense_mul(&a, &v));
        assert!(diff < 1e-12 * a.norm());
    }

    #[test]
    fn uneven_leaf_count_promotes() {
        let c = 4;
        let a = DMatrix::from_fn(128, 5 * c + 3, |i, j| (0.01 * (i * j) as f64).sin());
        let mut src = DenseSource::new(a.clone());
        let plan = build_plan(&mut src, 1e-13, c).unwrap();
        assert!(plan
            .parts()
            .nodes
            .iter()
            .any(|n| matches!(n.kind, NodeKind::Promote { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_vector(a.ncols(), &mut rng);
        let diff = max_diff(&plan.apply(&v).unwrap(), &dense_mul(&a, &v));
        assert!(diff < 1e-11 * a.norm(), "{diff}");
        let w = random_vector(a.nrows(), &mut rng);
        let at = a.transpose();
        let diff = max_diff(&plan.apply_transpose(&w).unwrap(), &dense_mul(&at, &w));
        assert!(diff < 1e-11 * a.norm(), "{diff}");
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let a = DMatrix::from_fn(90, 130, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let mut src = DenseSource::new(a);
        let plan = build_plan(&mut src, 1e-12, 8).unwrap();
        assert!(plan
            .apply(&vec![0.0; 130])
            .unwrap()
            .iter()
            .all(|&y| y == 0.0));
        assert!(plan
            .apply_transpose(&vec![0.0; 90])
            .unwrap()
            .iter()
            .all(|&y| y == 0.0));
    }

    #[test]
    fn argument_errors() {
        let mut src = DenseSource::new(DMatrix::identity(4, 4));
        assert!(build_plan(&mut src, 0.0, 60).is_err());
        assert!(build_plan(&mut src, 1e-10, 1).is_err());
        let plan = build_plan(&mut src, 1e-10, 2).unwrap();
        assert!(matches!(
            plan.apply(&[1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            plan.apply_transpose(&[1.0; 5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parts_round_trip_and_validation() {
        let a = DMatrix::from_fn(100, 70, |i, j| ((i as f64 - j as f64) * 0.05).cos());
        let mut src = DenseSource::new(a);
        let plan = build_plan(&mut src, 1e-12, 6).unwrap();
        let parts = plan.clone().into_parts();
        assert_eq!(ButterflyPlan::from_parts(parts.clone()).unwrap(), plan);

        let mut broken = parts.clone();
        broken.roots.pop();
        assert!(ButterflyPlan::from_parts(broken).is_err());
        let mut broken = parts;
        broken.n_cols += 1;
        assert!(ButterflyPlan::from_parts(broken).is_err());
    }
}
