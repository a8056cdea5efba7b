//! Interpolative decompositions by column-pivoted Householder QR.
//!
//! `A ≈ A[:, J] · T` where `J` holds `k` column indices of `A` and `T` is a
//! `k × n` matrix containing the identity at the columns `J`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Magnitude bound on interpolation coefficients, restored by column
/// exchanges when pivoted QR alone exceeds it.
pub const ENTRY_BOUND: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolativeDecomposition {
    pub rank: usize,
    pub column_indices: Vec<usize>,
    /// `rank × n_cols`.
    pub interpolation: DMatrix<f64>,
}

/// The same decomposition without the identity block: applying it to a
/// vector `c` of length `n_cols` gives `c[selected] + T · c[rest]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactInterpolation {
    pub selected: Vec<usize>,
    pub rest: Vec<usize>,
    /// `selected.len() × rest.len()`, column-major.
    pub coefficients: Vec<f64>,
}

impl CompactInterpolation {
    pub fn rank(&self) -> usize {
        self.selected.len()
    }

    pub fn n_cols(&self) -> usize {
        self.selected.len() + self.rest.len()
    }

    /// Stored matrix entries (the identity block is implicit).
    pub fn words(&self) -> usize {
        self.coefficients.len()
    }

    /// `out = T c`.
    pub fn apply(&self, c: &[f64], out: &mut [f64]) {
        let k = self.selected.len();
        debug_assert_eq!(out.len(), k);
        for (o, &s) in out.iter_mut().zip(&self.selected) {
            *o = c[s];
        }
        for (col, &r) in self.coefficients.chunks_exact(k.max(1)).zip(&self.rest) {
            let cr = c[r];
            if cr != 0.0 {
                for (o, &t) in out.iter_mut().zip(col) {
                    *o += t * cr;
                }
            }
        }
    }

    /// `c += Tᵀ g`.
    pub fn apply_transpose_add(&self, g: &[f64], c: &mut [f64]) {
        let k = self.selected.len();
        debug_assert_eq!(g.len(), k);
        for (&gi, &s) in g.iter().zip(&self.selected) {
            c[s] += gi;
        }
        for (col, &r) in self.coefficients.chunks_exact(k.max(1)).zip(&self.rest) {
            let dot: f64 = col.iter().zip(g).map(|(t, gi)| t * gi).sum();
            c[r] += dot;
        }
    }

    /// Checks that `selected` and `rest` partition `0..n_cols` and the
    /// coefficient count matches.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_cols();
        let mut seen = vec![false; n];
        for &i in self.selected.iter().chain(&self.rest) {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "interpolation index {i} repeated or out of range 0..{n}"
                )));
            }
            seen[i] = true;
        }
        if self.selected.is_empty() {
            return Err(Error::InvalidArgument("interpolation of rank zero".into()));
        }
        let expected = self.selected.len() * self.rest.len();
        if self.coefficients.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.coefficients.len(),
            });
        }
        Ok(())
    }
}

impl InterpolativeDecomposition {
    pub fn n_cols(&self) -> usize {
        self.interpolation.ncols()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.interpolation
            .iter()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn compact(&self) -> CompactInterpolation {
        let k = self.rank;
        let mut is_selected = vec![false; self.n_cols()];
        for &j in &self.column_indices {
            is_selected[j] = true;
        }
        let rest: Vec<usize> = (0..self.n_cols()).filter(|&j| !is_selected[j]).collect();
        let mut coefficients = Vec::with_capacity(k * rest.len());
        for &j in &rest {
            coefficients.extend(self.interpolation.column(j).iter());
        }
        CompactInterpolation {
            selected: self.column_indices.clone(),
            rest,
            coefficients,
        }
    }

    /// The selected columns of `block`, in `column_indices` order.
    pub fn skeleton_of(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        block.select_columns(&self.column_indices)
    }

    fn zero_block(n_cols: usize) -> Self {
        let mut interpolation = DMatrix::zeros(1, n_cols);
        interpolation[(0, 0)] = 1.0;
        InterpolativeDecomposition {
            rank: 1,
            column_indices: vec![0],
            interpolation,
        }
    }
}

enum Stop {
    Rank(usize),
    Residual(f64),
}

fn frobenius_of(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Column-pivoted Householder QR, truncated per `stop`. Returns the rank,
/// the working matrix (upper triangle of its first `rank` rows holds
/// `[R11 R12]`) and the column permutation.
fn pivoted_qr(block: &DMatrix<f64>, stop: Stop) -> (usize, DMatrix<f64>, Vec<usize>) {
    let (rows, cols) = block.shape();
    let full = rows.min(cols);
    let mut a = block.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut vn1: Vec<f64> = (0..cols)
        .map(|j| frobenius_of(a.column(j).as_slice()))
        .collect();
    let mut vn2 = vn1.clone();
    let threshold = f64::EPSILON.sqrt();
    let mut v = vec![0.0; rows];

    let mut k = 0;
    while k < full {
        if let Stop::Rank(target) = stop {
            if k == target {
                break;
            }
        }
        let p = k
            + (k..cols)
                .map(|j| vn1[j])
                .enumerate()
                .fold(
                    (0, -1.0),
                    |best, (i, x)| if x > best.1 { (i, x) } else { best },
                )
                .0;
        if p != k {
            a.swap_columns(p, k);
            perm.swap(p, k);
            vn1.swap(p, k);
            vn2.swap(p, k);
        }

        // Householder reflector for a[k.., k].
        let data = a.as_mut_slice();
        let col_k = &mut data[k * rows + k..(k + 1) * rows];
        let alpha = col_k[0];
        let norm = frobenius_of(col_k);
        if norm > 0.0 {
            let beta_val = -norm.copysign(alpha);
            let v_len = rows - k;
            v[0] = 1.0;
            let scale = alpha - beta_val;
            for i in 1..v_len {
                v[i] = col_k[i] / scale;
            }
            let tau = (beta_val - alpha) / beta_val;
            col_k[0] = beta_val;
            for x in col_k[1..].iter_mut() {
                *x = 0.0;
            }
            for j in k + 1..cols {
                let col = &mut data[j * rows + k..(j + 1) * rows];
                let dot: f64 = col.iter().zip(&v[..v_len]).map(|(c, vi)| c * vi).sum();
                let f = tau * dot;
                for (c, vi) in col.iter_mut().zip(&v[..v_len]) {
                    *c -= f * vi;
                }
            }
        }

        // Downdate trailing column norms, recomputing on heavy cancellation.
        for j in k + 1..cols {
            if vn1[j] == 0.0 {
                continue;
            }
            let r = a[(k, j)].abs() / vn1[j];
            let temp = (1.0 - r * r).max(0.0);
            let ratio = vn1[j] / vn2[j];
            if temp * ratio * ratio <= threshold {
                let fresh = frobenius_of(&a.column(j).as_slice()[k + 1..]);
                vn1[j] = fresh;
                vn2[j] = fresh;
            } else {
                vn1[j] *= temp.sqrt();
            }
        }
        k += 1;

        if let Stop::Residual(tol) = stop {
            let estimate = frobenius_of(&vn1[k..]);
            if estimate <= tol {
                let exact = trailing_frobenius(&a, k);
                if exact <= tol {
                    break;
                }
                for j in k..cols {
                    let fresh = frobenius_of(&a.column(j).as_slice()[k..]);
                    vn1[j] = fresh;
                    vn2[j] = fresh;
                }
            }
        }
    }
    (k, a, perm)
}

fn trailing_frobenius(a: &DMatrix<f64>, k: usize) -> f64 {
    let rows = a.nrows();
    (k..a.ncols())
        .map(|j| {
            a.column(j).as_slice()[k..rows]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Exchanges a selected column with an interpolated one while some
/// coefficient exceeds [`ENTRY_BOUND`]. Each exchange multiplies the volume
/// of the skeleton by more than the bound, so the loop terminates.
fn bound_entries(t: &mut DMatrix<f64>, perm: &mut [usize]) {
    let k = t.nrows();
    let limit = 64 * (k + t.ncols()).max(1);
    for _ in 0..limit {
        let Some((idx, &pivot)) = t
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        else {
            return;
        };
        if pivot.abs() <= ENTRY_BOUND {
            return;
        }
        let (i, j) = (idx % k, idx / k);
        let row_i: Vec<f64> = t.row(i).iter().copied().collect();
        let col_j: Vec<f64> = t.column(j).iter().copied().collect();
        for l in 0..t.ncols() {
            for r in 0..k {
                t[(r, l)] = match (r == i, l == j) {
                    (true, true) => 1.0 / pivot,
                    (true, false) => row_i[l] / pivot,
                    (false, true) => -col_j[r] / pivot,
                    (false, false) => t[(r, l)] - col_j[r] * row_i[l] / pivot,
                };
            }
        }
        perm.swap(i, k + j);
    }
}

fn assemble(k: usize, a: &DMatrix<f64>, mut perm: Vec<usize>) -> InterpolativeDecomposition {
    let cols = a.ncols();
    // T = R11^{-1} R12 by back substitution, one column of R12 at a time.
    let mut t = DMatrix::zeros(k, cols - k);
    for jj in k..cols {
        for i in (0..k).rev() {
            let mut s = a[(i, jj)];
            for l in i + 1..k {
                s -= a[(i, l)] * t[(l, jj - k)];
            }
            let d = a[(i, i)];
            t[(i, jj - k)] = if d == 0.0 { 0.0 } else { s / d };
        }
    }
    bound_entries(&mut t, &mut perm);
    let mut interpolation = DMatrix::zeros(k, cols);
    for (i, &p) in perm[..k].iter().enumerate() {
        interpolation[(i, p)] = 1.0;
    }
    for (jj, &p) in perm[k..].iter().enumerate() {
        interpolation.column_mut(p).copy_from(&t.column(jj));
    }
    let id = InterpolativeDecomposition {
        rank: k,
        column_indices: perm[..k].to_vec(),
        interpolation,
    };
    let worst = id.max_abs_entry();
    if worst > ENTRY_BOUND {
        log::warn!("interpolation entry of magnitude {worst:.3} exceeds {ENTRY_BOUND}");
    }
    id
}

fn check_nonempty(block: &DMatrix<f64>) -> Result<()> {
    if block.nrows() == 0 || block.ncols() == 0 {
        return Err(Error::InvalidArgument("empty block".into()));
    }
    Ok(())
}

/// ID of rank exactly `k`.
pub fn id_fixed_rank(block: &DMatrix<f64>, k: usize) -> Result<InterpolativeDecomposition> {
    check_nonempty(block)?;
    let full = block.nrows().min(block.ncols());
    if k == 0 || k > full {
        return Err(Error::InvalidArgument(format!(
            "rank {k} outside 1..={full}"
        )));
    }
    let (k, a, perm) = pivoted_qr(block, Stop::Rank(k));
    Ok(assemble(k, &a, perm))
}

/// ID whose Frobenius reconstruction error is at most `epsilon · ‖block‖_F`.
pub fn id_adaptive(block: &DMatrix<f64>, epsilon: f64) -> Result<InterpolativeDecomposition> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    check_nonempty(block)?;
    id_with_tolerance(block, epsilon * block.norm())
}

/// ID with the least rank reached by the pivoted sweep whose Frobenius
/// reconstruction error is at most `tolerance` (absolute).
pub fn id_with_tolerance(
    block: &DMatrix<f64>,
    tolerance: f64,
) -> Result<InterpolativeDecomposition> {
    check_nonempty(block)?;
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be nonnegative, got {tolerance}"
        )));
    }
    if block.iter().all(|&v| v == 0.0) {
        return Ok(InterpolativeDecomposition::zero_block(block.ncols()));
    }
    let (k, a, perm) = pivoted_qr(block, Stop::Residual(tolerance));
    Ok(assemble(k, &a, perm))
}

/// `skeleton · interpolation`.
pub fn id_reconstruct(
    id: &InterpolativeDecomposition,
    skeleton: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if skeleton.ncols() != id.rank {
        return Err(Error::DimensionMismatch {
            expected: id.rank,
            found: skeleton.ncols(),
        });
    }
    Ok(skeleton * &id.interpolation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
    }

    fn identity_property(id: &InterpolativeDecomposition) {
        for (i, &c) in id.column_indices.iter().enumerate() {
            for r in 0..id.rank {
                assert_eq!(id.interpolation[(r, c)], if r == i { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn identity_is_reproduced() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let id = id_fixed_rank(&eye, 3).unwrap();
        let mut sorted = id.column_indices.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
        identity_property(&id);
        let skel = id.skeleton_of(&eye);
        assert_eq!(id_reconstruct(&id, &skel).unwrap(), eye);
    }

    #[test]
    fn rank_one_is_exact() {
        let u = DMatrix::from_fn(10, 1, |i, _| (i as f64 + 1.0).sin());
        let v = DMatrix::from_fn(1, 8, |_, j| 0.5 + j as f64);
        let a = &u * &v;
        let id = id_fixed_rank(&a, 1).unwrap();
        let err = (id_reconstruct(&id, &id.skeleton_of(&a)).unwrap() - &a).norm();
        assert!(err < 1e-13 * a.norm());
    }

    #[test]
    fn random_matrix_meets_bound() {
        let a = gaussian_matrix(50, 50, 3);
        let k = 20;
        let id = id_fixed_rank(&a, k).unwrap();
        identity_property(&id);
        let sigma = oracle::singular_values(&a);
        let err = oracle::spectral_norm(&(id_reconstruct(&id, &id.skeleton_of(&a)).unwrap() - &a));
        let bound = ((4 * k * (50 - k) + 1) as f64).sqrt() * sigma[k];
        assert!(err <= bound, "{err} > {bound}");
    }

    #[test]
    fn adaptive_drops_negligible_direction() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-4, 1e-16]));
        let id = id_adaptive(&a, 1e-8).unwrap();
        assert_eq!(id.rank, 2);
        let err = (id_reconstruct(&id, &id.skeleton_of(&a)).unwrap() - &a).norm();
        assert!(err <= 1e-8 * a.norm());
    }

    #[test]
    fn adaptive_keeps_full_rank_when_tight() {
        let a = gaussian_matrix(12, 9, 5);
        let sigma = oracle::singular_values(&a);
        let eps = 0.1 * sigma[8] / a.norm();
        let id = id_adaptive(&a, eps).unwrap();
        assert_eq!(id.rank, 9);
        let err = (id_reconstruct(&id, &id.skeleton_of(&a)).unwrap() - &a).norm();
        assert!(err < 1e-13 * a.norm());
    }

    #[test]
    fn zero_block_convention() {
        let id = id_adaptive(&DMatrix::zeros(4, 5), 1e-10).unwrap();
        assert_eq!(id.rank, 1);
        assert_eq!(id.column_indices, vec![0]);
        let mut expected = DMatrix::zeros(1, 5);
        expected[(0, 0)] = 1.0;
        assert_eq!(id.interpolation, expected);
    }

    #[test]
    fn argument_errors() {
        let a = DMatrix::<f64>::identity(3, 4);
        assert!(matches!(
            id_fixed_rank(&a, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            id_fixed_rank(&a, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            id_adaptive(&a, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        let id = id_fixed_rank(&a, 2).unwrap();
        assert!(matches!(
            id_reconstruct(&id, &DMatrix::zeros(3, 3)),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn compact_form_matches_dense() {
        let a = gaussian_matrix(30, 17, 11);
        let id = id_fixed_rank(&a, 6).unwrap();
        let compact = id.compact();
        compact.validate().unwrap();
        let c: Vec<f64> = (0..17).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut out = vec![0.0; 6];
        compact.apply(&c, &mut out);
        let dense = &id.interpolation * nalgebra::DVector::from_column_slice(&c);
        for (o, d) in out.iter().zip(dense.iter()) {
            assert!((o - d).abs() < 1e-13);
        }
        let g = [1.0, -2.0, 0.5, 0.25, 3.0, -1.0];
        let mut back = vec![0.0; 17];
        compact.apply_transpose_add(&g, &mut back);
        let dense_t = id.interpolation.transpose() * nalgebra::DVector::from_column_slice(&g);
        for (b, d) in back.iter().zip(dense_t.iter()) {
            assert!((b - d).abs() < 1e-13);
        }
    }

    #[test]
    fn full_row_rank_is_exact() {
        let a = gaussian_matrix(4, 10, 2);
        let id = id_fixed_rank(&a, 4).unwrap();
        let err = (id_reconstruct(&id, &id.skeleton_of(&a)).unwrap() - &a).norm();
        assert!(err < 1e-12 * a.norm());
    }
}
