//! Dense complex linear algebra and quantum-state primitives.
//!
//! Composite walker states are ordered coin ⊗ position: the amplitude of
//! `|c⟩|x⟩` lives at index `c * d_p + x`, where `d_p` is the number of
//! lattice sites. Every module in the crate relies on this layout.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance on normalization and Hermiticity of states built by the crate.
pub const STATE_TOL: f64 = 1e-12;
/// Hermiticity check applied before the Hermitian eigensolver.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Eigenvalues at or below this contribute nothing to an entropy.
pub const ENTROPY_CUTOFF: f64 = 1e-12;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO])
}

/// Pauli σ₃ (the dephasing axis).
pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

fn ensure_square(m: &ComplexMatrix) -> Result<usize> {
    if m.is_square() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: ComplexVector,
}

impl PureState {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        let norm2 = amplitudes.norm_squared();
        if (norm2 - 1.0).abs() > STATE_TOL {
            return Err(Error::NotNormalized { value: norm2 });
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `amplitudes` instead of rejecting it.
    pub fn normalized(amplitudes: ComplexVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { value: norm });
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub(crate) fn from_raw(amplitudes: ComplexVector) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> ComplexVector {
        self.amplitudes
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            entries: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

/// Hermitian, unit-trace matrix.
///
/// Construction checks Hermiticity and trace. Positivity is not enforced
/// here because the stepwise evolution can legitimately leave the positive
/// cone; [`DensityMatrix::min_eigenvalue`] reports it when it matters.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(entries: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(entries, STATE_TOL)
    }

    pub fn with_tolerance(entries: ComplexMatrix, tol: f64) -> Result<Self> {
        ensure_square(&entries)?;
        let defect = hermiticity_defect(&entries);
        if defect > tol {
            return Err(Error::NotHermitian { defect });
        }
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::NotNormalized { value: tr.re });
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_raw(entries: ComplexMatrix) -> Self {
        Self { entries }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            entries: identity(dim).unscale(dim as f64),
        }
    }

    /// Diagonal state with the given probabilities.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        let n = probabilities.len();
        let m = ComplexMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c(probabilities[i], 0.0)
            } else {
                ZERO
            }
        });
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.entries
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            entries: kron(&self.entries, &other.entries),
        }
    }

    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ.
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (values, _) = hermitian_eigen(&self.entries)?;
        Ok(values.last().copied().unwrap_or(0.0))
    }

    /// Unitary conjugation `U ρ U†`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<DensityMatrix> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.nrows(),
            });
        }
        Ok(DensityMatrix {
            entries: u * &self.entries * u.adjoint(),
        })
    }

    pub fn linear_combination(terms: &[(f64, &DensityMatrix)]) -> Result<DensityMatrix> {
        let first = terms
            .first()
            .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
        let mut acc = ComplexMatrix::zeros(first.1.dim(), first.1.dim());
        for (w, rho) in terms {
            if rho.dim() != acc.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: acc.nrows(),
                    found: rho.dim(),
                });
            }
            acc += rho.entries.scale(*w);
        }
        Ok(DensityMatrix { entries: acc })
    }
}

/// Bipartition of a coin ⊗ position space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Split {
    pub coin: usize,
    pub position: usize,
}

impl Split {
    pub fn new(coin: usize, position: usize) -> Self {
        Self { coin, position }
    }

    /// The split used by every walk: a qubit coin on `sites` lattice sites.
    pub fn walker(sites: usize) -> Self {
        Self::new(2, sites)
    }

    pub fn total(&self) -> usize {
        self.coin * self.position
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        if self.total() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.total(),
                found: dim,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subsystem {
    Coin,
    Position,
}

/// Reduced state of `keep`, tracing out the other factor.
pub fn partial_trace(rho: &DensityMatrix, split: Split, keep: Subsystem) -> Result<DensityMatrix> {
    split.check(rho.dim())?;
    let m = rho.matrix();
    let (dc, dp) = (split.coin, split.position);
    let reduced = match keep {
        Subsystem::Coin => ComplexMatrix::from_fn(dc, dc, |a, b| {
            (0..dp).map(|x| m[(a * dp + x, b * dp + x)]).sum()
        }),
        Subsystem::Position => ComplexMatrix::from_fn(dp, dp, |x, y| {
            (0..dc).map(|a| m[(a * dp + x, a * dp + y)]).sum()
        }),
    };
    Ok(DensityMatrix::from_raw(reduced))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Eigenvalues {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl Eigenvalues {
    pub fn len(&self) -> usize {
        match self {
            Eigenvalues::Real(v) => v.len(),
            Eigenvalues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            Eigenvalues::Real(v) => Some(v),
            Eigenvalues::Complex(_) => None,
        }
    }

    pub fn to_complex(&self) -> Vec<C64> {
        match self {
            Eigenvalues::Real(v) => v.iter().map(|&x| c(x, 0.0)).collect(),
            Eigenvalues::Complex(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: Eigenvalues,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
}

/// Eigen-decomposition, sorted by descending (real part of the) eigenvalue.
///
/// With `hermitian` set the input must pass a Hermiticity check at
/// [`HERMITIAN_TOL`] and the result has real eigenvalues with orthonormal
/// eigenvectors. Otherwise a complex Schur decomposition is used and the
/// eigenvectors are unit-norm but not necessarily orthogonal.
pub fn eigensystem(m: &ComplexMatrix, hermitian: bool) -> Result<Eigensystem> {
    ensure_square(m)?;
    if hermitian {
        let defect = hermiticity_defect(m);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let (values, vectors) = hermitian_eigen(m)?;
        Ok(Eigensystem {
            values: Eigenvalues::Real(values),
            vectors,
        })
    } else {
        general_eigen(m)
    }
}

/// Hermitian eigensolver without the Hermiticity pre-check; the input is
/// symmetrized first. Eigenvalues are returned in descending order.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let n = ensure_square(m)?;
    let sym = symmetrized(m);
    let mut values = Vec::with_capacity(n);
    let mut vectors = ComplexMatrix::zeros(n, n);
    for idx in coupled_blocks(&sym) {
        let k = idx.len();
        let sub = ComplexMatrix::from_fn(k, k, |a, b| sym[(idx[a], idx[b])]);
        let eig = SymmetricEigen::try_new(sub, EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| no_convergence(m))?;
        for (j, v) in eig.eigenvalues.iter().enumerate() {
            let col = values.len();
            values.push(*v);
            for a in 0..k {
                vectors[(idx[a], col)] = eig.eigenvectors[(a, j)];
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(no_convergence(m));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, col| vectors[(r, order[col])]);
    Ok((sorted, vectors))
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    ensure_square(m)?;
    let sym = symmetrized(m);
    let mut values: Vec<f64> = Vec::with_capacity(sym.nrows());
    for idx in coupled_blocks(&sym) {
        let k = idx.len();
        let sub = ComplexMatrix::from_fn(k, k, |a, b| sym[(idx[a], idx[b])]);
        values.extend(sub.symmetric_eigenvalues().iter());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(no_convergence(m));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// `(M + M†)/2` with entries below `ε²·max|M|` set to zero. Such entries
/// cannot move any eigenvalue by a representable amount.
fn symmetrized(m: &ComplexMatrix) -> ComplexMatrix {
    let mut sym = (m + m.adjoint()).unscale(2.0);
    let floor = f64::EPSILON * f64::EPSILON * max_abs(&sym);
    for z in sym.iter_mut() {
        if z.norm() <= floor {
            *z = ZERO;
        }
    }
    sym
}

/// Index sets of the connected components of the nonzero pattern of a
/// Hermitian matrix, each sorted, ordered by smallest index.
///
/// The matrix is block diagonal over these sets, so each block can be
/// decomposed on its own. The QR iteration can return NaN for a small
/// block padded by exact zeros, which this avoids.
fn coupled_blocks(m: &ComplexMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..j {
            if m[(i, j)] != ZERO {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[slot[r]].push(i);
    }
    blocks
}

fn no_convergence(m: &ComplexMatrix) -> Error {
    Error::NoConvergence {
        dim: m.nrows(),
        frobenius_norm: m.norm(),
        hermiticity_defect: hermiticity_defect(m),
    }
}

fn general_eigen(m: &ComplexMatrix) -> Result<Eigensystem> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Eigensystem {
            values: Eigenvalues::Complex(Vec::new()),
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let schur =
        Schur::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| no_convergence(m))?;
    let (q, t) = schur.unpack();
    let scale = max_abs(&t).max(f64::MIN_POSITIVE);

    // Back-substitution on the upper-triangular factor: for the k-th
    // eigenvalue solve (T - λ I) y = 0 with y_k = 1 and y_j = 0 for j > k.
    let mut pairs: Vec<(C64, ComplexVector)> = (0..n)
        .map(|k| {
            let lambda = t[(k, k)];
            let mut y = ComplexVector::zeros(n);
            y[k] = ONE;
            for i in (0..k).rev() {
                let s: C64 = ((i + 1)..=k).map(|j| t[(i, j)] * y[j]).sum();
                let mut denom = t[(i, i)] - lambda;
                if denom.norm() < 1e-14 * scale {
                    denom = c(1e-14 * scale, 0.0);
                }
                y[i] = -s / denom;
            }
            let v = &q * y;
            let norm = v.norm();
            (lambda, v.unscale(norm))
        })
        .collect();
    pairs.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, col| pairs[col].1[r]);
    Ok(Eigensystem {
        values: Eigenvalues::Complex(values),
        vectors,
    })
}

/// Groups indices of a descending spectrum into runs whose neighbours lie
/// within [`DEGENERACY_TOL`].
pub fn degenerate_groups(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i - 1] - values[i]).abs() > DEGENERACY_TOL {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Replaces the eigenvector basis of every degenerate group by the basis
/// obtained from projecting computational basis vectors `e_0, e_1, ...` (in
/// ascending order) onto the group's eigenspace and orthonormalizing.
///
/// Returns the canonical basis and whether any group had more than one
/// member.
pub fn canonical_eigenbasis(values: &[f64], vectors: &ComplexMatrix) -> (ComplexMatrix, bool) {
    let mut out = vectors.clone();
    let mut degenerate = false;
    for group in degenerate_groups(values) {
        if group.len() > 1 {
            degenerate = true;
            let span = vectors.columns(group.start, group.len()).into_owned();
            let basis = canonical_span_basis(&span);
            for (k, col) in group.enumerate() {
                out.set_column(col, &basis.column(k));
            }
        }
    }
    (out, degenerate)
}

/// Canonical orthonormal basis for the span of the orthonormal columns of
/// `span`, built from projected computational basis vectors.
pub fn canonical_span_basis(span: &ComplexMatrix) -> ComplexMatrix {
    let (n, g) = span.shape();
    let mut chosen: Vec<ComplexVector> = Vec::with_capacity(g);
    for k in 0..n {
        if chosen.len() == g {
            break;
        }
        // P e_k = V (V† e_k) = V conj(row k of V)ᵀ
        let coeffs = ComplexVector::from_fn(g, |j, _| span[(k, j)].conj());
        let mut w = span * coeffs;
        for b in &chosen {
            let overlap = b.dotc(&w);
            w -= b * overlap;
        }
        let norm = w.norm();
        if norm > 1e-6 {
            chosen.push(w.unscale(norm));
        }
    }
    // Numerically the loop always fills the span; fall back to the input
    // columns if it somehow did not.
    if chosen.len() < g {
        return span.clone();
    }
    ComplexMatrix::from_columns(&chosen)
}

/// Shannon entropy in bits of a spectrum; entries at or below
/// [`ENTROPY_CUTOFF`] contribute zero.
pub fn entropy_bits(spectrum: &[f64]) -> f64 {
    spectrum
        .iter()
        .filter(|&&p| p > ENTROPY_CUTOFF)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let values = hermitian_eigenvalues(rho.matrix())?;
    Ok(entropy_bits(&values).max(0.0))
}

/// Sum of singular values.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    let n = ensure_square(m)?;
    if n == 0 {
        return Ok(0.0);
    }
    if hermiticity_defect(m) <= 1e-14 * max_abs(m).max(1.0) {
        let values = hermitian_eigenvalues(m)?;
        return Ok(values.iter().map(|v| v.abs()).sum());
    }
    let svd = m
        .clone()
        .try_svd(false, false, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| no_convergence(m))?;
    Ok(svd.singular_values.iter().sum())
}

/// Positive semidefinite operator stored as `F F†` with `F` of shape
/// `dim × rank`.
///
/// Entropies and marginals of low-rank walker states follow from small
/// Gram matrices `F† F` instead of full-size eigendecompositions.
#[derive(Clone, Debug)]
pub struct FactoredState {
    factor: ComplexMatrix,
}

/// Eigenvalues below this are dropped when factoring a dense state.
pub const FACTOR_CUTOFF: f64 = 1e-14;

impl FactoredState {
    pub fn from_factor(factor: ComplexMatrix) -> Self {
        Self { factor }
    }

    /// Factors a dense state through its eigendecomposition. Eigenvalues at
    /// or below [`FACTOR_CUTOFF`] (including small negative round-off) are
    /// dropped.
    pub fn from_density(rho: &DensityMatrix) -> Result<Self> {
        let (values, vectors) = hermitian_eigen(rho.matrix())?;
        let kept: Vec<ComplexVector> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > FACTOR_CUTOFF)
            .map(|(i, &v)| vectors.column(i).scale(v.sqrt()))
            .collect();
        let factor = if kept.is_empty() {
            ComplexMatrix::zeros(rho.dim(), 0)
        } else {
            ComplexMatrix::from_columns(&kept)
        };
        Ok(Self { factor })
    }

    /// `Σ_k w_k |ψ_k⟩⟨ψ_k|` for nonnegative weights.
    pub fn from_ensemble(members: &[(f64, &ComplexVector)]) -> Result<Self> {
        let first = members
            .first()
            .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
        let dim = first.1.len();
        let mut cols = Vec::with_capacity(members.len());
        for (w, v) in members {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if *w < 0.0 {
                return Err(Error::param("ensemble weight", *w, "must be nonnegative"));
            }
            if *w > 0.0 {
                cols.push(v.scale(w.sqrt()));
            }
        }
        let factor = if cols.is_empty() {
            ComplexMatrix::zeros(dim, 0)
        } else {
            ComplexMatrix::from_columns(&cols)
        };
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &ComplexMatrix {
        &self.factor
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_raw(&self.factor * self.factor.adjoint())
    }

    pub fn trace(&self) -> f64 {
        self.factor.norm_squared()
    }

    /// Nonzero spectrum of `F F†`, descending.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        gram_spectrum(&self.factor)
    }

    pub fn entropy(&self) -> Result<f64> {
        Ok(entropy_bits(&self.spectrum()?).max(0.0))
    }

    /// Rows belonging to coin level `a`, i.e. `(⟨a| ⊗ I) F`.
    pub fn coin_block(&self, split: Split, a: usize) -> ComplexMatrix {
        self.factor
            .rows(a * split.position, split.position)
            .into_owned()
    }

    /// `(⟨m| ⊗ I) F` for a coin vector `m`.
    pub fn project_coin(&self, split: Split, m: &[C64]) -> ComplexMatrix {
        let dp = split.position;
        let mut out = ComplexMatrix::zeros(dp, self.rank());
        for (a, &amp) in m.iter().enumerate() {
            if amp != ZERO {
                out += self.factor.rows(a * dp, dp).scale_complex(amp.conj());
            }
        }
        out
    }

    /// `(I ⊗ ⟨w|) F` for a position vector `w`: returns a `d_c × rank`
    /// matrix.
    pub fn project_position(&self, split: Split, w: &ComplexVector) -> ComplexMatrix {
        let dp = split.position;
        ComplexMatrix::from_fn(split.coin, self.rank(), |a, k| {
            let block = self.factor.view((a * dp, k), (dp, 1));
            w.iter()
                .zip(block.iter())
                .map(|(wi, fi)| wi.conj() * fi)
                .sum()
        })
    }

    pub fn reduced_coin(&self, split: Split) -> Result<DensityMatrix> {
        split.check(self.dim())?;
        let blocks: Vec<ComplexMatrix> =
            (0..split.coin).map(|a| self.coin_block(split, a)).collect();
        let m = ComplexMatrix::from_fn(split.coin, split.coin, |a, b| {
            blocks[a]
                .iter()
                .zip(blocks[b].iter())
                .map(|(x, y)| x * y.conj())
                .sum()
        });
        Ok(DensityMatrix::from_raw(m))
    }

    /// Factor `U` (shape `d_p × d_c·rank`) with `ρ_p = U U†`.
    pub fn position_factor(&self, split: Split) -> Result<ComplexMatrix> {
        split.check(self.dim())?;
        let r = self.rank();
        let mut u = ComplexMatrix::zeros(split.position, split.coin * r);
        for a in 0..split.coin {
            u.columns_mut(a * r, r)
                .copy_from(&self.coin_block(split, a));
        }
        Ok(u)
    }
}

trait ScaleComplex {
    fn scale_complex(&self, s: C64) -> ComplexMatrix;
}

impl<S> ScaleComplex for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::Dyn, S>
where
    S: nalgebra::storage::Storage<C64, nalgebra::Dyn, nalgebra::Dyn>,
{
    fn scale_complex(&self, s: C64) -> ComplexMatrix {
        self.map(|z| z * s)
    }
}

/// Nonzero eigenvalues of `F F†` computed from the Gram matrix `F† F`,
/// descending.
pub fn gram_spectrum(factor: &ComplexMatrix) -> Result<Vec<f64>> {
    if factor.ncols() == 0 {
        return Ok(Vec::new());
    }
    let gram = factor.adjoint() * factor;
    hermitian_eigenvalues(&gram)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eigen_of_embedded_block() {
        let mut m = ComplexMatrix::zeros(18, 18);
        m[(3, 3)] = c(0.31486195733091915, 0.0);
        m[(3, 14)] = c(-0.024718230132249497, 0.46380266736597225);
        m[(14, 3)] = m[(3, 14)].conj();
        m[(14, 14)] = c(0.6851380426690807, 0.0);
        let (values, vectors) = hermitian_eigen(&m).unwrap();
        assert!(values.iter().all(|v| v.is_finite()));
        assert!(close(values[0], 1.0, 1e-14));
        assert!(values[1..].iter().all(|v| v.abs() < 1e-14));
        let d =
            ComplexMatrix::from_fn(18, 18, |i, j| if i == j { c(values[i], 0.0) } else { ZERO });
        assert!(max_abs(&(&vectors * d * vectors.adjoint() - &m)) < 1e-14);
        assert!(max_abs(&(vectors.adjoint() * &vectors - identity(18))) < 1e-14);
        assert_eq!(hermitian_eigenvalues(&m).unwrap().len(), 18);
    }

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(
            rows,
            cols,
            &data.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn eigen_examples() {
        let e = eigensystem(&real(2, 2, &[1.0, 0.0, 0.0, 0.0]), true).unwrap();
        assert_eq!(e.values, Eigenvalues::Real(vec![1.0, 0.0]));

        let e = eigensystem(&sigma_x(), true).unwrap();
        let v = e.values.as_real().unwrap();
        assert!(close(v[0], 1.0, 1e-14) && close(v[1], -1.0, 1e-14));

        let e = eigensystem(&real(2, 2, &[0.5, 0.6, 0.6, 0.5]), true).unwrap();
        let v = e.values.as_real().unwrap();
        assert!(close(v[0], 1.1, 1e-14) && close(v[1], -0.1, 1e-14));
    }

    #[test]
    fn hermitian_flag_rejects_non_hermitian() {
        let m = real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            eigensystem(&m, true),
            Err(Error::NotHermitian { .. })
        ));
        assert!(matches!(
            eigensystem(&ComplexMatrix::zeros(2, 3), false),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn general_eigen_of_triangular_matrix() {
        let m = real(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 0.0, 0.0, -1.0]);
        let e = eigensystem(&m, false).unwrap();
        let vals = e.values.to_complex();
        let expected = [3.0, 2.0, -1.0];
        for (v, x) in vals.iter().zip(expected) {
            assert!((v - c(x, 0.0)).norm() < 1e-12);
        }
        for k in 0..3 {
            let v = e.vectors.column(k).into_owned();
            let residual = &m * &v - v.scale(vals[k].re);
            assert!(residual.norm() < 1e-10);
        }
    }

    #[test]
    fn entropy_examples() {
        let pure =
            PureState::normalized(ComplexVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)])).unwrap();
        assert!(von_neumann_entropy(&pure.to_density()).unwrap().abs() < 1e-12);
        assert!(close(
            von_neumann_entropy(&DensityMatrix::maximally_mixed(2)).unwrap(),
            1.0,
            1e-12
        ));
        let rho = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        assert!(close(
            von_neumann_entropy(&rho).unwrap(),
            0.811_278_124_459_132_9,
            1e-12
        ));
    }

    #[test]
    fn trace_norm_examples() {
        assert_eq!(trace_norm(&ComplexMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert!(close(
            trace_norm(&real(2, 2, &[0.5, 0.0, 0.0, -0.5])).unwrap(),
            1.0,
            1e-14
        ));
        assert!(close(
            trace_norm(&real(2, 2, &[0.5, 0.6, 0.6, 0.5])).unwrap(),
            1.2,
            1e-14
        ));
        // Non-Hermitian: singular values of [[0, 2], [0, 0]] are (2, 0).
        assert!(close(
            trace_norm(&real(2, 2, &[0.0, 2.0, 0.0, 0.0])).unwrap(),
            2.0,
            1e-14
        ));
    }

    #[test]
    fn partial_trace_examples() {
        let rc = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        let rp = DensityMatrix::diagonal(&[0.2, 0.5, 0.3]).unwrap();
        let joint = rc.tensor(&rp);
        let split = Split::new(2, 3);
        let back = partial_trace(&joint, split, Subsystem::Coin).unwrap();
        assert!((back.matrix() - rc.matrix()).norm() < 1e-15);
        let back = partial_trace(&joint, split, Subsystem::Position).unwrap();
        assert!((back.matrix() - rp.matrix()).norm() < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::new(ComplexVector::from_vec(vec![
            c(s, 0.0),
            ZERO,
            ZERO,
            c(s, 0.0),
        ]))
        .unwrap();
        let marginal =
            partial_trace(&bell.to_density(), Split::new(2, 2), Subsystem::Coin).unwrap();
        assert!((marginal.matrix() - DensityMatrix::maximally_mixed(2).matrix()).norm() < 1e-15);

        assert!(matches!(
            partial_trace(&bell.to_density(), Split::new(2, 3), Subsystem::Coin),
            Err(Error::DimensionMismatch {
                expected: 6,
                found: 4
            })
        ));
    }

    #[test]
    fn density_validation() {
        assert!(matches!(
            DensityMatrix::new(real(2, 2, &[0.5, 0.1, 0.0, 0.5])),
            Err(Error::NotHermitian { .. })
        ));
        assert!(matches!(
            DensityMatrix::new(real(2, 2, &[0.6, 0.0, 0.0, 0.5])),
            Err(Error::NotNormalized { .. })
        ));
        assert!(PureState::new(ComplexVector::from_vec(vec![ONE, ONE])).is_err());
    }

    #[test]
    fn degenerate_basis_is_canonical() {
        // I/2 has a fully degenerate spectrum: whatever the solver returns,
        // the canonical basis is the computational one.
        let u = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.8), c(0.6, 0.0)],
        );
        let (basis, degenerate) = canonical_eigenbasis(&[0.5, 0.5], &u);
        assert!(degenerate);
        assert!((basis - identity(2)).norm() < 1e-12);
    }

    #[test]
    fn factored_state_matches_dense() {
        let s = 0.5_f64.sqrt();
        let v1 = ComplexVector::from_vec(vec![c(s, 0.0), ZERO, ZERO, c(0.0, s)]);
        let v2 = ComplexVector::from_vec(vec![ZERO, ONE, ZERO, ZERO]);
        let f = FactoredState::from_ensemble(&[(0.25, &v1), (0.75, &v2)]).unwrap();
        let rho = f.to_density();
        assert!(close(f.trace(), 1.0, 1e-15));
        let dense = von_neumann_entropy(&rho).unwrap();
        assert!(close(f.entropy().unwrap(), dense, 1e-12));
        let split = Split::new(2, 2);
        let rc = partial_trace(&rho, split, Subsystem::Coin).unwrap();
        assert!((f.reduced_coin(split).unwrap().matrix() - rc.matrix()).norm() < 1e-14);
        let rp = partial_trace(&rho, split, Subsystem::Position).unwrap();
        let u = f.position_factor(split).unwrap();
        assert!((&u * u.adjoint() - rp.matrix()).norm() < 1e-14);

        let refactored = FactoredState::from_density(&rho).unwrap();
        assert_eq!(refactored.rank(), 2);
        assert!((refactored.to_density().matrix() - rho.matrix()).norm() < 1e-12);
    }
}
