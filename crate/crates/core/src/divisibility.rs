//! Intermediate maps of dephasing channels and CP-divisibility.
//!
//! A dephasing channel with kernel `k` maps the coin coherence `ρ₀₁` to
//! `k(t) ρ₀₁`. Between two times the propagator `E(t₂, t₁)` is again a
//! dephasing map, with coherence factor `r = k(t₂)/k(t₁)`; it is completely
//! positive exactly when `|r| ≤ 1`. Maps with `|r| > 1` are realised by an
//! operator-sum-difference (Kraus operators with signs).

use crate::error::{Error, Result};
use crate::noise::{dephasing_kraus, NoiseModel, KERNEL_RANGE_TOL};
use crate::par::{map_slice, Exec};
use crate::qops::{c, hermitian_eigenvalues, identity, sigma_z, ComplexMatrix, Split, ZERO};

/// `|k(t₁)|` at or below this makes the intermediate map undefined.
pub const INVERTIBILITY_TOL: f64 = 1e-14;
/// Choi eigenvalues at or above `−CP_TOL` count as nonnegative.
pub const CP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelRatio {
    pub r: f64,
    /// `(t₁, t₂)` when built from a noise model.
    pub times: Option<(f64, f64)>,
}

impl KernelRatio {
    pub fn from_value(r: f64) -> Self {
        Self { r, times: None }
    }

    pub fn is_cp(&self) -> bool {
        self.r.abs() <= 1.0 + CP_TOL
    }
}

/// `k(t₂)/k(t₁)`.
pub fn kernel_ratio(noise: &NoiseModel, t1: f64, t2: f64) -> Result<KernelRatio> {
    if !(t1.is_finite() && t1 >= 0.0) {
        return Err(Error::param("t1", t1, "must be finite and >= 0"));
    }
    if !(t2.is_finite() && t2 > t1) {
        return Err(Error::param("t2", t2, "must be finite and > t1"));
    }
    let k1 = noise.kernel(t1);
    if k1.abs() <= INVERTIBILITY_TOL {
        return Err(Error::NonInvertibleMap {
            time: t1,
            kernel: k1,
        });
    }
    Ok(KernelRatio {
        r: noise.kernel(t2) / k1,
        times: Some((t1, t2)),
    })
}

/// Unnormalized Choi matrix `(I ⊗ E)(|Φ⁺⟩⟨Φ⁺|)` with `|Φ⁺⟩ = |00⟩ + |11⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    matrix: ComplexMatrix,
}

impl ChoiMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// Numerical spectrum, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut v = hermitian_eigenvalues(&self.matrix)?;
        v.reverse();
        Ok(v)
    }

    pub fn is_cp(&self) -> Result<bool> {
        Ok(self.eigenvalues()?.first().map_or(true, |&l| l >= -CP_TOL))
    }
}

pub fn intermediate_choi(ratio: &KernelRatio) -> ChoiMatrix {
    let mut m = ComplexMatrix::zeros(4, 4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(3, 3)] = c(1.0, 0.0);
    m[(0, 3)] = c(ratio.r, 0.0);
    m[(3, 0)] = c(ratio.r, 0.0);
    ChoiMatrix { matrix: m }
}

/// Choi matrix `Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)` of an arbitrary qubit map.
pub fn choi_of_map<F>(map: F) -> ChoiMatrix
where
    F: Fn(&ComplexMatrix) -> ComplexMatrix,
{
    let mut m = ComplexMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let mut unit = ComplexMatrix::zeros(2, 2);
            unit[(i, j)] = c(1.0, 0.0);
            let image = map(&unit);
            m.view_mut((2 * i, 2 * j), (2, 2)).copy_from(&image);
        }
    }
    ChoiMatrix { matrix: m }
}

/// Closed-form spectrum `(0, 0, 1 − r, 1 + r)`.
pub fn choi_eigenvalues(ratio: &KernelRatio) -> [f64; 4] {
    [0.0, 0.0, 1.0 - ratio.r, 1.0 + ratio.r]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Map `ρ ↦ Σ sign_j K_j ρ K_j†`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedKrausSet {
    pub terms: Vec<(ComplexMatrix, Sign)>,
}

impl SignedKrausSet {
    pub fn unsigned(ops: impl IntoIterator<Item = ComplexMatrix>) -> Self {
        Self {
            terms: ops.into_iter().map(|k| (k, Sign::Plus)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.terms.first().map_or(0, |(k, _)| k.nrows())
    }

    pub fn is_cp(&self) -> bool {
        self.terms.iter().all(|(_, s)| *s == Sign::Plus)
    }

    /// `max |Σ sign K†K − I|`.
    pub fn completeness_defect(&self) -> f64 {
        let n = self.dim();
        let mut acc = -identity(n);
        for (k, s) in &self.terms {
            acc += (k.adjoint() * k).scale(s.value());
        }
        crate::qops::max_abs(&acc)
    }

    /// Composition `self ∘ first` (apply `first`, then `self`).
    pub fn after(&self, first: &SignedKrausSet) -> SignedKrausSet {
        let mut terms = Vec::with_capacity(self.terms.len() * first.terms.len());
        for (a, sa) in &self.terms {
            for (b, sb) in &first.terms {
                let sign = if sa == sb { Sign::Plus } else { Sign::Minus };
                terms.push((a * b, sign));
            }
        }
        SignedKrausSet { terms }
    }
}

/// `K± = √(|1 ± r|/2) diag(1, ±1)`; the operator whose Choi eigenvalue is
/// negative carries the minus sign.
pub fn intermediate_kraus(ratio: &KernelRatio) -> SignedKrausSet {
    let r = ratio.r;
    let plus = identity(2).scale(((1.0 + r).abs() / 2.0).sqrt());
    let minus = sigma_z().scale(((1.0 - r).abs() / 2.0).sqrt());
    let plus_sign = if 1.0 + r < 0.0 {
        Sign::Minus
    } else {
        Sign::Plus
    };
    let minus_sign = if 1.0 - r < 0.0 {
        Sign::Minus
    } else {
        Sign::Plus
    };
    SignedKrausSet {
        terms: vec![(plus, plus_sign), (minus, minus_sign)],
    }
}

/// Kraus set of the full dephasing map `E(t, 0)`.
pub fn full_map_kraus(noise: &NoiseModel, t: f64) -> Result<SignedKrausSet> {
    if noise.is_none() {
        return Ok(SignedKrausSet::unsigned([identity(2)]));
    }
    Ok(SignedKrausSet::unsigned(noise.kraus_at(t)?))
}

/// Dephasing map with coherence factor `k`, as a Kraus set.
pub fn dephasing_map(k: f64) -> Result<SignedKrausSet> {
    if !k.is_finite() || k.abs() > 1.0 + KERNEL_RANGE_TOL {
        return Err(Error::KernelOutOfRange { value: k });
    }
    Ok(SignedKrausSet::unsigned(dephasing_kraus(
        k.clamp(-1.0, 1.0),
    )))
}

/// `Σ sign K ρ K†` on a single qubit.
pub fn apply_signed(rho: &ComplexMatrix, ks: &SignedKrausSet) -> Result<ComplexMatrix> {
    if rho.nrows() != ks.dim() || rho.ncols() != ks.dim() {
        return Err(Error::DimensionMismatch {
            expected: ks.dim(),
            found: rho.nrows(),
        });
    }
    let mut out = ComplexMatrix::zeros(rho.nrows(), rho.ncols());
    for (k, s) in &ks.terms {
        out += (k * rho * k.adjoint()).scale(s.value());
    }
    Ok(out)
}

/// `Σ sign (K ⊗ I) ρ (K ⊗ I)†` for a map acting on the coin factor of a
/// coin ⊗ position operator.
pub fn apply_coin_local(
    rho: &ComplexMatrix,
    ks: &SignedKrausSet,
    split: Split,
) -> Result<ComplexMatrix> {
    split.check(rho.nrows())?;
    if ks.dim() != split.coin {
        return Err(Error::DimensionMismatch {
            expected: split.coin,
            found: ks.dim(),
        });
    }
    let (dc, dp) = (split.coin, split.position);
    // Output block (a, b) = Σ_{c,d} coef[a][b][c][d] · input block (c, d).
    let mut coef = vec![ZERO; dc * dc * dc * dc];
    for (k, s) in &ks.terms {
        for a in 0..dc {
            for b in 0..dc {
                for cc in 0..dc {
                    for d in 0..dc {
                        coef[((a * dc + b) * dc + cc) * dc + d] +=
                            k[(a, cc)] * k[(b, d)].conj() * s.value();
                    }
                }
            }
        }
    }
    let mut out = ComplexMatrix::zeros(rho.nrows(), rho.ncols());
    for a in 0..dc {
        for b in 0..dc {
            let mut block = out.view_mut((a * dp, b * dp), (dp, dp));
            for cc in 0..dc {
                for d in 0..dc {
                    let w = coef[((a * dc + b) * dc + cc) * dc + d];
                    if w != ZERO {
                        block += rho.view((cc * dp, d * dp), (dp, dp)) * w;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpPoint {
    pub t2: f64,
    /// `1 − r`; `None` where the intermediate map does not exist.
    pub lambda3: Option<f64>,
    /// `1 + r`.
    pub lambda4: Option<f64>,
    pub is_cp: Option<bool>,
    pub invertible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpScan {
    pub t1: f64,
    pub points: Vec<CpPoint>,
    pub non_markovian_by_cp: bool,
}

impl CpScan {
    pub fn lambda3_sign_changes(&self) -> usize {
        let signs: Vec<bool> = self
            .points
            .iter()
            .filter_map(|p| p.lambda3)
            .filter(|l| l.abs() > CP_TOL)
            .map(|l| l > 0.0)
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Choi spectrum and CP verdict of `E(t₂, t₁)` for every `t₂` on the grid.
pub fn cp_divisibility_scan(
    noise: &NoiseModel,
    t1: f64,
    t2_grid: &[f64],
    exec: Exec,
) -> Result<CpScan> {
    if !(t1.is_finite() && t1 >= 0.0) {
        return Err(Error::param("t1", t1, "must be finite and >= 0"));
    }
    if let Some(&bad) = t2_grid.iter().find(|&&t2| !(t2.is_finite() && t2 > t1)) {
        return Err(Error::param("t2", bad, "must be finite and > t1"));
    }
    let points = map_slice(t2_grid, exec, |&t2| match kernel_ratio(noise, t1, t2) {
        Ok(ratio) => {
            let [_, _, l3, l4] = choi_eigenvalues(&ratio);
            CpPoint {
                t2,
                lambda3: Some(l3),
                lambda4: Some(l4),
                is_cp: Some(l3.min(l4) >= -CP_TOL),
                invertible: true,
            }
        }
        Err(_) => CpPoint {
            t2,
            lambda3: None,
            lambda4: None,
            is_cp: None,
            invertible: false,
        },
    });
    let non_markovian_by_cp = points.iter().any(|p| p.is_cp == Some(false));
    Ok(CpScan {
        t1,
        points,
        non_markovian_by_cp,
    })
}

/// `t₁ + dt, t₁ + 2dt, …` up to and including `t2_max` (within `dt/1000`).
pub fn uniform_grid(t1: f64, t2_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", dt, "must be finite and > 0"));
    }
    if !(t2_max.is_finite() && t2_max > t1) {
        return Err(Error::param("t2_max", t2_max, "must be finite and > t1"));
    }
    let n = ((t2_max - t1) / dt + 1e-3).floor() as usize;
    Ok((1..=n).map(|i| t1 + i as f64 * dt).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::max_abs;

    fn plus_state() -> ComplexMatrix {
        ComplexMatrix::from_element(2, 2, c(0.5, 0.0))
    }

    #[test]
    fn ratio_examples() {
        let oun = NoiseModel::oun(1.0, 0.05).unwrap();
        let r = kernel_ratio(&oun, 2.0, 2.0 + 1e-9).unwrap();
        assert!((r.r - 1.0).abs() < 1e-8);
        for t2 in [2.5, 5.0, 40.0] {
            let r = kernel_ratio(&oun, 2.0, t2).unwrap().r;
            assert!(r > 0.0 && r < 1.0);
        }
        let rtn = NoiseModel::rtn(0.9, 0.05).unwrap();
        assert!(kernel_ratio(&rtn, 0.85, 1.0).unwrap().r.abs() > 1.0);
        assert!(kernel_ratio(&rtn, 2.0, 1.0).is_err());
    }

    #[test]
    fn ratio_rejects_kernel_zero() {
        let rtn = NoiseModel::rtn(0.9, 0.05).unwrap();
        let (mut lo, mut hi) = (0.88, 0.9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rtn.kernel(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(matches!(
            kernel_ratio(&rtn, lo, 2.0),
            Err(Error::NonInvertibleMap { .. })
        ));
    }

    #[test]
    fn choi_examples() {
        let id = intermediate_choi(&KernelRatio::from_value(1.0));
        let identity_choi = choi_of_map(|m| m.clone());
        assert_eq!(id.matrix(), identity_choi.matrix());

        let dephased = intermediate_choi(&KernelRatio::from_value(0.0));
        let diag = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            ZERO,
            ZERO,
            c(1.0, 0.0),
        ]));
        assert_eq!(dephased.matrix(), &diag);

        let m = intermediate_choi(&KernelRatio::from_value(1.2));
        assert_eq!(m.matrix()[(0, 3)], c(1.2, 0.0));
        assert_eq!(m.matrix()[(3, 0)], c(1.2, 0.0));
        assert!((m.matrix().trace() - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(
            choi_eigenvalues(&KernelRatio::from_value(1.0)),
            [0.0, 0.0, 0.0, 2.0]
        );
        for r in [-1.7, -1.0, -0.3, 0.0, 0.8, 1.0, 1.2, 3.0] {
            let ratio = KernelRatio::from_value(r);
            let mut analytic = choi_eigenvalues(&ratio).to_vec();
            analytic.sort_by(f64::total_cmp);
            let numeric = intermediate_choi(&ratio).eigenvalues().unwrap();
            for (a, b) in analytic.iter().zip(&numeric) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kraus_examples() {
        let ks = intermediate_kraus(&KernelRatio::from_value(1.0));
        assert!((&ks.terms[0].0 - identity(2)).norm() < 1e-15);
        assert_eq!(max_abs(&ks.terms[1].0), 0.0);
        assert!(ks.is_cp());

        let ks = intermediate_kraus(&KernelRatio::from_value(0.5));
        assert!((&ks.terms[0].0 - identity(2).scale(0.75_f64.sqrt())).norm() < 1e-15);
        assert!((&ks.terms[1].0 - sigma_z().scale(0.5)).norm() < 1e-15);
        assert!(ks.completeness_defect() < 1e-15);

        let ks = intermediate_kraus(&KernelRatio::from_value(1.2));
        assert_eq!(ks.terms[0].1, Sign::Plus);
        assert_eq!(ks.terms[1].1, Sign::Minus);
        assert!((&ks.terms[0].0 - identity(2).scale(1.1_f64.sqrt())).norm() < 1e-15);
        assert!(ks.completeness_defect() < 1e-14);

        let ks = intermediate_kraus(&KernelRatio::from_value(-1.5));
        assert_eq!(ks.terms[0].1, Sign::Minus);
        assert_eq!(ks.terms[1].1, Sign::Plus);
        assert!(ks.completeness_defect() < 1e-14);
    }

    #[test]
    fn apply_examples() {
        let rho = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.3, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.7, 0.0)],
        );
        let out = apply_signed(&rho, &intermediate_kraus(&KernelRatio::from_value(1.0))).unwrap();
        assert!((out - &rho).norm() < 1e-15);

        let out = apply_signed(
            &plus_state(),
            &intermediate_kraus(&KernelRatio::from_value(1.2)),
        )
        .unwrap();
        let expect = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(0.6, 0.0), c(0.6, 0.0), c(0.5, 0.0)],
        );
        assert!((&out - expect).norm() < 1e-14);
        let min = *hermitian_eigenvalues(&out).unwrap().last().unwrap();
        assert!((min + 0.1).abs() < 1e-14);

        let diag = ComplexMatrix::from_row_slice(2, 2, &[c(0.4, 0.0), ZERO, ZERO, c(0.6, 0.0)]);
        for r in [-2.0, 0.3, 1.7] {
            let out =
                apply_signed(&diag, &intermediate_kraus(&KernelRatio::from_value(r))).unwrap();
            assert!((out - &diag).norm() < 1e-14);
        }
    }

    #[test]
    fn coin_local_matches_kronecker() {
        let split = Split::new(2, 3);
        let rho = ComplexMatrix::from_fn(6, 6, |i, j| {
            c((i + 2 * j) as f64 * 0.1, i as f64 - j as f64)
        });
        for r in [0.4, 1.3, -1.2] {
            let ks = intermediate_kraus(&KernelRatio::from_value(r));
            let fast = apply_coin_local(&rho, &ks, split).unwrap();
            let mut slow = ComplexMatrix::zeros(6, 6);
            for (k, s) in &ks.terms {
                let big = k.kronecker(&identity(3));
                slow += (&big * &rho * big.adjoint()).scale(s.value());
            }
            assert!((fast - slow).norm() < 1e-13);
        }
        let h = crate::walk::coin_operator(0.3);
        let ks = SignedKrausSet::unsigned([h.clone()]);
        let fast = apply_coin_local(&rho, &ks, split).unwrap();
        let big = h.kronecker(&identity(3));
        assert!((fast - &big * &rho * big.adjoint()).norm() < 1e-13);
    }

    #[test]
    fn scan_examples() {
        let grid = uniform_grid(1.0, 20.0, 0.1).unwrap();
        assert_eq!(grid.len(), 190);
        assert!((grid[189] - 20.0).abs() < 1e-12);

        let markov = NoiseModel::rtn(0.9, 5.0).unwrap();
        let scan = cp_divisibility_scan(&markov, 1.0, &grid, Exec::default()).unwrap();
        assert!(!scan.non_markovian_by_cp);

        let nm = NoiseModel::rtn(0.9, 0.05).unwrap();
        let scan = cp_divisibility_scan(&nm, 1.0, &grid, Exec::default()).unwrap();
        assert!(scan.non_markovian_by_cp);
        assert!(scan.lambda3_sign_changes() >= 2);

        for noise in [
            NoiseModel::pln(5.0, 0.05, 2.0).unwrap(),
            NoiseModel::pln(5.0, 2.0, 2.0).unwrap(),
        ] {
            assert!(
                !cp_divisibility_scan(&noise, 1.0, &grid, Exec::default())
                    .unwrap()
                    .non_markovian_by_cp
            );
        }
    }

    #[test]
    fn scan_flags_non_invertible_points() {
        let nm = NoiseModel::rtn(0.9, 0.05).unwrap();
        let (mut lo, mut hi) = (0.88, 0.9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if nm.kernel(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let scan = cp_divisibility_scan(&nm, lo, &[1.0, 2.0], Exec::Sequential).unwrap();
        assert!(scan
            .points
            .iter()
            .all(|p| !p.invertible && p.is_cp.is_none()));
    }
}
