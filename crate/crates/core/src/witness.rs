//! Witnesses of non-Markovian dynamics and measures of quantumness along a
//! walk: trace distance, mutual information, measurement-induced
//! disturbance (MID), quantum discord, coin entropy and position variance.
//!
//! Entropies are in bits. Measures come in a dense form taking a
//! [`DensityMatrix`] and a factored form taking a [`FactoredState`]; the
//! series drivers use the factored form, whose cost is set by the state's
//! rank instead of the lattice size.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::par::{map_indexed, try_map_indexed, Exec};
use crate::qops::{
    c, canonical_eigenbasis, degenerate_groups, entropy_bits, gram_spectrum, hermitian_eigen,
    hermitian_eigenvalues, partial_trace, trace_norm, von_neumann_entropy, ComplexMatrix,
    ComplexVector, DensityMatrix, FactoredState, Split, Subsystem, C64, ENTROPY_CUTOFF,
    FACTOR_CUTOFF,
};
use crate::walk::{
    dephase_pure, noiseless_trajectory, pure_position_distribution, stepwise_visit, Distribution,
    EvolutionMode, Lattice, WalkConfig,
};

/// Stepwise states whose smallest eigenvalue falls below this are rejected
/// by entropy-based witnesses.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// `½ ‖ρ₁ − ρ₂‖₁`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho1.dim(),
            found: rho2.dim(),
        });
    }
    Ok(0.5 * trace_norm(&(rho1.matrix() - rho2.matrix()))?)
}

/// `S(ρ_c) + S(ρ_p) − S(ρ)`.
pub fn mutual_information(rho: &DensityMatrix, split: Split) -> Result<f64> {
    let rc = partial_trace(rho, split, Subsystem::Coin)?;
    let rp = partial_trace(rho, split, Subsystem::Position)?;
    Ok(von_neumann_entropy(&rc)? + von_neumann_entropy(&rp)? - von_neumann_entropy(rho)?)
}

pub fn mutual_information_factored(f: &FactoredState, split: Split) -> Result<f64> {
    split.check(f.dim())?;
    let sc = von_neumann_entropy(&f.reduced_coin(split)?)?;
    let sp = entropy_bits(&gram_spectrum(&f.position_factor(split)?)?).max(0.0);
    Ok(sc + sp - f.entropy()?)
}

/// `S(ρ_c)`.
pub fn coin_entropy(rho: &DensityMatrix, split: Split) -> Result<f64> {
    von_neumann_entropy(&partial_trace(rho, split, Subsystem::Coin)?)
}

pub fn coin_entropy_factored(f: &FactoredState, split: Split) -> Result<f64> {
    von_neumann_entropy(&f.reduced_coin(split)?)
}

/// `E[x²] − E[x]²`.
pub fn variance(p: &Distribution) -> f64 {
    let mean: f64 = p
        .positions
        .iter()
        .zip(&p.probabilities)
        .map(|(&x, &w)| x as f64 * w)
        .sum();
    p.positions
        .iter()
        .zip(&p.probabilities)
        .map(|(&x, &w)| w * (x as f64 - mean).powi(2))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MidResult {
    pub value: f64,
    pub mutual_information: f64,
    /// Set when a marginal has a degenerate nonzero eigenvalue, so the
    /// projectors depend on the canonical basis choice.
    pub degenerate: bool,
}

fn degenerate_nonzero(values: &[f64]) -> bool {
    degenerate_groups(values)
        .into_iter()
        .any(|g| g.len() > 1 && values[g.start] > ENTROPY_CUTOFF)
}

/// Measurement-induced disturbance `I(ρ) − I(Π(ρ))`, where `Π` measures
/// both marginals in their own eigenbases.
///
/// Dense route: builds `Π(ρ)` explicitly from full eigenbases of both
/// marginals. Within degenerate eigenspaces the basis is fixed by projecting
/// computational basis vectors in ascending order.
pub fn mid(rho: &DensityMatrix, split: Split) -> Result<MidResult> {
    split.check(rho.dim())?;
    let rc = partial_trace(rho, split, Subsystem::Coin)?;
    let rp = partial_trace(rho, split, Subsystem::Position)?;
    let (cv, cvec) = hermitian_eigen(rc.matrix())?;
    let (pv, pvec) = hermitian_eigen(rp.matrix())?;
    let (cb, _) = canonical_eigenbasis(&cv, &cvec);
    let (pb, _) = canonical_eigenbasis(&pv, &pvec);
    let degenerate = degenerate_nonzero(&cv) || degenerate_nonzero(&pv);

    let n = rho.dim();
    let mut measured = ComplexMatrix::zeros(n, n);
    for a in 0..split.coin {
        for k in 0..split.position {
            let v = cb.column(a).kronecker(&pb.column(k));
            let p = (v.adjoint() * rho.matrix() * &v)[(0, 0)].re;
            if p != 0.0 {
                measured += (&v * v.adjoint()).scale(p);
            }
        }
    }
    let mi = mutual_information(rho, split)?;
    let classical = mutual_information(&DensityMatrix::from_raw(measured), split)?;
    Ok(MidResult {
        value: mi - classical,
        mutual_information: mi,
        degenerate,
    })
}

/// Orthonormal eigenvectors of `ρ_p` spanning its support, canonicalised
/// within degenerate groups, with their eigenvalues.
fn position_support(f: &FactoredState, split: Split) -> Result<(Vec<f64>, ComplexMatrix)> {
    let u = f.position_factor(split)?;
    if u.ncols() == 0 {
        return Ok((Vec::new(), ComplexMatrix::zeros(split.position, 0)));
    }
    let (values, vectors) = hermitian_eigen(&(u.adjoint() * &u))?;
    let kept: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] > FACTOR_CUTOFF)
        .collect();
    let cols: Vec<ComplexVector> = kept
        .iter()
        .map(|&i| (&u * vectors.column(i)).unscale(values[i].sqrt()))
        .collect();
    let kept_values: Vec<f64> = kept.iter().map(|&i| values[i]).collect();
    if cols.is_empty() {
        return Ok((kept_values, ComplexMatrix::zeros(split.position, 0)));
    }
    let basis = ComplexMatrix::from_columns(&cols);
    let (basis, _) = canonical_eigenbasis(&kept_values, &basis);
    Ok((kept_values, basis))
}

/// Factored MID. Eigenvectors of `ρ_p` outside its support carry zero
/// weight in `Π(ρ)` and are skipped.
pub fn mid_factored(f: &FactoredState, split: Split) -> Result<MidResult> {
    split.check(f.dim())?;
    let rc = f.reduced_coin(split)?;
    let (cv, cvec) = hermitian_eigen(rc.matrix())?;
    let (cb, _) = canonical_eigenbasis(&cv, &cvec);
    let (pv, pb) = position_support(f, split)?;
    let degenerate = degenerate_nonzero(&cv) || degenerate_nonzero(&pv);

    let joint: Vec<Vec<f64>> = (0..split.coin)
        .map(|a| {
            let m: Vec<C64> = cb.column(a).iter().copied().collect();
            let block = f.project_coin(split, &m);
            let overlaps = pb.adjoint() * block;
            (0..pb.ncols())
                .map(|k| overlaps.row(k).norm_squared())
                .collect()
        })
        .collect();
    let mi = mutual_information_factored(f, split)?;
    Ok(MidResult {
        value: mi - classical_mutual_information(&joint),
        mutual_information: mi,
        degenerate,
    })
}

/// Shannon mutual information of a joint distribution `p[a][k]`, in bits.
fn classical_mutual_information(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = match joint.first() {
        Some(first) => (0..first.len())
            .map(|k| joint.iter().map(|r| r[k]).sum())
            .collect(),
        None => Vec::new(),
    };
    let all: Vec<f64> = joint.iter().flatten().copied().collect();
    entropy_bits(&rows) + entropy_bits(&cols) - entropy_bits(&all)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum DiscordDirection {
    /// Rank-1 projective measurements on the coin.
    #[default]
    MeasureCoin,
    /// Rank-1 projective measurements on the position, restricted to bases
    /// adapted to the support of `ρ_p`.
    MeasurePosition,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscordOptions {
    pub direction: DiscordDirection,
    /// Coarse grid `(n_θ, n_φ)` over the Bloch sphere.
    pub grid: (usize, usize),
    /// Convergence tolerance on the classical correlation.
    pub tol: f64,
    pub max_iter: usize,
    pub exec: Exec,
}

impl Default for DiscordOptions {
    fn default() -> Self {
        Self {
            direction: DiscordDirection::MeasureCoin,
            grid: (32, 32),
            tol: 1e-7,
            max_iter: 5_000,
            exec: Exec::Sequential,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscordResult {
    pub value: f64,
    pub mutual_information: f64,
    /// Best classical correlation `J` found.
    pub classical: f64,
    /// Optimal Bloch angles `(θ, φ)` for coin measurements.
    pub axis: Option<(f64, f64)>,
}

/// Coin measurement basis for Bloch angles `(θ, φ)`.
pub fn coin_measurement(theta: f64, phi: f64) -> [[C64; 2]; 2] {
    let (s, co) = (theta / 2.0).sin_cos();
    let e = C64::from_polar(1.0, phi);
    [[c(co, 0.0), e * s], [-e.conj() * s, c(co, 0.0)]]
}

/// `J = S(ρ_p) − Σ_i p_i S(ρ_p⁽ⁱ⁾)` for a coin measurement along `(θ, φ)`.
pub fn classical_correlation_coin(
    f: &FactoredState,
    split: Split,
    s_position: f64,
    theta: f64,
    phi: f64,
) -> Result<f64> {
    let basis = coin_measurement(theta, phi);
    let mut conditional = 0.0;
    for m in &basis {
        let w = f.project_coin(split, m);
        let p = w.norm_squared();
        if p > ENTROPY_CUTOFF {
            let spectrum: Vec<f64> = gram_spectrum(&w)?.iter().map(|v| v / p).collect();
            conditional += p * entropy_bits(&spectrum).max(0.0);
        }
    }
    Ok(s_position - conditional)
}

/// Quantum discord `I(ρ) − max J`.
pub fn discord(
    rho: &DensityMatrix,
    split: Split,
    options: &DiscordOptions,
) -> Result<DiscordResult> {
    discord_factored(&FactoredState::from_density(rho)?, split, options)
}

pub fn discord_factored(
    f: &FactoredState,
    split: Split,
    options: &DiscordOptions,
) -> Result<DiscordResult> {
    split.check(f.dim())?;
    if split.coin != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: split.coin,
        });
    }
    let mi = mutual_information_factored(f, split)?;
    let (classical, axis) = match options.direction {
        DiscordDirection::MeasureCoin => {
            let (j, theta, phi) = optimize_coin_measurement(f, split, options)?;
            (j, Some((theta, phi)))
        }
        DiscordDirection::MeasurePosition => {
            (optimize_position_measurement(f, split, options)?, None)
        }
    };
    Ok(DiscordResult {
        value: mi - classical,
        mutual_information: mi,
        classical,
        axis,
    })
}

fn optimize_coin_measurement(
    f: &FactoredState,
    split: Split,
    options: &DiscordOptions,
) -> Result<(f64, f64, f64)> {
    let (nt, np) = options.grid;
    if nt < 2 || np < 1 {
        return Err(Error::param(
            "discord grid",
            nt.min(np) as f64,
            "needs >= 2 polar and >= 1 azimuthal points",
        ));
    }
    let sp = entropy_bits(&gram_spectrum(&f.position_factor(split)?)?).max(0.0);
    let dtheta = PI / (nt - 1) as f64;
    let dphi = 2.0 * PI / np as f64;
    let grid = try_map_indexed(nt * np, options.exec, |idx| {
        let (theta, phi) = ((idx / np) as f64 * dtheta, (idx % np) as f64 * dphi);
        classical_correlation_coin(f, split, sp, theta, phi).map(|j| (j, theta, phi))
    })?;
    let best = grid
        .into_iter()
        .fold((f64::NEG_INFINITY, 0.0, 0.0), |acc, x| {
            if x.0 > acc.0 {
                x
            } else {
                acc
            }
        });

    // J is smooth and periodic in (θ, φ), so the refinement runs unbounded.
    let objective = |x: &[f64]| {
        classical_correlation_coin(f, split, sp, x[0], x[1]).map_or(f64::INFINITY, |j| -j)
    };
    let refined = nelder_mead(
        objective,
        &[best.1, best.2],
        &[0.5 * dtheta, 0.5 * dphi],
        options.tol,
        options.max_iter,
    );
    if -refined.value >= best.0 {
        let theta = refined.point[0].rem_euclid(2.0 * PI);
        let phi = refined.point[1].rem_euclid(2.0 * PI);
        // Fold θ ∈ (π, 2π) back onto [0, π] with the antipodal azimuth.
        let (theta, phi) = if theta > PI {
            (2.0 * PI - theta, (phi + PI).rem_euclid(2.0 * PI))
        } else {
            (theta, phi)
        };
        Ok((-refined.value, theta, phi))
    } else {
        Ok(best)
    }
}

/// Largest support dimension of `ρ_p` for which position-side discord is
/// attempted; the search space grows as its square.
pub const MAX_POSITION_SUPPORT: usize = 8;

fn optimize_position_measurement(
    f: &FactoredState,
    split: Split,
    options: &DiscordOptions,
) -> Result<f64> {
    let (_, support) = position_support(f, split)?;
    let d = support.ncols();
    if d > MAX_POSITION_SUPPORT {
        return Err(Error::param(
            "position support dimension",
            d as f64,
            "too large for position-side discord",
        ));
    }
    let sc = von_neumann_entropy(&f.reduced_coin(split)?)?;
    if d <= 1 {
        return Ok(sc - conditional_coin_entropy(f, split, &support)?);
    }
    let objective = |x: &[f64]| {
        let basis = &support * unitary_from_params(x, d);
        conditional_coin_entropy(f, split, &basis).unwrap_or(f64::INFINITY)
    };
    let n = d * d;
    let starts: Vec<Vec<f64>> = (0..6)
        .map(|s| {
            (0..n)
                .map(|k| {
                    if s == 0 {
                        0.0
                    } else {
                        0.9 * ((1.7 * k as f64 + 2.3 * s as f64).sin())
                    }
                })
                .collect()
        })
        .collect();
    let best = map_indexed(starts.len(), options.exec, |s| {
        nelder_mead(
            objective,
            &starts[s],
            &vec![0.4; n],
            options.tol,
            options.max_iter,
        )
        .value
    })
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    Ok(sc - best)
}

/// `Σ_j p_j S(ρ_c⁽ʲ⁾)` for position measurement vectors given as columns.
fn conditional_coin_entropy(f: &FactoredState, split: Split, basis: &ComplexMatrix) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..basis.ncols() {
        let w = basis.column(j).into_owned();
        let block = f.project_position(split, &w);
        let p = block.norm_squared();
        if p > ENTROPY_CUTOFF {
            let rho = (&block * block.adjoint()).unscale(p);
            total += p * entropy_bits(&hermitian_eigenvalues(&rho)?).max(0.0);
        }
    }
    Ok(total)
}

/// `exp(iH)` for the Hermitian `H` whose upper triangle is packed in `x`
/// (`d` diagonal reals, then real and imaginary parts above the diagonal).
fn unitary_from_params(x: &[f64], d: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        h[(i, i)] = c(x[k], 0.0);
        k += 1;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            h[(i, j)] = c(x[k], x[k + 1]);
            h[(j, i)] = c(x[k], -x[k + 1]);
            k += 2;
        }
    }
    match hermitian_eigen(&h) {
        Ok((values, vectors)) => {
            let phases = ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(
                d,
                values.iter().map(|&v| C64::from_polar(1.0, v)),
            ));
            &vectors * phases * vectors.adjoint()
        }
        Err(_) => ComplexMatrix::identity(d, d),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Derivative-free Nelder–Mead minimisation. Stops when the spread of
/// function values over the simplex drops to `tol` or after `max_iter`
/// iterations.
pub fn nelder_mead<F>(f: F, start: &[f64], step: &[f64], tol: f64, max_iter: usize) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step[i];
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() <= tol {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + t * (simplex[n][k] - centroid[k]))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let p = along(-0.5);
            let v = f(&p);
            (p, v)
        } else {
            let p = along(0.5);
            let v = f(&p);
            (p, v)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            for k in 0..n {
                simplex[i][k] = simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]);
            }
            values[i] = f(&simplex[i]);
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        point: simplex[best].clone(),
        value: values[best],
        iterations,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WitnessKind {
    TraceDistance,
    MutualInformation,
    Mid,
    Discord,
    Entropy,
    Variance,
}

impl WitnessKind {
    pub const ALL: [WitnessKind; 6] = [
        WitnessKind::TraceDistance,
        WitnessKind::MutualInformation,
        WitnessKind::Mid,
        WitnessKind::Discord,
        WitnessKind::Entropy,
        WitnessKind::Variance,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            WitnessKind::TraceDistance => "td",
            WitnessKind::MutualInformation => "mi",
            WitnessKind::Mid => "mid",
            WitnessKind::Discord => "qd",
            WitnessKind::Entropy => "entropy",
            WitnessKind::Variance => "variance",
        }
    }

    fn needs_positive_state(self) -> bool {
        matches!(
            self,
            WitnessKind::MutualInformation | WitnessKind::Mid | WitnessKind::Discord
        )
    }
}

impl fmt::Display for WitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for WitnessKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        WitnessKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| {
                format!(
                    "unknown witness `{s}` (expected one of td, mi, mid, qd, entropy, variance)"
                )
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessSeries {
    pub kind: WitnessKind,
    pub steps: Vec<usize>,
    pub values: Vec<f64>,
    /// Steps at which a MID value depended on the degeneracy rule.
    pub degenerate_steps: Vec<usize>,
}

impl WitnessSeries {
    /// Number of strict increases between consecutive samples with index
    /// `≥ from` (as step values).
    pub fn rises_after(&self, from: usize, threshold: f64) -> usize {
        self.steps
            .windows(2)
            .zip(self.values.windows(2))
            .filter(|(s, v)| s[0] >= from && v[1] > v[0] + threshold)
            .count()
    }

    pub fn drops_after(&self, from: usize, threshold: f64) -> usize {
        self.steps
            .windows(2)
            .zip(self.values.windows(2))
            .filter(|(s, v)| s[0] >= from && v[1] < v[0] - threshold)
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesOptions {
    /// Second initial coin state `(δ, η)` for trace-distance series.
    pub td_partner: (f64, f64),
    pub discord: DiscordOptions,
    pub exec: Exec,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            td_partner: (-FRAC_PI_4, 0.0),
            discord: DiscordOptions::default(),
            exec: Exec::default(),
        }
    }
}

/// One witness evaluated at every step `0..=T`.
pub fn witness_series(
    cfg: &WalkConfig,
    noise: &NoiseModel,
    mode: EvolutionMode,
    kind: WitnessKind,
    options: &SeriesOptions,
) -> Result<WitnessSeries> {
    let mut all = witness_many(cfg, noise, mode, &[kind], options)?;
    Ok(all.remove(0))
}

/// Several witnesses over one shared trajectory, in the order requested.
pub fn witness_many(
    cfg: &WalkConfig,
    noise: &NoiseModel,
    mode: EvolutionMode,
    kinds: &[WitnessKind],
    options: &SeriesOptions,
) -> Result<Vec<WitnessSeries>> {
    cfg.validate()?;
    noise.validate()?;
    let rows = match mode {
        EvolutionMode::Noiseless => pure_rows(cfg, &NoiseModel::None, kinds, options)?,
        EvolutionMode::OneShot => pure_rows(cfg, noise, kinds, options)?,
        EvolutionMode::Stepwise => stepwise_rows(cfg, noise, kinds, options)?,
    };
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| WitnessSeries {
            kind,
            steps: (0..=cfg.steps).collect(),
            values: rows.iter().map(|r| r[i].0).collect(),
            degenerate_steps: rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r[i].1)
                .map(|(t, _)| t)
                .collect(),
        })
        .collect())
}

type Row = Vec<(f64, bool)>;

fn pure_rows(
    cfg: &WalkConfig,
    noise: &NoiseModel,
    kinds: &[WitnessKind],
    options: &SeriesOptions,
) -> Result<Vec<Row>> {
    let split = cfg.split();
    let lattice = cfg.lattice();
    let trajectory = noiseless_trajectory(cfg)?;
    let partner = if kinds.contains(&WitnessKind::TraceDistance) {
        let (d, e) = options.td_partner;
        Some(noiseless_trajectory(&cfg.with_initial(d, e))?)
    } else {
        None
    };
    try_map_indexed(cfg.steps + 1, options.exec, |t| {
        let state = dephase_pure(&trajectory[t], noise, t as f64, split)?;
        kinds
            .iter()
            .map(|&kind| match kind {
                WitnessKind::TraceDistance => {
                    let other = partner.as_ref().expect("partner built for TD");
                    let other = dephase_pure(&other[t], noise, t as f64, split)?;
                    let td =
                        trace_distance(&state.reduced_coin(split)?, &other.reduced_coin(split)?)?;
                    Ok((td, false))
                }
                WitnessKind::Variance => Ok((
                    variance(&pure_position_distribution(&trajectory[t], &lattice)?),
                    false,
                )),
                _ => factored_measure(&state, split, kind, options),
            })
            .collect()
    })
}

fn factored_measure(
    state: &FactoredState,
    split: Split,
    kind: WitnessKind,
    options: &SeriesOptions,
) -> Result<(f64, bool)> {
    match kind {
        WitnessKind::MutualInformation => Ok((mutual_information_factored(state, split)?, false)),
        WitnessKind::Mid => mid_factored(state, split).map(|m| (m.value, m.degenerate)),
        WitnessKind::Discord => Ok((
            discord_factored(state, split, &options.discord)?.value,
            false,
        )),
        WitnessKind::Entropy => Ok((coin_entropy_factored(state, split)?, false)),
        WitnessKind::TraceDistance | WitnessKind::Variance => unreachable!("handled by the caller"),
    }
}

/// Factors a dense state, failing if it is not positive semidefinite.
pub fn factor_positive(rho: &DensityMatrix, step: usize) -> Result<FactoredState> {
    let (values, vectors) = hermitian_eigen(rho.matrix())?;
    let min = values.last().copied().unwrap_or(0.0);
    if min < -POSITIVITY_TOL {
        return Err(Error::NotPositive {
            step,
            min_eigenvalue: min,
        });
    }
    let cols: Vec<ComplexVector> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > FACTOR_CUTOFF)
        .map(|(i, &v)| vectors.column(i).scale(v.sqrt()))
        .collect();
    Ok(FactoredState::from_factor(if cols.is_empty() {
        ComplexMatrix::zeros(rho.dim(), 0)
    } else {
        ComplexMatrix::from_columns(&cols)
    }))
}

fn stepwise_rows(
    cfg: &WalkConfig,
    noise: &NoiseModel,
    kinds: &[WitnessKind],
    options: &SeriesOptions,
) -> Result<Vec<Row>> {
    let split = cfg.split();
    let lattice: Lattice = cfg.lattice();
    let mut rows: Vec<Row> = Vec::with_capacity(cfg.steps + 1);
    let mut partner_coins = Vec::new();
    if kinds.contains(&WitnessKind::TraceDistance) {
        let (d, e) = options.td_partner;
        stepwise_visit(&cfg.with_initial(d, e), noise, cfg.steps, |_, rho| {
            partner_coins.push(partial_trace(
                &DensityMatrix::from_raw(rho.clone()),
                split,
                Subsystem::Coin,
            )?);
            Ok(())
        })?;
    }
    stepwise_visit(cfg, noise, cfg.steps, |t, m| {
        let rho = DensityMatrix::from_raw(m.clone());
        let factored = if kinds.iter().any(|k| k.needs_positive_state()) {
            Some(factor_positive(&rho, t)?)
        } else {
            None
        };
        let mut row = Row::with_capacity(kinds.len());
        for &kind in kinds {
            row.push(match kind {
                WitnessKind::TraceDistance => {
                    let coin = partial_trace(&rho, split, Subsystem::Coin)?;
                    (trace_distance(&coin, &partner_coins[t])?, false)
                }
                WitnessKind::Variance => (
                    variance(&crate::walk::position_distribution(&rho, &lattice)?),
                    false,
                ),
                WitnessKind::Entropy => {
                    let coin = partial_trace(&rho, split, Subsystem::Coin)?;
                    let min = coin.min_eigenvalue()?;
                    if min < -POSITIVITY_TOL {
                        return Err(Error::NotPositive {
                            step: t,
                            min_eigenvalue: min,
                        });
                    }
                    (von_neumann_entropy(&coin)?, false)
                }
                _ => factored_measure(
                    factored.as_ref().expect("factored when needed"),
                    split,
                    kind,
                    options,
                )?,
            });
        }
        rows.push(row);
        Ok(())
    })?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{PureState, ZERO};
    use crate::walk::evolve_noiseless;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn pure(v: &[C64]) -> DensityMatrix {
        PureState::normalized(ComplexVector::from_column_slice(v))
            .unwrap()
            .to_density()
    }

    fn bell() -> DensityMatrix {
        let s = FRAC_1_SQRT_2;
        pure(&[c(s, 0.0), ZERO, ZERO, c(s, 0.0)])
    }

    fn classical_state() -> DensityMatrix {
        DensityMatrix::diagonal(&[0.1, 0.2, 0.3, 0.4]).unwrap()
    }

    #[test]
    fn trace_distance_examples() {
        let rho = DensityMatrix::diagonal(&[0.3, 0.7]).unwrap();
        assert_eq!(trace_distance(&rho, &rho).unwrap(), 0.0);
        let plus = pure(&[c(1.0, 0.0), c(1.0, 0.0)]);
        let minus = pure(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert!((trace_distance(&plus, &minus).unwrap() - 1.0).abs() < 1e-14);
        let zero = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        assert!(
            (trace_distance(&zero, &DensityMatrix::maximally_mixed(2)).unwrap() - 0.5).abs()
                < 1e-14
        );
        assert!(trace_distance(&zero, &bell()).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let split = Split::new(2, 2);
        let product = DensityMatrix::diagonal(&[0.3, 0.7])
            .unwrap()
            .tensor(&DensityMatrix::diagonal(&[0.6, 0.4]).unwrap());
        assert!(mutual_information(&product, split).unwrap().abs() < 1e-12);
        assert!((mutual_information(&bell(), split).unwrap() - 2.0).abs() < 1e-12);

        let cfg = WalkConfig::with_steps(4);
        let rho = evolve_noiseless(&cfg, 2).unwrap().to_density();
        assert!((mutual_information(&rho, cfg.split()).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn mid_examples() {
        let split = Split::new(2, 2);
        let product = DensityMatrix::diagonal(&[0.3, 0.7])
            .unwrap()
            .tensor(&DensityMatrix::diagonal(&[0.6, 0.4]).unwrap());
        assert!(mid(&product, split).unwrap().value.abs() < 1e-12);

        let m = mid(&bell(), split).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert!(m.degenerate);
        let f = FactoredState::from_density(&bell()).unwrap();
        assert!((mid_factored(&f, split).unwrap().value - 1.0).abs() < 1e-12);

        assert!(mid(&classical_state(), split).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn discord_examples() {
        let split = Split::new(2, 2);
        let opts = DiscordOptions::default();
        assert!(
            discord(&classical_state(), split, &opts)
                .unwrap()
                .value
                .abs()
                < 1e-6
        );
        let d = discord(&bell(), split, &opts).unwrap();
        assert!((d.value - 1.0).abs() < 1e-6);
        let product = pure(&[c(0.6, 0.0), c(0.0, 0.8)])
            .tensor(&DensityMatrix::diagonal(&[0.5, 0.5]).unwrap());
        assert!(discord(&product, split, &opts).unwrap().value.abs() < 1e-6);

        let reverse = DiscordOptions {
            direction: DiscordDirection::MeasurePosition,
            ..opts
        };
        assert!((discord(&bell(), split, &reverse).unwrap().value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coin_entropy_and_variance_examples() {
        let cfg = WalkConfig::with_steps(4);
        let split = cfg.split();
        let lattice = cfg.lattice();
        let rho0 = cfg.initial_state().to_density();
        assert!(coin_entropy(&rho0, split).unwrap().abs() < 1e-12);
        assert!((coin_entropy(&bell(), Split::new(2, 2)).unwrap() - 1.0).abs() < 1e-12);

        let d0 = pure_position_distribution(&cfg.initial_state(), &lattice).unwrap();
        assert_eq!(variance(&d0), 0.0);
        let d1 = pure_position_distribution(&evolve_noiseless(&cfg, 1).unwrap(), &lattice).unwrap();
        assert!(variance(&d1).abs() < 1e-14);
        let d2 = pure_position_distribution(&evolve_noiseless(&cfg, 2).unwrap(), &lattice).unwrap();
        assert!((variance(&d2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[0.1, 0.1], 1e-14, 10_000);
        assert!((m.point[0] - 1.0).abs() < 1e-4 && (m.point[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn series_examples() {
        let cfg = WalkConfig::with_steps(12);
        let opts = SeriesOptions::default();
        let td = witness_series(
            &cfg,
            &NoiseModel::None,
            EvolutionMode::Noiseless,
            WitnessKind::TraceDistance,
            &opts,
        )
        .unwrap();
        assert!(td.rises_after(0, 0.0) >= 1);
        assert!((td.values[0] - 1.0).abs() < 1e-12);

        let noise = NoiseModel::rtn(0.08, 0.001).unwrap();
        let mi = witness_series(
            &cfg,
            &noise,
            EvolutionMode::OneShot,
            WitnessKind::MutualInformation,
            &opts,
        )
        .unwrap();
        assert!(mi.values[0].abs() < 1e-12);
        assert_eq!(mi.steps.len(), 13);

        assert_eq!("qd".parse::<WitnessKind>().unwrap(), WitnessKind::Discord);
        assert!("xx".parse::<WitnessKind>().is_err());
    }

    #[test]
    fn stepwise_series_agrees_with_one_shot_for_diagonal_coin() {
        let cfg = WalkConfig {
            coin_angle: 0.0,
            ..WalkConfig::with_steps(6)
        };
        let noise = NoiseModel::oun(0.5, 0.2).unwrap();
        let opts = SeriesOptions::default();
        let kinds = [
            WitnessKind::Variance,
            WitnessKind::Entropy,
            WitnessKind::MutualInformation,
            WitnessKind::TraceDistance,
        ];
        let step = witness_many(&cfg, &noise, EvolutionMode::Stepwise, &kinds, &opts).unwrap();
        let shot = witness_many(&cfg, &noise, EvolutionMode::OneShot, &kinds, &opts).unwrap();
        for (a, b) in step.iter().zip(&shot) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-8, "{}: {x} vs {y}", a.kind);
            }
        }
    }

    #[test]
    fn stepwise_rejects_negative_states() {
        let cfg = WalkConfig::with_steps(40);
        let noise = NoiseModel::rtn(0.9, 0.05).unwrap();
        let r = witness_series(
            &cfg,
            &noise,
            EvolutionMode::Stepwise,
            WitnessKind::MutualInformation,
            &SeriesOptions::default(),
        );
        assert!(matches!(
            r,
            Err(Error::NotPositive { .. }) | Err(Error::NonInvertibleMap { .. })
        ));
    }
}
