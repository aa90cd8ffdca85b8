//! Discrete-time quantum walk on a truncated line.
//!
//! One step is `W = S (C ⊗ I)`: the coin rotation `C(θ)` followed by a
//! conditional shift moving `|0⟩` one site left and `|1⟩` one site right.
//! A walk of `T` steps is simulated on `2(T+1)+1` sites centred on the start
//! position, so the walker never touches the boundary; every step checks this.

use crate::divisibility::{apply_coin_local, intermediate_kraus, kernel_ratio};
use crate::error::{Error, Result};
use crate::noise::{kraus_at, NoiseModel};
use crate::qops::{
    c, ComplexMatrix, ComplexVector, DensityMatrix, FactoredState, PureState, Split, C64, ZERO,
};

/// Largest amplitude tolerated on an edge site.
pub const EDGE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkConfig {
    /// Number of steps `T`.
    pub steps: usize,
    /// Coin angle `θ` in radians; `π/4` gives the Hadamard coin.
    pub coin_angle: f64,
    /// Initial coin state `cos δ |0⟩ + e^{−iη} sin δ |1⟩`.
    pub delta: f64,
    pub eta: f64,
    pub initial_position: i64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            coin_angle: std::f64::consts::FRAC_PI_4,
            delta: std::f64::consts::FRAC_PI_4,
            eta: 0.0,
            initial_position: 0,
        }
    }
}

impl WalkConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn with_initial(mut self, delta: f64, eta: f64) -> Self {
        self.delta = delta;
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("coin_angle", self.coin_angle),
            ("delta", self.delta),
            ("eta", self.eta),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, v, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::for_walk(self.steps, self.initial_position)
    }

    pub fn split(&self) -> Split {
        Split::walker(self.lattice().sites)
    }

    pub fn initial_state(&self) -> PureState {
        initial_state(self)
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps {
            Err(Error::StepOutOfRange {
                step: t,
                steps: self.steps,
            })
        } else {
            Ok(())
        }
    }
}

/// Finite window of lattice sites; index 0 is position `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub origin: i64,
    pub sites: usize,
}

impl Lattice {
    pub fn for_walk(steps: usize, center: i64) -> Self {
        let half = steps as i64 + 1;
        Self {
            origin: center - half,
            sites: 2 * (steps + 1) + 1,
        }
    }

    pub fn index_of(&self, x: i64) -> Option<usize> {
        let i = x - self.origin;
        (0..self.sites as i64).contains(&i).then_some(i as usize)
    }

    pub fn position_of(&self, index: usize) -> i64 {
        self.origin + index as i64
    }

    pub fn positions(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.sites).map(|i| self.position_of(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum EvolutionMode {
    Noiseless,
    /// Noise map for the whole interval `[0, t]` applied once after `t` steps.
    #[default]
    OneShot,
    /// Intermediate map `E(s, s−1)` applied after every step.
    Stepwise,
}

/// `[[cos θ, sin θ], [sin θ, −cos θ]]`.
pub fn coin_operator(theta: f64) -> ComplexMatrix {
    let (s, co) = theta.sin_cos();
    ComplexMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(s, 0.0), c(s, 0.0), c(-co, 0.0)])
}

/// Coin amplitudes `(cos δ, e^{−iη} sin δ)`.
pub fn coin_state(delta: f64, eta: f64) -> [C64; 2] {
    [c(delta.cos(), 0.0), C64::from_polar(delta.sin(), -eta)]
}

/// Conditional shift on `2 × sites` amplitudes. Amplitude that would leave
/// the window is dropped, so the operator is unitary only on states with no
/// weight on the two edge sites.
pub fn shift_operator(sites: usize) -> Result<ComplexMatrix> {
    check_sites(sites)?;
    let n = 2 * sites;
    let mut s = ComplexMatrix::zeros(n, n);
    for x in 1..sites {
        s[(x - 1, x)] = c(1.0, 0.0);
    }
    for x in 0..sites - 1 {
        s[(sites + x + 1, sites + x)] = c(1.0, 0.0);
    }
    Ok(s)
}

/// Dense `W = S (C ⊗ I)`.
pub fn walk_operator(theta: f64, sites: usize) -> Result<ComplexMatrix> {
    let coin = coin_operator(theta).kronecker(&ComplexMatrix::identity(sites, sites));
    Ok(shift_operator(sites)? * coin)
}

fn check_sites(sites: usize) -> Result<()> {
    if sites < 3 || sites % 2 == 0 {
        return Err(Error::param(
            "lattice size",
            sites as f64,
            "must be odd and >= 3",
        ));
    }
    Ok(())
}

pub fn initial_state(cfg: &WalkConfig) -> PureState {
    let lattice = cfg.lattice();
    let [a0, a1] = coin_state(cfg.delta, cfg.eta);
    let x0 = lattice
        .index_of(cfg.initial_position)
        .expect("lattice is centred on the initial position");
    let mut v = ComplexVector::zeros(2 * lattice.sites);
    v[x0] = a0;
    v[lattice.sites + x0] = a1;
    PureState::from_raw(v)
}

/// Applies one walk step to a coin ⊗ position vector in place.
fn step_in_place(coin: &[[f64; 2]; 2], v: &mut [C64], sites: usize) {
    let (up, down) = v.split_at_mut(sites);
    for x in 0..sites {
        let (a, b) = (up[x], down[x]);
        up[x] = a * coin[0][0] + b * coin[0][1];
        down[x] = a * coin[1][0] + b * coin[1][1];
    }
    up.copy_within(1.., 0);
    up[sites - 1] = ZERO;
    down.copy_within(..sites - 1, 1);
    down[0] = ZERO;
}

fn coin_entries(theta: f64) -> [[f64; 2]; 2] {
    let (s, co) = theta.sin_cos();
    [[co, s], [s, -co]]
}

fn edge_amplitude(v: &[C64], sites: usize) -> f64 {
    [v[0], v[sites - 1], v[sites], v[2 * sites - 1]]
        .iter()
        .fold(0.0_f64, |m, z| m.max(z.norm()))
}

fn guard(v: &[C64], sites: usize, step: usize) -> Result<()> {
    let amplitude = edge_amplitude(v, sites);
    if amplitude >= EDGE_TOL {
        Err(Error::EdgeAmplitude { step, amplitude })
    } else {
        Ok(())
    }
}

/// `W^t |ψ(0)⟩`.
pub fn evolve_noiseless(cfg: &WalkConfig, t: usize) -> Result<PureState> {
    cfg.check_step(t)?;
    let sites = cfg.lattice().sites;
    let coin = coin_entries(cfg.coin_angle);
    let mut v = initial_state(cfg).into_amplitudes();
    for s in 1..=t {
        step_in_place(&coin, v.as_mut_slice(), sites);
        guard(v.as_slice(), sites, s)?;
    }
    Ok(PureState::from_raw(v))
}

/// Noiseless states for `t = 0..=T`.
pub fn noiseless_trajectory(cfg: &WalkConfig) -> Result<Vec<PureState>> {
    let sites = cfg.lattice().sites;
    let coin = coin_entries(cfg.coin_angle);
    let mut v = initial_state(cfg).into_amplitudes();
    let mut out = Vec::with_capacity(cfg.steps + 1);
    out.push(PureState::from_raw(v.clone()));
    for s in 1..=cfg.steps {
        step_in_place(&coin, v.as_mut_slice(), sites);
        guard(v.as_slice(), sites, s)?;
        out.push(PureState::from_raw(v.clone()));
    }
    Ok(out)
}

/// Applies the full dephasing map at time `t` to the coin of a pure walker
/// state, returning the (rank ≤ 2) result in factored form.
pub fn dephase_pure(
    psi: &PureState,
    noise: &NoiseModel,
    t: f64,
    split: Split,
) -> Result<FactoredState> {
    split.check(psi.dim())?;
    if noise.is_none() {
        return Ok(FactoredState::from_factor(
            ComplexMatrix::from_column_slice(psi.dim(), 1, psi.amplitudes().as_slice()),
        ));
    }
    let kraus = kraus_at(noise, t)?;
    let dp = split.position;
    let cols: Vec<ComplexVector> = kraus
        .iter()
        .map(|k| {
            let a = psi.amplitudes();
            ComplexVector::from_fn(split.total(), |i, _| {
                let (row, x) = (i / dp, i % dp);
                (0..split.coin)
                    .map(|col| k[(row, col)] * a[col * dp + x])
                    .sum()
            })
        })
        .collect();
    Ok(FactoredState::from_factor(ComplexMatrix::from_columns(
        &cols,
    )))
}

/// One-shot evolution in factored form.
pub fn evolve_one_shot_factored(
    cfg: &WalkConfig,
    noise: &NoiseModel,
    t: usize,
) -> Result<FactoredState> {
    let psi = evolve_noiseless(cfg, t)?;
    dephase_pure(&psi, noise, t as f64, cfg.split())
}

/// `Σ_j (K_j(t) ⊗ I) W^t ρ(0) W^{t†} (K_j(t) ⊗ I)†`.
pub fn evolve_one_shot(cfg: &WalkConfig, noise: &NoiseModel, t: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_raw(
        evolve_one_shot_factored(cfg, noise, t)?
            .to_density()
            .into_matrix(),
    ))
}

/// `W ρ W†` using the vector step on columns.
fn conjugate_by_walk(coin: &[[f64; 2]; 2], rho: &ComplexMatrix, sites: usize) -> ComplexMatrix {
    let mut a = rho.clone();
    for mut col in a.column_iter_mut() {
        step_in_place(coin, col.as_mut_slice(), sites);
    }
    // W ρ W† = (W (W ρ)†)†
    let mut b = a.adjoint();
    for mut col in b.column_iter_mut() {
        step_in_place(coin, col.as_mut_slice(), sites);
    }
    b.adjoint()
}

/// Stepwise evolution `ρ(s) = E(s, s−1)[W ρ(s−1) W†]` for `s = 1..t`.
///
/// Each intermediate map is the signed Kraus realisation of the kernel
/// ratio `k(s)/k(s−1)`, so states after a non-CP interval need not be
/// positive.
pub fn evolve_stepwise(cfg: &WalkConfig, noise: &NoiseModel, t: usize) -> Result<DensityMatrix> {
    cfg.check_step(t)?;
    let mut out = None;
    stepwise_visit(cfg, noise, t, |s, rho| {
        if s == t {
            out = Some(rho.clone());
        }
        Ok(())
    })?;
    Ok(DensityMatrix::from_raw(
        out.expect("step t is always visited"),
    ))
}

/// Stepwise states for `t = 0..=T`.
pub fn stepwise_trajectory(cfg: &WalkConfig, noise: &NoiseModel) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(cfg.steps + 1);
    stepwise_visit(cfg, noise, cfg.steps, |_, rho| {
        out.push(DensityMatrix::from_raw(rho.clone()));
        Ok(())
    })?;
    Ok(out)
}

pub fn stepwise_visit<F>(cfg: &WalkConfig, noise: &NoiseModel, t: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &ComplexMatrix) -> Result<()>,
{
    cfg.check_step(t)?;
    let split = cfg.split();
    let sites = split.position;
    let coin = coin_entries(cfg.coin_angle);
    let mut rho = initial_state(cfg).to_density().into_matrix();
    visit(0, &rho)?;
    for s in 1..=t {
        rho = conjugate_by_walk(&coin, &rho, sites);
        let edge = (0..2 * sites)
            .filter(|i| i % sites == 0 || i % sites == sites - 1)
            .fold(0.0_f64, |m, i| m.max(rho[(i, i)].norm().sqrt()));
        if edge >= EDGE_TOL {
            return Err(Error::EdgeAmplitude {
                step: s,
                amplitude: edge,
            });
        }
        if !noise.is_none() {
            let ratio = kernel_ratio(noise, (s - 1) as f64, s as f64)?;
            let next = noise.kernel(s as f64);
            if next.abs() <= crate::divisibility::INVERTIBILITY_TOL {
                return Err(Error::NonInvertibleMap {
                    time: s as f64,
                    kernel: next,
                });
            }
            rho = apply_coin_local(&rho, &intermediate_kraus(&ratio), split)?;
        }
        visit(s, &rho)?;
    }
    Ok(())
}

/// Walker state at step `t` under the chosen mode.
pub fn evolve(
    cfg: &WalkConfig,
    noise: &NoiseModel,
    mode: EvolutionMode,
    t: usize,
) -> Result<DensityMatrix> {
    match mode {
        EvolutionMode::Noiseless => Ok(evolve_noiseless(cfg, t)?.to_density()),
        EvolutionMode::OneShot => evolve_one_shot(cfg, noise, t),
        EvolutionMode::Stepwise => evolve_stepwise(cfg, noise, t),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub positions: Vec<i64>,
    pub probabilities: Vec<f64>,
}

impl Distribution {
    pub fn probability_at(&self, x: i64) -> f64 {
        self.positions
            .iter()
            .position(|&p| p == x)
            .map_or(0.0, |i| self.probabilities[i])
    }
}

/// `p(x) = Σ_c ⟨c, x|ρ|c, x⟩` over the lattice window.
pub fn position_distribution(rho: &DensityMatrix, lattice: &Lattice) -> Result<Distribution> {
    let split = Split::walker(lattice.sites);
    split.check(rho.dim())?;
    let m = rho.matrix();
    let probabilities = (0..lattice.sites)
        .map(|x| m[(x, x)].re + m[(lattice.sites + x, lattice.sites + x)].re)
        .collect();
    Ok(Distribution {
        positions: lattice.positions().collect(),
        probabilities,
    })
}

/// Position distribution of a pure walker state.
pub fn pure_position_distribution(psi: &PureState, lattice: &Lattice) -> Result<Distribution> {
    Split::walker(lattice.sites).check(psi.dim())?;
    let a = psi.amplitudes();
    let probabilities = (0..lattice.sites)
        .map(|x| a[x].norm_sqr() + a[lattice.sites + x].norm_sqr())
        .collect();
    Ok(Distribution {
        positions: lattice.positions().collect(),
        probabilities,
    })
}
