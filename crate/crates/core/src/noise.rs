//! Local dephasing noise acting on the coin: random telegraph noise (RTN),
//! modified Ornstein-Uhlenbeck noise (OUN) and power-law noise (PLN).
//!
//! Each model is fully described by a decoherence kernel `k(t)` that scales
//! the σ₃-basis coherences of the coin. Kernels are evaluated in closed form;
//! time is measured in walk steps.

use crate::error::{Error, Result};
use crate::qops::{c, identity, sigma_z, ComplexMatrix};

/// Kernels may exceed unit magnitude by at most this much from round-off.
pub const KERNEL_RANGE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RtnParams {
    /// System-environment coupling strength.
    pub a: f64,
    /// Fluctuation rate.
    pub gamma: f64,
}

impl RtnParams {
    pub fn new(a: f64, gamma: f64) -> Result<Self> {
        let p = Self { a, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::param("a", self.a, "must be finite and >= 0"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::param("gamma", self.gamma, "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OunParams {
    /// Effective relaxation rate Γ.
    pub relaxation: f64,
    /// Noise bandwidth γ (inverse correlation time).
    pub gamma: f64,
}

impl OunParams {
    pub fn new(relaxation: f64, gamma: f64) -> Result<Self> {
        let p = Self { relaxation, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_relaxation_and_bandwidth(self.relaxation, self.gamma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlnParams {
    pub relaxation: f64,
    pub gamma: f64,
    /// Power-law exponent; enters only the autocorrelation.
    pub alpha: f64,
}

impl PlnParams {
    pub fn new(relaxation: f64, gamma: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            relaxation,
            gamma,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_relaxation_and_bandwidth(self.relaxation, self.gamma)?;
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::param("alpha", self.alpha, "must be finite and > 1"));
        }
        Ok(())
    }
}

fn check_relaxation_and_bandwidth(relaxation: f64, gamma: f64) -> Result<()> {
    if !(relaxation.is_finite() && relaxation >= 0.0) {
        return Err(Error::param("Gamma", relaxation, "must be finite and >= 0"));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", gamma, "must be finite and > 0"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum NoiseModel {
    #[default]
    None,
    Rtn(RtnParams),
    Oun(OunParams),
    Pln(PlnParams),
}

impl NoiseModel {
    pub fn rtn(a: f64, gamma: f64) -> Result<Self> {
        RtnParams::new(a, gamma).map(NoiseModel::Rtn)
    }

    pub fn oun(relaxation: f64, gamma: f64) -> Result<Self> {
        OunParams::new(relaxation, gamma).map(NoiseModel::Oun)
    }

    pub fn pln(relaxation: f64, gamma: f64, alpha: f64) -> Result<Self> {
        PlnParams::new(relaxation, gamma, alpha).map(NoiseModel::Pln)
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseModel::None)
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::Rtn(_) => "rtn",
            NoiseModel::Oun(_) => "oun",
            NoiseModel::Pln(_) => "pln",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::None => Ok(()),
            NoiseModel::Rtn(p) => p.validate(),
            NoiseModel::Oun(p) => p.validate(),
            NoiseModel::Pln(p) => p.validate(),
        }
    }

    /// Decoherence kernel: Λ(t) for RTN, P(t) for OUN/PLN, 1 without noise.
    pub fn kernel(&self, t: f64) -> f64 {
        match self {
            NoiseModel::None => 1.0,
            NoiseModel::Rtn(p) => rtn_lambda(p, t),
            NoiseModel::Oun(p) => oun_p(p, t),
            NoiseModel::Pln(p) => pln_p(p, t),
        }
    }

    pub fn kraus_at(&self, t: f64) -> Result<[ComplexMatrix; 2]> {
        kraus_at(self, t)
    }

    pub fn autocorrelation(&self, t: f64, s: f64) -> Result<f64> {
        autocorrelation(self, t, s)
    }
}

/// RTN decoherence kernel
/// `Λ(t) = e^{-γt}[cos(ω̃t) + sin(ω̃t)/√((2a/γ)²−1)]`, `ω̃ = γ√((2a/γ)²−1)`.
///
/// Below threshold (`2a < γ`) the square root is imaginary and the
/// hyperbolic continuation is used; at `2a = γ` the value is the limit
/// `e^{-γt}(1 + γt)`. Both are covered continuously by a power series in
/// `x = (2a/γ)² − 1` near the boundary.
pub fn rtn_lambda(p: &RtnParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let u = p.gamma * t;
    let x = (2.0 * p.a / p.gamma).powi(2) - 1.0;
    let xu2 = x * u * u;
    if xu2.abs() < 0.25 {
        // cos(√x u) + sin(√x u)/√x = Σ_n (−x)^n [u^{2n}/(2n)! + u^{2n+1}/(2n+1)!]
        let mut sum = 0.0;
        let mut even = 1.0; // u^{2n}/(2n)!
        let mut odd = u; // u^{2n+1}/(2n+1)!
        let mut power = 1.0; // (−x)^n
        for n in 0..40 {
            let term = power * (even + odd);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            let k = 2.0 * n as f64;
            even *= u * u / ((k + 1.0) * (k + 2.0));
            odd *= u * u / ((k + 2.0) * (k + 3.0));
            power *= -x;
        }
        return (-u).exp() * sum;
    }
    let s = x.abs().sqrt();
    if x > 0.0 {
        (-u).exp() * ((s * u).cos() + (s * u).sin() / s)
    } else {
        // e^{-u}[cosh(su) + sinh(su)/s] without overflowing cosh/sinh.
        0.5 * ((1.0 + 1.0 / s) * (-(1.0 - s) * u).exp() + (1.0 - 1.0 / s) * (-(1.0 + s) * u).exp())
    }
}

/// OUN kernel `P(t) = exp[−(Γ/2)(t + (e^{−γt} − 1)/γ)]`.
pub fn oun_p(p: &OunParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let u = p.gamma * t;
    // g(u) = u + e^{−u} − 1, evaluated by series where it cancels.
    let g = if u < 0.1 {
        let mut term = u * u / 2.0;
        let mut sum = 0.0_f64;
        let mut n = 2.0;
        while term.abs() > 1e-20 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            n += 1.0;
            term *= -u / n;
        }
        sum
    } else {
        u + (-u).exp_m1()
    };
    (-0.5 * p.relaxation * g / p.gamma).exp()
}

/// PLN kernel `P(t) = exp(−t(tγ+2)Γγ / (2(tγ+1)²))`.
pub fn pln_p(p: &PlnParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let u = p.gamma * t;
    (-(t * (u + 2.0) * p.relaxation * p.gamma) / (2.0 * (u + 1.0).powi(2))).exp()
}

/// Kraus pair `K₁ = √((1+k)/2) I`, `K₂ = √((1−k)/2) σ₃` of the full
/// dephasing map at time `t`.
pub fn kraus_at(noise: &NoiseModel, t: f64) -> Result<[ComplexMatrix; 2]> {
    if noise.is_none() {
        return Err(Error::NoNoise {
            what: "Kraus operators",
        });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::param("t", t, "must be finite and >= 0"));
    }
    let k = noise.kernel(t);
    if !k.is_finite() || k.abs() > 1.0 + KERNEL_RANGE_TOL {
        return Err(Error::KernelOutOfRange { value: k });
    }
    Ok(dephasing_kraus(k.clamp(-1.0, 1.0)))
}

/// Kraus pair of a dephasing channel with coherence factor `k ∈ [−1, 1]`.
pub fn dephasing_kraus(k: f64) -> [ComplexMatrix; 2] {
    let w1 = ((1.0 + k) / 2.0).sqrt();
    let w2 = ((1.0 - k) / 2.0).sqrt();
    [
        identity(2).map(|z| z * c(w1, 0.0)),
        sigma_z().map(|z| z * c(w2, 0.0)),
    ]
}

/// Noise autocorrelation `⟨X(t)X(s)⟩`.
pub fn autocorrelation(noise: &NoiseModel, t: f64, s: f64) -> Result<f64> {
    let lag = (t - s).abs();
    match noise {
        NoiseModel::None => Err(Error::NoNoise {
            what: "autocorrelation",
        }),
        NoiseModel::Rtn(p) => Ok(p.a * p.a * (-p.gamma * lag).exp()),
        NoiseModel::Oun(p) => Ok(p.relaxation * p.gamma * (-p.gamma * lag).exp()),
        NoiseModel::Pln(p) => Ok(
            0.5 * (p.alpha - 1.0) * p.alpha * p.relaxation / (p.gamma * lag + 1.0).powf(p.alpha)
        ),
    }
}

/// Peak of the Lorentzian RTN power spectral density, `2a²/γ`.
pub fn rtn_psd_peak(p: &RtnParams) -> f64 {
    2.0 * p.a * p.a / p.gamma
}
