//! Separating slow backflow from fast oscillations in a witness series.
//!
//! A monotonically falling best-fit (MFBF) curve is subtracted from the
//! series; the residual's one-sided periodogram then shows each source of
//! revivals as its own peak. Frequencies are in cycles per walk step.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Minimum series length for a fit.
pub const MIN_FIT_SAMPLES: usize = 4;
/// Minimum series length for a spectrum.
pub const MIN_SPECTRUM_SAMPLES: usize = 8;
/// Iteration cap of the exponential fit.
pub const MAX_FIT_ITERATIONS: usize = 10_000;
/// Default peak threshold as a fraction of the largest power.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.05;

const SPACING_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: times.len(),
                right: values.len(),
            });
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; values.len()]);
        if weights.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: weights.len(),
            });
        }
        for i in 0..times.len() {
            if !times[i].is_finite() {
                return Err(Error::InvalidSeries {
                    index: i,
                    reason: "non-finite time",
                });
            }
            if i > 0 && times[i] <= times[i - 1] {
                return Err(Error::InvalidSeries {
                    index: i,
                    reason: "times not strictly increasing",
                });
            }
            if !values[i].is_finite() {
                return Err(Error::InvalidSeries {
                    index: i,
                    reason: "non-finite value",
                });
            }
            if !(weights[i].is_finite() && weights[i] > 0.0) {
                return Err(Error::InvalidSeries {
                    index: i,
                    reason: "weight must be positive",
                });
            }
        }
        Ok(Self {
            times,
            values,
            weights,
        })
    }

    /// Samples at `t = 0, 1, 2, …` with unit weights.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self::new(times, values, None)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Drops samples with `t < start`.
    pub fn tail_from(&self, start: f64) -> Result<TimeSeries> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.times[i] >= start)
            .collect();
        TimeSeries::new(
            keep.iter().map(|&i| self.times[i]).collect(),
            keep.iter().map(|&i| self.values[i]).collect(),
            Some(keep.iter().map(|&i| self.weights[i]).collect()),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum MfbfFamily {
    /// Weighted isotonic (non-increasing) regression.
    Isotonic,
    /// `a e^{−b t} + c` with `a, b ≥ 0`.
    #[default]
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialParams {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
}

impl ExponentialParams {
    pub fn eval(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            self.offset
        } else {
            self.amplitude * (-self.rate * t).exp() + self.offset
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneFit {
    pub family: MfbfFamily,
    pub fitted: Vec<f64>,
    pub exponential: Option<ExponentialParams>,
}

pub fn fit_mfbf(s: &TimeSeries, family: MfbfFamily) -> Result<MonotoneFit> {
    if s.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: s.len(),
        });
    }
    match family {
        MfbfFamily::Isotonic => Ok(MonotoneFit {
            family,
            fitted: isotonic_decreasing(s.values(), s.weights()),
            exponential: None,
        }),
        MfbfFamily::Exponential => {
            let params = fit_exponential(s)?;
            Ok(MonotoneFit {
                family,
                fitted: s.times().iter().map(|&t| params.eval(t)).collect(),
                exponential: Some(params),
            })
        }
    }
}

/// Pool-adjacent-violators for the weighted least-squares non-increasing
/// fit.
pub fn isotonic_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // Blocks of (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1);
        while let Some(&(m, pw, n)) = blocks.last() {
            if m >= cur.0 {
                break;
            }
            blocks.pop();
            let tw = pw + cur.1;
            cur = ((m * pw + cur.0 * cur.1) / tw, tw, n + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat(m).take(n))
        .collect()
}

/// Best `(a, c)` for a fixed rate with `a ≥ 0`, and the weighted SSE.
/// Times are measured from the first sample.
fn linear_part(t: &[f64], y: &[f64], w: &[f64], b: f64) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let constant = |c: f64| -> f64 { y.iter().zip(w).map(|(y, w)| w * (y - c).powi(2)).sum() };
    if b <= 0.0 {
        return (0.0, mean, constant(mean));
    }
    let e: Vec<f64> = t.iter().map(|&t| (-b * t).exp()).collect();
    let me = e.iter().zip(w).map(|(e, w)| e * w).sum::<f64>() / sw;
    let see: f64 = e.iter().zip(w).map(|(e, w)| w * (e - me).powi(2)).sum();
    let sey: f64 = e
        .iter()
        .zip(y)
        .zip(w)
        .map(|((e, y), w)| w * (e - me) * (y - mean))
        .sum();
    if see <= 0.0 || sey <= 0.0 {
        return (0.0, mean, constant(mean));
    }
    let a = sey / see;
    let c = mean - a * me;
    let sse = e
        .iter()
        .zip(y)
        .zip(w)
        .map(|((e, y), w)| w * (y - a * e - c).powi(2))
        .sum();
    (a, c, sse)
}

/// Nonlinear least squares for `a e^{−b t} + c` by variable projection:
/// the rate is searched on a log-spaced bracket around a log-linear initial
/// guess, then refined by golden-section search; `(a, c)` are solved exactly
/// for each trial rate.
fn fit_exponential(s: &TimeSeries) -> Result<ExponentialParams> {
    let t0 = s.times()[0];
    let t: Vec<f64> = s.times().iter().map(|&x| x - t0).collect();
    let (y, w) = (s.values(), s.weights());
    let sse = |b: f64| linear_part(&t, y, w, b).2;

    let b0 = initial_rate(&t, y, w);
    let mut grid: Vec<f64> = std::iter::once(0.0)
        .chain((-10..=10).map(|k| b0 * 2f64.powi(k)))
        .collect();
    let mut values: Vec<f64> = grid.iter().map(|&b| sse(b)).collect();
    let mut iterations = grid.len();
    let mut best = argmin(&values);
    // Extend upward while the best rate sits on the last grid point.
    while best == grid.len() - 1 {
        if iterations >= MAX_FIT_ITERATIONS || !grid[best].is_finite() {
            return Err(Error::FitFailure { iterations });
        }
        let next = grid[best] * 2.0;
        grid.push(next);
        values.push(sse(next));
        iterations += 1;
        best = argmin(&values);
    }

    let rate = if best == 0 {
        0.0
    } else {
        let (mut lo, mut hi) = (grid[best - 1], grid[best + 1]);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (sse(x1), sse(x2));
        loop {
            if hi - lo <= 1e-13 * hi.max(1e-300) {
                break;
            }
            if iterations >= MAX_FIT_ITERATIONS {
                return Err(Error::FitFailure { iterations });
            }
            iterations += 1;
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = sse(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = sse(x2);
            }
        }
        let mid = 0.5 * (lo + hi);
        if sse(mid) <= values[best] {
            mid
        } else {
            grid[best]
        }
    };
    let (a, c, _) = linear_part(&t, y, w, rate);
    if a == 0.0 {
        return Ok(ExponentialParams {
            amplitude: 0.0,
            rate: 0.0,
            offset: c,
        });
    }
    // Re-express in absolute time: a e^{−b (t − t₀)} = (a e^{b t₀}) e^{−b t}.
    Ok(ExponentialParams {
        amplitude: a * (rate * t0).exp(),
        rate,
        offset: c,
    })
}

fn argmin(values: &[f64]) -> usize {
    (0..values.len())
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .unwrap_or(0)
}

/// Slope of a weighted regression of `ln(y − min y)` on `t`, over the samples
/// strictly above the minimum.
fn initial_rate(t: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let span = (t[t.len() - 1] - t[0]).max(1.0);
    let pts: Vec<(f64, f64, f64)> = (0..y.len())
        .filter(|&i| y[i] - min > 1e-300)
        .map(|i| (t[i], (y[i] - min).ln(), w[i]))
        .collect();
    if pts.len() >= 2 {
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        let mt = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
        let ml = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
        let stt: f64 = pts.iter().map(|p| p.2 * (p.0 - mt).powi(2)).sum();
        let stl: f64 = pts.iter().map(|p| p.2 * (p.0 - mt) * (p.1 - ml)).sum();
        if stt > 0.0 {
            let b = -stl / stt;
            if b.is_finite() && b > 0.0 {
                return b;
            }
        }
    }
    1.0 / span
}

/// Residual `s − fit`.
pub fn detrend(s: &TimeSeries, fit: &MonotoneFit) -> Result<TimeSeries> {
    if fit.fitted.len() != s.len() {
        return Err(Error::LengthMismatch {
            left: s.len(),
            right: fit.fitted.len(),
        });
    }
    TimeSeries::new(
        s.times().to_vec(),
        s.values()
            .iter()
            .zip(&fit.fitted)
            .map(|(v, f)| v - f)
            .collect(),
        Some(s.weights().to_vec()),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// `k / N` for `k = 0..=N/2`.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct SpectrumOptions {
    /// Apply a Hann window before the transform.
    pub hann: bool,
}

pub fn power_spectrum(s: &TimeSeries) -> Result<Spectrum> {
    power_spectrum_with(s, SpectrumOptions::default())
}

/// One-sided periodogram of the mean-removed series.
///
/// `P₀ = |X₀|²/N`, `P_k = 2|X_k|²/N` for `0 < k < N/2`, and the Nyquist bin
/// (even `N`) is not doubled, so that `Σ P_k = Σ (x − x̄)²` without a window.
pub fn power_spectrum_with(s: &TimeSeries, options: SpectrumOptions) -> Result<Spectrum> {
    let n = s.len();
    if n < MIN_SPECTRUM_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SPECTRUM_SAMPLES,
            got: n,
        });
    }
    for i in 1..n {
        if ((s.times()[i] - s.times()[i - 1]) - 1.0).abs() > SPACING_TOL {
            return Err(Error::NonUniformSpacing { index: i });
        }
    }
    let mean = s.values().iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = s
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = if options.hann {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()
            } else {
                1.0
            };
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    let half = n / 2;
    let power = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / n as f64;
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    Ok(Spectrum {
        frequencies: (0..=half).map(|k| k as f64 / n as f64).collect(),
        power,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub frequency: f64,
    pub power: f64,
    /// Power as a fraction of the largest bin.
    pub relative_power: f64,
}

/// Interior bins strictly above both neighbours with power at least
/// `min_prominence` times the largest bin, strongest first. The zero
/// frequency bin is never reported.
pub fn find_peaks(sp: &Spectrum, min_prominence: f64) -> Vec<Peak> {
    let max = sp.power.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut peaks: Vec<Peak> = (1..sp.power.len().saturating_sub(1))
        .filter(|&k| sp.power[k] > sp.power[k - 1] && sp.power[k] > sp.power[k + 1])
        .filter(|&k| sp.power[k] >= min_prominence * max)
        .map(|k| Peak {
            frequency: sp.frequencies[k],
            power: sp.power[k],
            relative_power: sp.power[k] / max,
        })
        .collect();
    peaks.sort_by(|a, b| {
        b.power
            .total_cmp(&a.power)
            .then(a.frequency.total_cmp(&b.frequency))
    });
    peaks
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisambiguationOptions {
    pub family: MfbfFamily,
    pub min_prominence: f64,
    pub spectrum: SpectrumOptions,
}

impl Default for DisambiguationOptions {
    fn default() -> Self {
        Self {
            family: MfbfFamily::Exponential,
            min_prominence: DEFAULT_MIN_PROMINENCE,
            spectrum: SpectrumOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Disambiguation {
    pub fit: MonotoneFit,
    pub residual: TimeSeries,
    pub spectrum: Spectrum,
    pub peaks: Vec<Peak>,
    /// Power of the strongest peak over the second strongest.
    pub top_ratio: Option<f64>,
}

impl Disambiguation {
    /// Peaks with `lo ≤ f ≤ hi`, strongest first.
    pub fn peaks_in(&self, lo: f64, hi: f64) -> Vec<Peak> {
        self.peaks
            .iter()
            .copied()
            .filter(|p| p.frequency >= lo && p.frequency <= hi)
            .collect()
    }
}

/// `fit_mfbf → detrend → power_spectrum → find_peaks`.
pub fn disambiguate(s: &TimeSeries, options: &DisambiguationOptions) -> Result<Disambiguation> {
    let fit = fit_mfbf(s, options.family)?;
    let residual = detrend(s, &fit)?;
    let spectrum = power_spectrum_with(&residual, options.spectrum)?;
    let peaks = find_peaks(&spectrum, options.min_prominence);
    let top_ratio = match peaks.as_slice() {
        [a, b, ..] => Some(a.power / b.power),
        _ => None,
    };
    Ok(Disambiguation {
        fit,
        residual,
        spectrum,
        peaks,
        top_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(f: impl Fn(f64) -> f64, n: usize) -> TimeSeries {
        TimeSeries::from_values((0..n).map(|i| f(i as f64)).collect()).unwrap()
    }

    #[test]
    fn isotonic_examples() {
        let s = TimeSeries::from_values(vec![5.0, 4.0, 4.0, 1.0]).unwrap();
        assert_eq!(
            fit_mfbf(&s, MfbfFamily::Isotonic).unwrap().fitted,
            vec![5.0, 4.0, 4.0, 1.0]
        );
        let s = TimeSeries::from_values(vec![3.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(
            fit_mfbf(&s, MfbfFamily::Isotonic).unwrap().fitted,
            vec![3.0, 1.5, 1.5, 0.0]
        );
        assert_eq!(
            isotonic_decreasing(&[1.0, 3.0], &[3.0, 1.0]),
            vec![1.5, 1.5]
        );
        assert!(matches!(
            fit_mfbf(
                &TimeSeries::from_values(vec![1.0, 2.0, 3.0]).unwrap(),
                MfbfFamily::Isotonic
            ),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn exponential_recovers_rate() {
        let s = series(|t| (-0.1 * t).exp(), 100);
        let fit = fit_mfbf(&s, MfbfFamily::Exponential).unwrap();
        let p = fit.exponential.unwrap();
        assert!((p.rate - 0.1).abs() < 1e-6, "rate {}", p.rate);
        assert!((p.amplitude - 1.0).abs() < 1e-6);
        assert!(p.offset.abs() < 1e-6);

        let s = TimeSeries::new(
            (0..50).map(|i| 10.0 + i as f64).collect(),
            (0..50)
                .map(|i| 2.0 * (-0.05 * (10.0 + i as f64)).exp() + 0.3)
                .collect(),
            None,
        )
        .unwrap();
        let p = fit_mfbf(&s, MfbfFamily::Exponential)
            .unwrap()
            .exponential
            .unwrap();
        assert!(
            (p.rate - 0.05).abs() < 1e-6
                && (p.amplitude - 2.0).abs() < 1e-5
                && (p.offset - 0.3).abs() < 1e-6
        );
    }

    #[test]
    fn exponential_fit_is_monotone_for_rising_data() {
        let s = series(|t| 0.01 * t, 20);
        let fit = fit_mfbf(&s, MfbfFamily::Exponential).unwrap();
        assert!(fit.fitted.windows(2).all(|w| w[1] <= w[0]));
        let p = fit.exponential.unwrap();
        assert_eq!(p.amplitude, 0.0);
    }

    #[test]
    fn detrend_examples() {
        let s = TimeSeries::from_values(vec![4.0, 3.0, 1.0, 0.5]).unwrap();
        let fit = fit_mfbf(&s, MfbfFamily::Isotonic).unwrap();
        assert!(detrend(&s, &fit)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let s = TimeSeries::from_values(vec![2.0; 6]).unwrap();
        let fit = fit_mfbf(&s, MfbfFamily::Isotonic).unwrap();
        assert!(detrend(&s, &fit)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));

        let s = series(
            |t| (-0.05 * t).exp() + 0.1 * (2.0 * PI * 0.25 * t).cos(),
            100,
        );
        let fit = fit_mfbf(&s, MfbfFamily::Exponential).unwrap();
        let r = detrend(&s, &fit).unwrap();
        let dev = r
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - 0.1 * (2.0 * PI * 0.25 * i as f64).cos()).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 0.02, "max deviation {dev}");
        assert!(matches!(
            detrend(&TimeSeries::from_values(vec![1.0; 5]).unwrap(), &fit),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn spectrum_examples() {
        let sp = power_spectrum(&series(|_| 3.0, 16)).unwrap();
        assert_eq!(sp.frequencies.len(), 9);
        assert!(sp.power.iter().all(|&p| p.abs() < 1e-20));

        let sp = power_spectrum(&series(|t| (2.0 * PI * 0.25 * t).cos(), 64)).unwrap();
        let total: f64 = sp.power.iter().sum();
        assert!(sp.power[16] >= 0.99 * total);
        assert_eq!(find_peaks(&sp, 0.05).len(), 1);
        assert_eq!(find_peaks(&sp, 0.05)[0].frequency, 0.25);

        let sp = power_spectrum(&series(
            |t| (2.0 * PI * 0.25 * t).cos() + 0.8 * (2.0 * PI * 0.03125 * t).cos(),
            64,
        ))
        .unwrap();
        let peaks = find_peaks(&sp, 0.05);
        let freqs: Vec<f64> = peaks.iter().map(|p| p.frequency).collect();
        assert_eq!(freqs, vec![0.25, 0.03125]);

        let s = TimeSeries::new(
            vec![0.0, 1.0, 2.0, 3.5, 4.5, 5.5, 6.5, 7.5],
            vec![0.0; 8],
            None,
        )
        .unwrap();
        assert!(matches!(
            power_spectrum(&s),
            Err(Error::NonUniformSpacing { index: 3 })
        ));
    }

    #[test]
    fn peaks_of_monotone_spectrum() {
        let sp = Spectrum {
            frequencies: (0..6).map(|k| k as f64 / 10.0).collect(),
            power: vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.5],
        };
        assert!(find_peaks(&sp, 0.05).is_empty());
    }

    #[test]
    fn disambiguation_reports_ratio() {
        let s = series(
            |t| {
                (-0.03 * t).exp()
                    + 0.05 * (2.0 * PI * 0.25 * t).cos()
                    + 0.03 * (2.0 * PI * 0.04 * t).cos()
            },
            100,
        );
        let report = disambiguate(&s, &DisambiguationOptions::default()).unwrap();
        assert!(report.peaks.len() >= 2);
        let r = report.top_ratio.unwrap();
        assert!(r >= 1.0);
        assert_eq!(report.peaks_in(0.2, 0.3).len(), 1);
    }

    #[test]
    fn series_validation() {
        assert!(TimeSeries::new(vec![0.0, 0.0], vec![1.0, 1.0], None).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0, f64::NAN], None).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0, 1.0], Some(vec![1.0, 0.0])).is_err());
        assert!(TimeSeries::new(vec![0.0], vec![1.0, 1.0], None).is_err());
    }
}
