//! Bernoulli-Gaussian sources, linear-process observations and noise models.
//!
//! All randomness flows through [`stream_rng`]: a ChaCha8 generator keyed by a
//! 64-bit seed with a separate 64-bit stream id, so `(seed, stream)` pairs give
//! independent, reproducible sample streams.

mod io;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filters::{full_convolution, Filter};

pub use io::{read_window, read_window_bin, write_window_bin, write_window_json, BinHeader};

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds from `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Law `p·N(0,1) + (1−p)·δ₀` with its seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BgModel {
    p: f64,
    seed: u64,
}

impl BgModel {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid(format!("activity probability p={p} must lie in (0, 1]")));
        }
        Ok(Self { p, seed })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One Bernoulli-Gaussian draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // both draws always happen so stream position is data-independent
        let active = rng.random::<f64>() < self.p;
        let g: f64 = rng.sample(StandardNormal);
        if active {
            g
        } else {
            0.0
        }
    }
}

/// Contiguous samples of a process on `start .. start + len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr")]
pub struct Window {
    pub start: i64,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
struct WindowRepr {
    start: i64,
    values: Vec<f64>,
}

impl TryFrom<WindowRepr> for Window {
    type Error = Error;

    fn try_from(r: WindowRepr) -> Result<Self> {
        Window::new(r.start, r.values)
    }
}

impl Window {
    pub fn new(start: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("window must hold at least one sample"));
        }
        Ok(Self { start, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One past the last index.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn range(&self) -> Range<i64> {
        self.start..self.end()
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        if t < self.start || t >= self.end() {
            None
        } else {
            Some(self.values[(t - self.start) as usize])
        }
    }

    /// Sub-window on `range`, which must lie inside this window.
    pub fn slice(&self, range: Range<i64>) -> Result<Window> {
        if range.start < self.start || range.end > self.end() || range.start >= range.end {
            return Err(Error::InsufficientMargin(format!(
                "requested {range:?} but window covers {:?}",
                self.range()
            )));
        }
        let lo = (range.start - self.start) as usize;
        let hi = (range.end - self.start) as usize;
        Window::new(range.start, self.values[lo..hi].to_vec())
    }

    pub fn scaled(&self, c: f64) -> Window {
        Window {
            start: self.start,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

/// i.i.d. Bernoulli-Gaussian samples on `range`, drawn from stream `stream`
/// of the model's seed.
pub fn sample_bg(model: &BgModel, range: Range<i64>, stream: u64) -> Result<Window> {
    if range.start >= range.end {
        return Err(invalid("sampling range is empty"));
    }
    let mut rng = stream_rng(model.seed, stream);
    let n = (range.end - range.start) as usize;
    let values = (0..n).map(|_| model.draw(&mut rng)).collect();
    Window::new(range.start, values)
}

/// `a ⋆ x` restricted to the valid region: outputs whose convolution sums
/// involve only samples inside `x`.
pub fn linear_process(a: &Filter, x: &Window) -> Result<Window> {
    if x.len() < a.len() {
        return Err(Error::InsufficientMargin(format!(
            "input of {} samples cannot produce a complete sum with a filter of length {}",
            x.len(),
            a.len()
        )));
    }
    let full = full_convolution(a.coeffs(), &x.values);
    let lo = a.len() - 1;
    let hi = x.len();
    Window::new(x.start + a.end(), full[lo..hi].to_vec())
}

/// Window after adding moving-average Gaussian noise, with a flag telling
/// whether the shaping filter had to be rescaled to unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyWindow {
    pub window: Window,
    pub renormalized: bool,
}

/// `x + σ·(b ⋆ G)` on every index of `x`, with `G` i.i.d. standard normal
/// drawn on the extended range the convolution needs.
pub fn add_ma_gaussian(x: &Window, sigma: f64, b: &Filter, seed: u64, stream: u64) -> Result<NoisyWindow> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid("noise level sigma must be finite and non-negative"));
    }
    if b.is_zero() {
        return Err(Error::ZeroFilter);
    }
    let norm = b.norm_l2();
    let renormalized = (norm - 1.0).abs() > 1e-12;
    let b = if renormalized { b.scale(1.0 / norm) } else { b.clone() };
    if sigma == 0.0 {
        return Ok(NoisyWindow {
            window: x.clone(),
            renormalized,
        });
    }
    let g_range = (x.start - b.end())..(x.end() - b.offset());
    let mut rng = stream_rng(seed, stream);
    let g: Vec<f64> = g_range.clone().map(|_| rng.sample(StandardNormal)).collect();
    let g = Window::new(g_range.start, g)?;
    let shaped = linear_process(&b, &g)?;
    debug_assert_eq!(shaped.range(), x.range());
    let values = x
        .values
        .iter()
        .zip(&shaped.values)
        .map(|(v, z)| v + sigma * z)
        .collect();
    Ok(NoisyWindow {
        window: Window::new(x.start, values)?,
        renormalized,
    })
}

/// Adds the constant disturbance `ζ ≡ η`, the extreme point of the
/// `‖ζ‖∞ ≤ η` ball that the adversarial bound is evaluated at.
pub fn add_adversarial_offset(x: &Window, eta: f64) -> Result<Window> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(invalid("adversarial magnitude eta must be finite and non-negative"));
    }
    Window::new(x.start, x.values.iter().map(|v| v + eta).collect())
}

/// A source realization together with its blurred observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub x: Window,
    pub y: Window,
}

/// Samples `x` on exactly the range needed for `y = a ⋆ x` to be valid on
/// `y_range`, then convolves.
pub fn observe(a: &Filter, model: &BgModel, y_range: Range<i64>, stream: u64) -> Result<Observation> {
    let x = sample_bg(model, source_range(a, y_range.clone()), stream)?;
    let y = linear_process(a, &x)?;
    debug_assert_eq!(y.range(), y_range);
    Ok(Observation { x, y })
}

/// Source indices needed so that `a ⋆ x` is valid on `y_range`.
pub fn source_range(a: &Filter, y_range: Range<i64>) -> Range<i64> {
    (y_range.start - a.end())..(y_range.end - a.offset())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn f(offset: i64, c: &[f64]) -> Filter {
        Filter::new(offset, c.to_vec()).unwrap()
    }

    #[test]
    fn model_validation() {
        assert!(BgModel::new(0.0, 1).is_err());
        assert!(BgModel::new(1.2, 1).is_err());
        assert!(BgModel::new(f64::NAN, 1).is_err());
        assert!(BgModel::new(1.0, 1).is_ok());
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let m = BgModel::new(0.3, 99).unwrap();
        let a = sample_bg(&m, -10..50, 4).unwrap();
        let b = sample_bg(&m, -10..50, 4).unwrap();
        let c = sample_bg(&m, -10..50, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(sample_bg(&m, 3..3, 0).is_err());
    }

    #[test]
    fn dense_model_has_unit_variance() {
        let m = BgModel::new(1.0, 3).unwrap();
        let n = 100_000;
        let x = sample_bg(&m, 0..n, 0).unwrap();
        assert!(x.values.iter().all(|&v| v != 0.0));
        let mean = x.values.iter().sum::<f64>() / n as f64;
        let var = x.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // stderr of the sample variance of a normal is sqrt(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "var={var}");
    }

    #[test]
    fn activity_fraction_within_binomial_band() {
        let p = 0.1;
        let n = 100_000usize;
        let m = BgModel::new(p, 17).unwrap();
        let x = sample_bg(&m, 0..n as i64, 0).unwrap();
        let frac = x.values.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        assert!((frac - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "frac={frac}");
    }

    #[test]
    fn linear_process_examples() {
        let x = Window::new(-3, vec![0.5, -1.0, 2.0, 0.0, 3.0, 1.0, -2.0, 4.0]).unwrap();
        assert_eq!(linear_process(&Filter::delta(0), &x).unwrap(), x);

        let s = 0.4;
        let spike = Window::new(0, (0..10).map(|i| if i == 5 { 1.0 } else { 0.0 }).collect()).unwrap();
        let y = linear_process(&f(0, &[1.0, -s]), &spike).unwrap();
        let nz: Vec<(i64, f64)> = y
            .range()
            .filter_map(|t| y.get(t).filter(|v| *v != 0.0).map(|v| (t, v)))
            .collect();
        assert_eq!(nz, vec![(5, 1.0), (6, -s)]);

        // (1,2,3) at offset 0 over x: y_t = x_t + 2 x_{t-1} + 3 x_{t-2}, t = -1 ..= 4
        let y = linear_process(&f(0, &[1.0, 2.0, 3.0]), &x).unwrap();
        assert_eq!(y.start, -1);
        assert_eq!(y.values, vec![2.0 + 2.0 * -1.0 + 3.0 * 0.5, 0.0 + 4.0 - 3.0, 3.0 + 0.0 + 6.0, 1.0 + 6.0 + 0.0, -2.0 + 2.0 + 9.0, 4.0 - 4.0 + 3.0]);

        assert!(matches!(
            linear_process(&f(0, &[1.0; 9]), &x),
            Err(Error::InsufficientMargin(_))
        ));
    }

    #[test]
    fn linear_process_is_linear() {
        let m = BgModel::new(0.5, 5).unwrap();
        let x1 = sample_bg(&m, 0..64, 0).unwrap();
        let x2 = sample_bg(&m, 0..64, 1).unwrap();
        let a = f(-1, &[0.5, 1.0, -0.25]);
        let alpha = 2.0; // power of two keeps the identity exact
        let mix = Window::new(0, x1.values.iter().zip(&x2.values).map(|(u, v)| alpha * u + v).collect()).unwrap();
        let lhs = linear_process(&a, &mix).unwrap();
        let y1 = linear_process(&a, &x1).unwrap();
        let y2 = linear_process(&a, &x2).unwrap();
        for (i, v) in lhs.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, alpha * y1.values[i] + y2.values[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn gaussian_noise_examples() {
        let x = Window::new(-5, vec![1.0; 50]).unwrap();
        let quiet = add_ma_gaussian(&x, 0.0, &Filter::delta(0), 1, 0).unwrap();
        assert_eq!(quiet.window, x);

        let n = 100_000;
        let zero = Window::new(0, vec![0.0; n]).unwrap();
        let sigma = 0.7;
        let noisy = add_ma_gaussian(&zero, sigma, &Filter::delta(0), 2, 0).unwrap();
        assert!(!noisy.renormalized);
        let var = noisy.window.values.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let band = 3.0 * sigma * sigma * (2.0 / n as f64).sqrt();
        assert!((var - sigma * sigma).abs() < band, "var={var}");

        let again = add_ma_gaussian(&zero, sigma, &Filter::delta(0), 2, 0).unwrap();
        assert_eq!(again, noisy);

        let shaped = add_ma_gaussian(&x, 0.1, &f(0, &[1.0, 1.0]), 2, 0).unwrap();
        assert!(shaped.renormalized);
        assert_eq!(shaped.window.range(), x.range());
    }

    #[test]
    fn adversarial_offset_examples() {
        let x = Window::new(0, vec![0.0, -1.0, 2.5]).unwrap();
        assert_eq!(add_adversarial_offset(&x, 0.0).unwrap(), x);
        let y = add_adversarial_offset(&x, 0.3).unwrap();
        let worst = y.values.iter().zip(&x.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert_abs_diff_eq!(worst, 0.3, epsilon = 1e-15);
        assert!(add_adversarial_offset(&x, -1.0).is_err());
    }

    #[test]
    fn observe_covers_requested_range() {
        let a = Filter::geometric(0.5, 12).unwrap();
        let m = BgModel::new(0.2, 8).unwrap();
        let obs = observe(&a, &m, -20..21, 3).unwrap();
        assert_eq!(obs.y.range(), -20..21);
        assert_eq!(obs.x.range(), -31..21);
    }
}
