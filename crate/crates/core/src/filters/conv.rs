use num_complex::Complex64;
use rustfft::FftPlanner;

use super::Filter;

/// Convolutions whose shorter operand exceeds this length go through the FFT.
pub const FFT_THRESHOLD: usize = 32;

/// `f ⋆ g` on finite supports. The support of the result is the Minkowski sum
/// of the operand supports (before trimming of exact zeros).
pub fn convolve(f: &Filter, g: &Filter) -> Filter {
    let coeffs = full_convolution(f.coeffs(), g.coeffs());
    Filter::trimmed(f.offset() + g.offset(), coeffs)
}

pub fn convolve_direct(f: &Filter, g: &Filter) -> Filter {
    Filter::trimmed(f.offset() + g.offset(), direct(f.coeffs(), g.coeffs()))
}

pub fn convolve_fft(f: &Filter, g: &Filter) -> Filter {
    Filter::trimmed(f.offset() + g.offset(), via_fft(f.coeffs(), g.coeffs()))
}

/// Full linear convolution of two coefficient slices (length `n + m - 1`).
pub fn full_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if a.len().min(b.len()) <= FFT_THRESHOLD {
        direct(a, b)
    } else {
        via_fft(a, b)
    }
}

fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn via_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    // pack both real inputs into one complex transform
    let mut buf: Vec<Complex64> = (0..size)
        .map(|i| {
            Complex64::new(
                a.get(i).copied().unwrap_or(0.0),
                b.get(i).copied().unwrap_or(0.0),
            )
        })
        .collect();
    fwd.process(&mut buf);

    let mut prod = vec![Complex64::new(0.0, 0.0); size];
    for k in 0..size {
        let zk = buf[k];
        let zn = buf[(size - k) % size].conj();
        let fa = (zk + zn) * 0.5;
        let fb = (zk - zn) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / size as f64;
    prod.truncate(n);
    prod.into_iter().map(|z| z.re * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn f(offset: i64, c: &[f64]) -> Filter {
        Filter::new(offset, c.to_vec()).unwrap()
    }

    #[test]
    fn delta_is_unit() {
        let g = f(-3, &[1.0, -2.0, 0.5]);
        assert_eq!(convolve(&Filter::delta(0), &g), g);
        assert_eq!(convolve(&Filter::delta(2), &g), g.shift(2));
    }

    #[test]
    fn hand_examples() {
        assert_eq!(
            convolve(&f(0, &[1.0, 2.0]), &f(1, &[3.0, 4.0])),
            f(1, &[3.0, 10.0, 8.0])
        );
        // (1, -s) ⋆ (1, s, s²) = (1, 0, 0, -s³)
        let s = 0.7;
        let g = convolve(&f(0, &[1.0, -s]), &f(0, &[1.0, s, s * s]));
        assert_eq!(g.len(), 4);
        assert_abs_diff_eq!(g.get(0), 1.0);
        assert_abs_diff_eq!(g.get(1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(2), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.get(3), -s * s * s, epsilon = 1e-15);
    }

    #[test]
    fn fft_matches_direct_on_long_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &(n, m) in &[(33usize, 40usize), (100, 257), (1000, 64), (4096, 4096)] {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = direct(&a, &b);
            let q = via_fft(&a, &b);
            let worst = d.iter().zip(&q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-12, "n={n} m={m} worst={worst:e}");
        }
    }
}
