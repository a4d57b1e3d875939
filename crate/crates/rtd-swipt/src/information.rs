//! Differential entropy, the entropy-power-inequality rate bound and exact
//! mutual information of the per-symbol channel y = x + n with Gaussian n.
//!
//! Mutual information is computed in output space: y depends on the transmit
//! symbol only through x, so I(s; y) = I(x; y) = h_y - h_n and the
//! non-monotone transfer function never has to be integrated twice.

use thiserror::Error;

use crate::distributions::GridPdf;
use crate::special_math::{gaussian_entropy, integrate_samples, simpson_weight, TWO_PI_E};

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("noise variance must be positive, got {0}")]
    BadNoise(f64),
    #[error("pdf grid step {step:.3e} exceeds sigma/4 = {max_step:.3e}: refine the pdf grid")]
    Resolution { step: f64, max_step: f64 },
}

/// Output noise model: zero-mean AWGN with variance sigma2 (watts).
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    sigma2: f64,
}

impl NoiseSpec {
    pub fn new(sigma2: f64) -> Result<Self, InfoError> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(InfoError::BadNoise(sigma2));
        }
        Ok(Self { sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Differential entropy of the noise, 0.5 ln(2 pi e sigma^2).
    pub fn entropy(&self) -> f64 {
        gaussian_entropy(self.sigma2).expect("validated on construction")
    }
}

/// Differential entropy -int f ln f of a grid density, with 0 ln 0 := 0.
pub fn differential_entropy(pdf: &GridPdf) -> f64 {
    let vals: Vec<f64> = pdf
        .density()
        .iter()
        .map(|&d| if d > 0.0 { -d * d.ln() } else { 0.0 })
        .collect();
    integrate_samples(&vals, pdf.step())
}

/// Entropy-power-inequality rate bound:
/// J = 0.5 ln(1 + e^{2 h_x} / (2 pi e sigma^2)) nats.
pub fn epi_rate(h_x: f64, noise: &NoiseSpec) -> f64 {
    0.5 * (2.0 * h_x - (TWO_PI_E * noise.sigma2).ln()).exp().ln_1p()
}

/// Exact mutual information I(x; y) for y = x + n. The output density
/// f_y(y) = int f_x(x) N(y - x; 0, sigma^2) dx is evaluated on a y-grid
/// spanning [lo - 8 sigma, hi + 8 sigma]; then I = h_y - h_n. The pdf grid
/// must resolve the noise kernel (step <= sigma/4) or a resolution error
/// asks the caller to refine.
pub fn mutual_information(fx: &GridPdf, noise: &NoiseSpec) -> Result<f64, InfoError> {
    let sigma = noise.sigma();
    let dx = fx.step();
    if dx > sigma / 4.0 {
        return Err(InfoError::Resolution { step: dx, max_step: sigma / 4.0 });
    }

    let m = fx.node_count();
    // Simpson-weighted density: sum_i wfx[i] * kernel(y - x_i) is the
    // quadrature of the convolution integral.
    let wfx: Vec<f64> = (0..m).map(|i| simpson_weight(i, m, dx) * fx.density()[i]).collect();

    let pad_steps = (8.0 * sigma / dx).ceil() as usize;
    let f_y: Vec<f64>;
    let dy: f64;
    if pad_steps <= 4 * m {
        // y-grid on the same lattice as x: the kernel depends only on the
        // index difference, so it is evaluated once.
        dy = dx;
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let kernel: Vec<f64> = (0..=pad_steps)
            .map(|d| {
                let t = d as f64 * dx / sigma;
                norm * (-0.5 * t * t).exp()
            })
            .collect();
        let n_y = m + 2 * pad_steps; // odd: m is odd
        f_y = (0..n_y)
            .map(|j| {
                let lo_i = j.saturating_sub(2 * pad_steps);
                let hi_i = j.min(m - 1);
                let mut acc = 0.0;
                for i in lo_i..=hi_i {
                    let d = (j as isize - pad_steps as isize - i as isize).unsigned_abs();
                    if d <= pad_steps {
                        acc += wfx[i] * kernel[d];
                    }
                }
                acc
            })
            .collect();
    } else {
        // support much narrower than the noise: per-point quadrature on a
        // sigma/16 output grid is cheaper than the shared lattice
        let lo_y = fx.lo() - 8.0 * sigma;
        let hi_y = fx.hi() + 8.0 * sigma;
        let mut n_y = ((hi_y - lo_y) / (sigma / 16.0)).ceil() as usize + 1;
        n_y = n_y.max(201) | 1;
        dy = (hi_y - lo_y) / (n_y - 1) as f64;
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        f_y = (0..n_y)
            .map(|j| {
                let y = lo_y + j as f64 * dy;
                let mut acc = 0.0;
                for i in 0..m {
                    let t = (y - fx.node(i)) / sigma;
                    if t.abs() <= 8.5 {
                        acc += wfx[i] * norm * (-0.5 * t * t).exp();
                    }
                }
                acc
            })
            .collect();
    }

    let ent_terms: Vec<f64> =
        f_y.iter().map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 }).collect();
    let h_y = integrate_samples(&ent_terms, dy);
    let info = h_y - noise.entropy();
    if info < 0.0 && info > -1e-9 {
        Ok(0.0)
    } else {
        Ok(info)
    }
}
