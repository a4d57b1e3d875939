//! Link budget and small-scale fading. The channel is `h = h_tilde * h_hat`
//! with a deterministic free-space large-scale gain and a unit-power Rician
//! small-scale coefficient; only |h| matters downstream.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("link budget field {field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
}

/// Free-space link parameters plus the Rician factor of the small-scale
/// fading. Gains are linear (not dB).
#[derive(Debug, Clone, Copy)]
pub struct LinkBudget {
    pub g_tx: f64,
    pub g_rx: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Distance in meters.
    pub d: f64,
    /// Propagation speed in m/s.
    pub c_l: f64,
    /// Rician factor K (line-of-sight to scattered power ratio).
    pub rician_k: f64,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (field, value) in [
            ("g_tx", self.g_tx),
            ("g_rx", self.g_rx),
            ("f_c", self.f_c),
            ("d", self.d),
            ("c_l", self.c_l),
            ("rician_k", self.rician_k),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ChannelError::NonPositive { field, value });
            }
        }
        Ok(())
    }

    /// Deterministic amplitude gain `c_l / (4 pi d f_c) * sqrt(g_tx g_rx)`.
    pub fn large_scale_gain(&self) -> f64 {
        self.c_l / (4.0 * std::f64::consts::PI * self.d * self.f_c) * (self.g_tx * self.g_rx).sqrt()
    }
}

/// Seeded generator for one Monte Carlo realization. Streams are derived
/// from the master seed by realization index, so parallel draws stay
/// deterministic regardless of scheduling.
pub fn realization_rng(master_seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(realization);
    rng
}

/// Magnitude of a unit-power Rician fading coefficient:
/// `h_hat = sqrt(K/(K+1)) + w` with `w` circularly-symmetric complex normal
/// of variance `1/(K+1)`, so E{|h_hat|^2} = 1.
pub fn sample_small_scale<R: Rng>(rician_k: f64, rng: &mut R) -> f64 {
    assert!(rician_k >= 0.0, "Rician factor must be non-negative");
    let los = (rician_k / (rician_k + 1.0)).sqrt();
    let scatter_std = (0.5 / (rician_k + 1.0)).sqrt(); // per real dimension
    let re: f64 = rng.sample::<f64, _>(StandardNormal) * scatter_std;
    let im: f64 = rng.sample::<f64, _>(StandardNormal) * scatter_std;
    ((los + re) * (los + re) + im * im).sqrt()
}

/// Largest transmit amplitude respecting both the PA bound and breakdown
/// avoidance: `min(a, sqrt(rho_max_w)/h_mag)`.
pub fn effective_amplitude_cap(a: f64, h_mag: f64, rho_max_w: f64) -> f64 {
    assert!(a > 0.0 && h_mag > 0.0 && rho_max_w > 0.0);
    a.min(rho_max_w.sqrt() / h_mag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_budget() -> LinkBudget {
        LinkBudget {
            g_tx: 100.0,
            g_rx: 100.0,
            f_c: 1e11,
            d: 0.3,
            c_l: 2.998e8,
            rician_k: 1.0,
        }
    }

    #[test]
    fn large_scale_gain_reference_value() {
        let lb = reference_budget();
        let h = lb.large_scale_gain();
        // direct formula evaluation: 0.0795244198982504
        assert!((h - 0.07952441989825037).abs() < 1e-15);
        assert!((h - 0.0795).abs() < 1e-4);
    }

    #[test]
    fn gain_scales_inversely_with_distance() {
        let lb = reference_budget();
        let double = LinkBudget { d: 0.6, ..lb };
        assert!((double.large_scale_gain() - lb.large_scale_gain() / 2.0).abs() < 1e-18);
        let unit_gains = LinkBudget { g_tx: 1.0, g_rx: 1.0, ..lb };
        let free_space = lb.c_l / (4.0 * std::f64::consts::PI * lb.d * lb.f_c);
        assert!((unit_gains.large_scale_gain() - free_space).abs() < 1e-18);
    }

    #[test]
    fn validate_rejects_nonpositive_fields() {
        let mut lb = reference_budget();
        lb.d = 0.0;
        assert!(lb.validate().is_err());
    }

    #[test]
    fn rician_deterministic_limit() {
        let mut rng = realization_rng(7, 0);
        for _ in 0..100 {
            let h = sample_small_scale(1e12, &mut rng);
            assert!((h - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rician_unit_power_normalization() {
        // K = 1: sample mean of |h|^2 over 1e6 draws within [0.995, 1.005]
        let mut rng = realization_rng(42, 0);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let h = sample_small_scale(1.0, &mut rng);
                h * h
            })
            .sum::<f64>()
            / n as f64;
        assert!((0.995..=1.005).contains(&mean), "mean |h|^2 = {mean}");
    }

    #[test]
    fn rayleigh_case_unit_power() {
        let mut rng = realization_rng(43, 0);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let h = sample_small_scale(0.0, &mut rng);
                h * h
            })
            .sum::<f64>()
            / n as f64;
        assert!((0.99..=1.01).contains(&mean), "mean |h|^2 = {mean}");
    }

    #[test]
    fn seeded_streams_reproduce_and_differ() {
        let draws = |seed, stream| {
            let mut rng = realization_rng(seed, stream);
            (0..8).map(|_| sample_small_scale(1.0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draws(1, 0), draws(1, 0));
        assert_ne!(draws(1, 0), draws(1, 1));
        assert_ne!(draws(1, 0), draws(2, 0));
    }

    #[test]
    fn amplitude_cap_regimes() {
        // PA-limited
        assert_eq!(effective_amplitude_cap(0.01, 0.08, 2.4e-3), 0.01);
        // breakdown-limited
        let cap = effective_amplitude_cap(100.0, 0.08, 2.4e-3);
        assert!((cap - (2.4e-3f64).sqrt() / 0.08).abs() < 1e-15);
        // boundary: both equal
        let b = (2.4e-3f64).sqrt() / 0.08;
        assert_eq!(effective_amplitude_cap(b, 0.08, 2.4e-3), b);
        // received power never exceeds rho_max after capping
        let h = 0.73;
        let abar = effective_amplitude_cap(5.0, h, 2.4e-3);
        assert!((h * abar).powi(2) <= 2.4e-3 * (1.0 + 1e-15));
    }
}
