//! The solver layer: feasibility of the required harvested power, regime
//! dispatch between the closed-form uniform-output solution and the
//! maximum-entropy solution, the transcendental solve for the second-moment
//! multiplier, rate-power region sweeps, the truncated-Gaussian baseline and
//! Monte Carlo averaging over fading realizations.

use std::io::Write;

use thiserror::Error;

use crate::channel::{effective_amplitude_cap, realization_rng, sample_small_scale, LinkBudget};
use crate::distributions::{
    map_output_to_input_pdf, maxent_output_pdf, pushforward_input_to_output,
    truncated_gaussian_pdf, uniform_output_pdf, GridPdf, MaxEntParams, PdfError,
};
use crate::eh_model::{EhError, EhModel};
use crate::information::{epi_rate, mutual_information, InfoError, NoiseSpec};
use crate::special_math::{bisect, log_erfi_over_leading, MathError};

/// Bracket expansion cap for the multiplier solve, expressed on
/// w = mu2 * p_max_bar (so the mu2 cap is 1e8 / p_max_bar).
const W_CAP: f64 = 1e8;

/// Relative offset from p_max_bar used when a sweep approaches the
/// saturation point, where the multiplier diverges.
const TOP_OFFSET: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid problem instance: {0}")]
    Invalid(String),
    #[error("required power {p_req} outside the solvable multiplier range [p_max/3, p_max) for p_max {p_max}")]
    MultiplierRange { p_req: f64, p_max: f64 },
    #[error(
        "multiplier bracket failure on w in [{lo:.3e}, {hi:.3e}]: residuals ({r_lo:.3e}, {r_hi:.3e}); \
         the required power may be too close to p_max"
    )]
    Bracket { lo: f64, hi: f64, r_lo: f64, r_hi: f64 },
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Pdf(#[from] PdfError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Model(#[from] EhError),
}

/// One rate-maximization instance: effective peak amplitude, channel
/// magnitude, output noise variance and the required average harvested power.
#[derive(Debug, Clone, Copy)]
pub struct ProblemInstance<'a> {
    pub a_bar: f64,
    pub h_mag: f64,
    pub sigma2: f64,
    pub p_req_bar: f64,
    pub model: &'a EhModel,
}

impl<'a> ProblemInstance<'a> {
    /// Validates positivity and that the peak received power respects the
    /// breakdown bound (up to rounding; `effective_amplitude_cap` guarantees
    /// this by construction).
    pub fn new(
        a_bar: f64,
        h_mag: f64,
        sigma2: f64,
        p_req_bar: f64,
        model: &'a EhModel,
    ) -> Result<Self, SolveError> {
        for (name, v) in [("a_bar", a_bar), ("h_mag", h_mag), ("sigma2", sigma2)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(SolveError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !p_req_bar.is_finite() || p_req_bar < 0.0 {
            return Err(SolveError::Invalid(format!(
                "p_req_bar must be non-negative, got {p_req_bar}"
            )));
        }
        let rho_w = (h_mag * a_bar).powi(2);
        if rho_w > model.rho_max_watts() * (1.0 + 1e-9) {
            return Err(SolveError::Invalid(format!(
                "peak received power {rho_w:.6e} W exceeds breakdown bound {:.6e} W; \
                 apply effective_amplitude_cap first",
                model.rho_max_watts()
            )));
        }
        Ok(Self { a_bar, h_mag, sigma2, p_req_bar, model })
    }

    /// Peak received power in watts, clamped to the breakdown bound to
    /// absorb last-ulp rounding of the amplitude cap.
    pub fn rho_cap_watts(&self) -> f64 {
        (self.h_mag * self.a_bar).powi(2).min(self.model.rho_max_watts())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    Feasible { p_max_bar: f64 },
    Infeasible { p_max_bar: f64 },
}

impl Feasibility {
    pub fn p_max_bar(&self) -> f64 {
        match *self {
            Feasibility::Feasible { p_max_bar } | Feasibility::Infeasible { p_max_bar } => {
                p_max_bar
            }
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// The required power is achievable iff it does not exceed the maximum of
/// psi over the reachable received powers.
pub fn check_feasibility(inst: &ProblemInstance) -> Feasibility {
    let p_max_bar = inst.model.p_max_watts(inst.rho_cap_watts());
    if inst.p_req_bar <= p_max_bar {
        Feasibility::Feasible { p_max_bar }
    } else {
        Feasibility::Infeasible { p_max_bar }
    }
}

/// Average harvested power E_s{psi(|h s|^2)} of a transmit density.
pub fn average_harvested_power(
    fs: &GridPdf,
    model: &EhModel,
    h_mag: f64,
) -> Result<f64, SolveError> {
    let rho_top = (h_mag * fs.hi()).powi(2);
    let rho_max_w = model.rho_max_watts();
    if rho_top > rho_max_w * (1.0 + 1e-9) {
        return Err(SolveError::Model(EhError::Breakdown {
            rho: rho_top / model.rho_unit().watts_per_unit(),
            rho_max: model.rho_max(),
        }));
    }
    Ok(fs.expect(|s| {
        let rho_w = (h_mag * s).powi(2).min(rho_max_w);
        model.eval_watts(rho_w).expect("clamped to breakdown bound")
    }))
}

/// Residual of the multiplier equation
/// `ln(1 + 2 mu2 p_req) + ln(erfi(sqrt(mu2 p_max))) - 0.5 ln(4 p_max mu2 / pi) - mu2 p_max`,
/// evaluated in a cancellation-free form (the naive form loses every
/// significant digit for small mu2 * p_max).
pub fn mu2_equation_residual(mu2: f64, p_max_bar: f64, p_req_bar: f64) -> Result<f64, SolveError> {
    let w = mu2 * p_max_bar;
    Ok((2.0 * mu2 * p_req_bar).ln_1p() + log_erfi_over_leading(w)? - w)
}

fn residual_in_w(w: f64, ratio: f64) -> f64 {
    (2.0 * w * ratio).ln_1p() + log_erfi_over_leading(w).expect("w >= 0") - w
}

/// Solve the multiplier equation for mu2 >= 0 given
/// p_req_bar in [p_max_bar/3, p_max_bar). The equation depends on mu2 only
/// through w = mu2 * p_max_bar and the ratio p_req/p_max, so the bracket
/// [1e-12, 1] is expanded geometrically on w (cap 1e8, i.e. mu2 <= 1e8/p_max)
/// and bisected to 1e-13 relative. Exactly p_max/3 returns the degenerate
/// mu2 = 0. Additional sign changes past the first bracket are scanned and
/// reported as a warning; every instance observed so far has a unique root.
pub fn solve_mu2(p_max_bar: f64, p_req_bar: f64) -> Result<f64, SolveError> {
    if !(p_max_bar > 0.0) || !p_max_bar.is_finite() {
        return Err(SolveError::Invalid(format!("p_max_bar must be positive, got {p_max_bar}")));
    }
    if p_req_bar <= p_max_bar / 3.0 {
        if p_req_bar < p_max_bar / 3.0 * (1.0 - 1e-12) {
            return Err(SolveError::MultiplierRange { p_req: p_req_bar, p_max: p_max_bar });
        }
        return Ok(0.0);
    }
    if p_req_bar >= p_max_bar {
        return Err(SolveError::MultiplierRange { p_req: p_req_bar, p_max: p_max_bar });
    }
    let ratio = p_req_bar / p_max_bar;

    let mut lo = 1e-12;
    let mut r_lo = residual_in_w(lo, ratio);
    // ratio > 1/3 makes the residual positive as w -> 0; guard anyway
    while r_lo <= 0.0 && lo > 1e-200 {
        if r_lo == 0.0 {
            return Ok(lo / p_max_bar);
        }
        lo *= 0.25;
        r_lo = residual_in_w(lo, ratio);
    }

    let mut hi = 1.0;
    let mut r_hi = residual_in_w(hi, ratio);
    while r_hi.signum() == r_lo.signum() && hi < W_CAP {
        lo = hi;
        r_lo = residual_in_w(lo, ratio);
        hi *= 2.0;
        r_hi = residual_in_w(hi, ratio);
    }
    if r_hi.signum() == r_lo.signum() {
        return Err(SolveError::Bracket { lo, hi, r_lo, r_hi });
    }

    // uniqueness scan past the first bracket (cheap: a few dozen residuals)
    let mut scan = hi * 2.0;
    let mut prev_sign = r_hi.signum();
    let mut extra_changes = 0usize;
    while scan < W_CAP {
        let r = residual_in_w(scan, ratio);
        if r.signum() != prev_sign {
            extra_changes += 1;
            prev_sign = r.signum();
        }
        scan *= 2.0;
    }
    if extra_changes > 0 {
        log::warn!(
            "multiplier equation shows {extra_changes} extra sign change(s) beyond the first \
             bracket for p_req/p_max = {ratio}; using the smallest root"
        );
    }

    let w = bisect(|w| residual_in_w(w, ratio), lo, hi, 1e-13)?;
    Ok(w / p_max_bar)
}

/// Zeroth-moment multiplier fixed by normalization:
/// `mu0 = mu2 p_max + ln(sqrt(p_max) / (1 + 2 mu2 p_req))`.
pub fn mu0_for(mu2: f64, p_max_bar: f64, p_req_bar: f64) -> f64 {
    mu2 * p_max_bar + (p_max_bar.sqrt() / (1.0 + 2.0 * mu2 * p_req_bar)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Uniform,
    MaxEnt,
    Infeasible,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Uniform => "uniform",
            Regime::MaxEnt => "maxent",
            Regime::Infeasible => "infeasible",
        })
    }
}

/// Solution of one instance: the achievable rate, the regime it came from,
/// the multipliers (maximum-entropy regime only), the realized average
/// harvested power and the optimal output/transmit densities.
#[derive(Debug, Clone)]
pub struct RateSolution {
    pub j_star: f64,
    pub regime: Regime,
    pub mu0: Option<f64>,
    pub mu2: Option<f64>,
    pub p_harv_realized: f64,
    pub p_max_bar: f64,
    pub fx: Option<GridPdf>,
    pub fs: Option<GridPdf>,
}

/// Solve one instance at grid size `grid_m`. Dispatch: infeasible if the
/// requirement exceeds p_max; closed-form uniform-output solution for
/// p_req <= p_max/3; maximum-entropy solution otherwise. Requirements at
/// p_max itself are met by the degenerate point mass at the peak (zero rate).
pub fn solve_rate(inst: &ProblemInstance, grid_m: usize) -> Result<RateSolution, SolveError> {
    let feas = check_feasibility(inst);
    let p_max_bar = feas.p_max_bar();
    if !feas.is_feasible() {
        return Ok(RateSolution {
            j_star: 0.0,
            regime: Regime::Infeasible,
            mu0: None,
            mu2: None,
            p_harv_realized: 0.0,
            p_max_bar,
            fx: None,
            fs: None,
        });
    }
    let noise = NoiseSpec::new(inst.sigma2).map_err(SolveError::Info)?;

    if inst.p_req_bar >= p_max_bar * (1.0 - 1e-12) {
        // saturation point: only the point mass at the peak meets the
        // requirement, and it carries no information
        let x_star = p_max_bar.sqrt();
        let fx = GridPdf::spike(0.0, x_star, grid_m, x_star)?;
        let s_star = inst.model.invert_first_segment_watts(p_max_bar)?.sqrt() / inst.h_mag;
        let fs = GridPdf::spike(0.0, s_star, grid_m, s_star)?;
        let p_harv = inst.model.eval_watts((inst.h_mag * s_star).powi(2))?;
        return Ok(RateSolution {
            j_star: 0.0,
            regime: Regime::MaxEnt,
            mu0: None,
            mu2: None,
            p_harv_realized: p_harv,
            p_max_bar,
            fx: Some(fx),
            fs: Some(fs),
        });
    }

    let (j_star, regime, mu0, mu2, fx) = if inst.p_req_bar <= p_max_bar / 3.0 {
        let h_x = 0.5 * p_max_bar.ln(); // entropy of the uniform output
        let fx = uniform_output_pdf(p_max_bar, grid_m)?;
        (epi_rate(h_x, &noise), Regime::Uniform, None, None, fx)
    } else {
        let mu2 = solve_mu2(p_max_bar, inst.p_req_bar)?;
        let mu0 = mu0_for(mu2, p_max_bar, inst.p_req_bar);
        let h_x = mu0 - mu2 * inst.p_req_bar;
        let params = MaxEntParams::new(mu0, mu2, p_max_bar, inst.p_req_bar)?;
        let fx = maxent_output_pdf(&params, grid_m)?;
        (epi_rate(h_x, &noise), Regime::MaxEnt, Some(mu0), Some(mu2), fx)
    };

    let fs = map_output_to_input_pdf(&fx, inst.model, inst.h_mag, grid_m)?;
    let p_harv_realized = average_harvested_power(&fs, inst.model, inst.h_mag)?;
    Ok(RateSolution {
        j_star,
        regime,
        mu0,
        mu2,
        p_harv_realized,
        p_max_bar,
        fx: Some(fx),
        fs: Some(fs),
    })
}

/// One row of a rate-power region table.
#[derive(Debug, Clone, Copy)]
pub struct RegionPoint {
    pub p_req_bar: f64,
    pub j_star: f64,
    pub i_exact: f64,
    pub mu2: f64,
    pub regime: Regime,
}

/// Sweep the required power uniformly over [0, p_max]; the last level backs
/// off to p_max (1 - 1e-6), where the multiplier is still finite. Each point
/// carries both the rate bound and the exact mutual information of the
/// realized output density. Output is ascending in required power.
pub fn sweep_region(
    model: &EhModel,
    a_bar: f64,
    h_mag: f64,
    sigma2: f64,
    n_points: usize,
    grid_m: usize,
) -> Result<Vec<RegionPoint>, SolveError> {
    if n_points < 2 {
        return Err(SolveError::Invalid(format!("n_points must be >= 2, got {n_points}")));
    }
    let probe = ProblemInstance::new(a_bar, h_mag, sigma2, 0.0, model)?;
    let p_max_bar = check_feasibility(&probe).p_max_bar();
    let noise = NoiseSpec::new(sigma2).map_err(SolveError::Info)?;

    let mut out = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let frac = if k == n_points - 1 {
            1.0 - TOP_OFFSET
        } else {
            k as f64 / (n_points - 1) as f64
        };
        let p_req = frac * p_max_bar;
        let inst = ProblemInstance::new(a_bar, h_mag, sigma2, p_req, model)?;
        let sol = solve_rate(&inst, grid_m)?;
        let i_exact = mutual_information(sol.fx.as_ref().expect("feasible"), &noise)?;
        out.push(RegionPoint {
            p_req_bar: p_req,
            j_star: sol.j_star,
            i_exact,
            mu2: sol.mu2.unwrap_or(0.0),
            regime: sol.regime,
        });
    }
    Ok(out)
}

/// One truncated-Gaussian baseline operating point.
#[derive(Debug, Clone, Copy)]
pub struct BaselinePoint {
    pub sigma_s: f64,
    pub p_harv: f64,
    pub i_exact: f64,
}

/// Evaluate the truncated-Gaussian baseline (mean a_bar/2 on [0, a_bar]) at
/// each transmit standard deviation: harvested power from the transmit
/// density, mutual information from its pushforward to output space.
pub fn sweep_baseline(
    model: &EhModel,
    a_bar: f64,
    h_mag: f64,
    sigma2: f64,
    sigma_s_list: &[f64],
    grid_m: usize,
) -> Result<Vec<BaselinePoint>, SolveError> {
    if sigma_s_list.is_empty() {
        return Err(SolveError::Invalid("sigma_s list must be non-empty".into()));
    }
    ProblemInstance::new(a_bar, h_mag, sigma2, 0.0, model)?;
    let noise = NoiseSpec::new(sigma2).map_err(SolveError::Info)?;
    let mut out = Vec::with_capacity(sigma_s_list.len());
    for &sigma_s in sigma_s_list {
        let fs = truncated_gaussian_pdf(a_bar, sigma_s, grid_m)?;
        let p_harv = average_harvested_power(&fs, model, h_mag)?;
        let fx = pushforward_input_to_output(&fs, model, h_mag, grid_m)?;
        let i_exact = mutual_information(&fx, &noise)?;
        out.push(BaselinePoint { sigma_s, p_harv, i_exact });
    }
    Ok(out)
}

/// Monte Carlo averaging mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McMode {
    /// Draw fading per realization and sweep required power as a fraction
    /// of the per-realization p_max, then average level-wise. Every sampled
    /// point stays feasible.
    Relative,
    /// No fading: use the given peak amplitude (still subject to the
    /// breakdown cap) and produce the deterministic region table.
    FixedAbar(f64),
}

#[derive(Debug, Clone)]
pub struct McTable {
    pub points: Vec<RegionPoint>,
    pub n_realizations: usize,
    pub seed: u64,
}

/// Rate-power region averaged over seeded Rician fading realizations.
/// Deterministic: the same seed always produces bit-identical tables.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_region(
    lb: &LinkBudget,
    a: f64,
    sigma2: f64,
    model: &EhModel,
    n_realizations: usize,
    n_points: usize,
    seed: u64,
    mode: McMode,
    grid_m: usize,
) -> Result<McTable, SolveError> {
    lb.validate().map_err(|e| SolveError::Invalid(e.to_string()))?;
    if n_realizations == 0 {
        return Err(SolveError::Invalid("n_realizations must be >= 1".into()));
    }
    if n_points < 2 {
        return Err(SolveError::Invalid(format!("n_points must be >= 2, got {n_points}")));
    }
    let h_tilde = lb.large_scale_gain();
    let rho_max_w = model.rho_max_watts();

    if let McMode::FixedAbar(abar_user) = mode {
        let abar = effective_amplitude_cap(abar_user, h_tilde, rho_max_w);
        let points = sweep_region(model, abar, h_tilde, sigma2, n_points, grid_m)?;
        return Ok(McTable { points, n_realizations: 1, seed });
    }

    let noise = NoiseSpec::new(sigma2).map_err(SolveError::Info)?;
    let fracs: Vec<f64> = (0..n_points)
        .map(|k| {
            if k == n_points - 1 {
                1.0 - TOP_OFFSET
            } else {
                k as f64 / (n_points - 1) as f64
            }
        })
        .collect();

    let mut sum_p = vec![0.0f64; n_points];
    let mut sum_j = vec![0.0f64; n_points];
    let mut sum_i = vec![0.0f64; n_points];
    let mut sum_mu2 = vec![0.0f64; n_points];

    for r in 0..n_realizations {
        let mut rng = realization_rng(seed, r as u64);
        let h_hat = sample_small_scale(lb.rician_k, &mut rng);
        let h_mag = h_tilde * h_hat;
        let a_bar = effective_amplitude_cap(a, h_mag, rho_max_w);
        let probe = ProblemInstance::new(a_bar, h_mag, sigma2, 0.0, model)?;
        let p_max_r = check_feasibility(&probe).p_max_bar();
        for (k, &frac) in fracs.iter().enumerate() {
            let p_req = frac * p_max_r;
            let inst = ProblemInstance::new(a_bar, h_mag, sigma2, p_req, model)?;
            let sol = solve_rate(&inst, grid_m)?;
            let i_exact = mutual_information(sol.fx.as_ref().expect("feasible"), &noise)?;
            sum_p[k] += p_req;
            sum_j[k] += sol.j_star;
            sum_i[k] += i_exact;
            sum_mu2[k] += sol.mu2.unwrap_or(0.0);
        }
    }

    let n = n_realizations as f64;
    let points = (0..n_points)
        .map(|k| RegionPoint {
            p_req_bar: sum_p[k] / n,
            j_star: sum_j[k] / n,
            i_exact: sum_i[k] / n,
            mu2: sum_mu2[k] / n,
            regime: if fracs[k] <= 1.0 / 3.0 { Regime::Uniform } else { Regime::MaxEnt },
        })
        .collect();
    Ok(McTable { points, n_realizations, seed })
}

/// Constructive feasibility witness: the point mass at
/// s0 = sqrt(psi^-1(p_req))/|h| meets the power requirement with equality.
/// Returns (s0, realized power).
pub fn delta_witness(
    model: &EhModel,
    h_mag: f64,
    p_req_bar: f64,
) -> Result<(f64, f64), SolveError> {
    let rho_w = model.invert_first_segment_watts(p_req_bar)?;
    let s0 = rho_w.sqrt() / h_mag;
    let realized = model.eval_watts((h_mag * s0).powi(2).min(model.rho_max_watts()))?;
    Ok((s0, realized))
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

pub fn write_region_csv<W: Write>(points: &[RegionPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "p_req_W,j_star_nats,i_exact_nats,mu2,regime")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.p_req_bar, p.j_star, p.i_exact, p.mu2, p.regime)?;
    }
    Ok(())
}

pub fn write_mc_csv<W: Write>(table: &McTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "p_req_W,j_star_nats,i_exact_nats,mu2,regime,n_realizations,seed")?;
    for p in &table.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.p_req_bar, p.j_star, p.i_exact, p.mu2, p.regime, table.n_realizations, table.seed
        )?;
    }
    Ok(())
}

pub fn write_baseline_csv<W: Write>(points: &[BaselinePoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "sigma_s,p_harv_W,i_exact_nats")?;
    for p in points {
        writeln!(w, "{},{},{}", p.sigma_s, p.p_harv, p.i_exact)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eh_model::test_fixtures::{reference_model, unit_saturating_model};
    use crate::special_math::TWO_PI_E;

    const MU2_1_06: f64 = 2.709221865613415;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn feasibility_basics() {
        let model = reference_model();
        let p_peak = model.first_segment_peak();
        // saturated cap: breakdown-limited amplitude
        let h = 0.0795;
        let a_bar = effective_amplitude_cap(1.0, h, model.rho_max_watts());
        let inst = ProblemInstance::new(a_bar, h, 1e-8, 0.0, &model).unwrap();
        let feas = check_feasibility(&inst);
        assert!(feas.is_feasible());
        assert!(rel_err(feas.p_max_bar(), p_peak) < 1e-12);

        let inst = ProblemInstance::new(a_bar, h, 1e-8, p_peak * (1.0 + 1e-6), &model).unwrap();
        assert!(!check_feasibility(&inst).is_feasible());
    }

    #[test]
    fn feasibility_saturates_above_first_peak() {
        let model = reference_model();
        let h = 0.0795;
        // any cap with |h a|^2 >= rho_1 gives the same p_max
        let a1 = (1.9e-3f64).sqrt() / h;
        let a2 = effective_amplitude_cap(10.0, h, model.rho_max_watts());
        let p1 = check_feasibility(&ProblemInstance::new(a1, h, 1e-8, 0.0, &model).unwrap());
        let p2 = check_feasibility(&ProblemInstance::new(a2, h, 1e-8, 0.0, &model).unwrap());
        assert_eq!(p1.p_max_bar().to_bits(), p2.p_max_bar().to_bits());
    }

    #[test]
    fn mu2_golden_root_and_residual() {
        let mu2 = solve_mu2(1.0, 0.6).unwrap();
        assert!(rel_err(mu2, MU2_1_06) < 1e-10, "mu2 = {mu2:.15}");
        let resid = mu2_equation_residual(mu2, 1.0, 0.6).unwrap();
        assert!(resid.abs() < 1e-9, "residual = {resid:e}");
    }

    #[test]
    fn mu2_scale_invariance() {
        let base = solve_mu2(1.0, 0.6).unwrap();
        for &scale in &[7.150582699227205e-5, 1e-3, 42.0] {
            let scaled = solve_mu2(scale, 0.6 * scale).unwrap();
            assert!(rel_err(scaled, base / scale) < 1e-12, "scale {scale}");
        }
    }

    #[test]
    fn mu2_degenerate_and_range_errors() {
        assert_eq!(solve_mu2(1.0, 1.0 / 3.0).unwrap(), 0.0);
        assert!(matches!(solve_mu2(1.0, 0.2), Err(SolveError::MultiplierRange { .. })));
        assert!(matches!(solve_mu2(1.0, 1.0), Err(SolveError::MultiplierRange { .. })));
    }

    #[test]
    fn mu2_vanishes_toward_the_regime_boundary() {
        // small-mu2 expansion of the residual forces p_req -> p_max/3
        let p_max = 0.7;
        let mu2 = solve_mu2(p_max, p_max / 3.0 * (1.0 + 1e-4)).unwrap();
        assert!(mu2 > 0.0 && mu2 * p_max < 2e-3, "mu2 = {mu2:e}");
        let resid = mu2_equation_residual(mu2, p_max, p_max / 3.0 * (1.0 + 1e-4)).unwrap();
        assert!(resid.abs() < 1e-9);
        // the root scales linearly with the offset near the boundary
        let mu2b = solve_mu2(p_max, p_max / 3.0 * (1.0 + 2e-4)).unwrap();
        assert!(rel_err(mu2b, 2.0 * mu2) < 0.05);
    }

    #[test]
    fn maxent_pdf_from_solved_multipliers_is_normalized() {
        let (p_max, p_req) = (1.0, 0.6);
        let mu2 = solve_mu2(p_max, p_req).unwrap();
        let mu0 = mu0_for(mu2, p_max, p_req);
        let spec = crate::special_math::QuadratureSpec::new(16384).unwrap();
        let mass = crate::special_math::integrate(
            |x| (-mu0 + mu2 * x * x).exp(),
            0.0,
            p_max.sqrt(),
            &spec,
        );
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }

    #[test]
    fn solve_rate_uniform_regime_closed_form() {
        // p_max = 1 exactly on the unit saturating model with h = a_bar = 1
        let model = unit_saturating_model();
        let inst = ProblemInstance::new(1.0, 1.0, 1.0, 0.1, &model).unwrap();
        let sol = solve_rate(&inst, 2001).unwrap();
        assert_eq!(sol.regime, Regime::Uniform);
        assert!((sol.p_max_bar - 1.0).abs() < 1e-15);
        let want = 0.5 * (1.0 + 1.0 / TWO_PI_E).ln();
        assert!((sol.j_star - want).abs() < 1e-12);
        assert!((sol.j_star - 0.028449943987881431).abs() < 1e-12);
        // uniform output harvests p_max/3 regardless of the requirement
        assert!((sol.p_harv_realized - 1.0 / 3.0).abs() < 1e-5);
        assert!(sol.p_harv_realized >= sol.j_star.min(0.1) - 1e-9);
    }

    #[test]
    fn solve_rate_regime_boundary_continuity() {
        let model = unit_saturating_model();
        let p_max = 1.0;
        let eps = 1e-8 * p_max;
        let below = ProblemInstance::new(1.0, 1.0, 1e-2, p_max / 3.0 - eps, &model).unwrap();
        let above = ProblemInstance::new(1.0, 1.0, 1e-2, p_max / 3.0 + eps, &model).unwrap();
        let j_below = solve_rate(&below, 2001).unwrap();
        let j_above = solve_rate(&above, 2001).unwrap();
        assert_eq!(j_below.regime, Regime::Uniform);
        assert_eq!(j_above.regime, Regime::MaxEnt);
        assert!(
            (j_below.j_star - j_above.j_star).abs() < 1e-6,
            "jump: {} vs {}",
            j_below.j_star,
            j_above.j_star
        );
    }

    #[test]
    fn solve_rate_maxent_regime_active_constraint() {
        let model = unit_saturating_model();
        let inst = ProblemInstance::new(1.0, 1.0, 1e-2, 0.6, &model).unwrap();
        let sol = solve_rate(&inst, 4001).unwrap();
        assert_eq!(sol.regime, Regime::MaxEnt);
        assert!(rel_err(sol.mu2.unwrap(), MU2_1_06) < 1e-9);
        assert!(rel_err(sol.p_harv_realized, 0.6) < 1e-5, "p_harv = {}", sol.p_harv_realized);
        // rate strictly below the uniform rate
        let uniform = ProblemInstance::new(1.0, 1.0, 1e-2, 0.0, &model).unwrap();
        assert!(sol.j_star < solve_rate(&uniform, 2001).unwrap().j_star);
    }

    #[test]
    fn solve_rate_infeasible_and_saturation() {
        let model = unit_saturating_model();
        let inst = ProblemInstance::new(1.0, 1.0, 1e-2, 1.1, &model).unwrap();
        let sol = solve_rate(&inst, 513).unwrap();
        assert_eq!(sol.regime, Regime::Infeasible);
        assert!(sol.fx.is_none());

        // exactly p_max: degenerate point mass, zero rate, full power
        let inst = ProblemInstance::new(1.0, 1.0, 1e-2, 1.0, &model).unwrap();
        let sol = solve_rate(&inst, 513).unwrap();
        assert_eq!(sol.j_star, 0.0);
        assert!(rel_err(sol.p_harv_realized, 1.0) < 1e-9);
    }

    #[test]
    fn sweep_region_structure() {
        let model = reference_model();
        let h = 0.0795;
        let a_bar = effective_amplitude_cap(1.0, h, model.rho_max_watts());
        let points = sweep_region(&model, a_bar, h, 1e-8, 13, 2001).unwrap();
        assert_eq!(points.len(), 13);
        // ascending required power, non-increasing rate
        for w in points.windows(2) {
            assert!(w[0].p_req_bar < w[1].p_req_bar);
            assert!(w[1].j_star <= w[0].j_star + 1e-12);
        }
        // flat uniform stretch over the first third
        let first = points[0].j_star;
        for p in &points {
            if p.p_req_bar <= points[12].p_req_bar / 3.0 {
                assert_eq!(p.regime, Regime::Uniform);
                assert!((p.j_star - first).abs() < 1e-12);
            }
        }
        // exact mutual information dominates the bound pointwise
        for p in &points {
            assert!(p.i_exact >= p.j_star - 1e-6, "I {} < J {}", p.i_exact, p.j_star);
        }
    }

    #[test]
    fn baseline_points_and_degenerate_limit() {
        let model = reference_model();
        let h = 0.0795;
        let a_bar = effective_amplitude_cap(1.0, h, model.rho_max_watts());
        let sigmas = [1e-6 * a_bar, 0.1 * a_bar, 0.3 * a_bar];
        let points = sweep_baseline(&model, a_bar, h, 1e-8, &sigmas, 2001).unwrap();
        assert_eq!(points.len(), 3);
        // near-deterministic symbol carries almost no information
        assert!(points[0].i_exact < 1e-3, "I = {}", points[0].i_exact);
        let p_center = model.eval_watts((h * a_bar / 2.0).powi(2)).unwrap();
        assert!(rel_err(points[0].p_harv, p_center) < 1e-6);
        // sweep is informative: distinct powers
        assert!((points[0].p_harv - points[2].p_harv).abs() > 1e-9);
    }

    #[test]
    fn baseline_rate_bound_never_exceeds_optimized_bound() {
        // the optimized output density maximizes entropy among densities on
        // [0, sqrt(p_max)] meeting the moment constraint, so its J dominates
        // the baseline's J at equal harvested power
        use crate::distributions::pushforward_input_to_output;
        use crate::information::differential_entropy;
        let model = reference_model();
        let h = 0.07952441989825037;
        let sigma2 = 1e-8;
        let noise = NoiseSpec::new(sigma2).unwrap();
        let a_bar = effective_amplitude_cap(1.0, h, model.rho_max_watts());
        let p_max = model.p_max_watts((h * a_bar).powi(2));
        let sigmas: Vec<f64> =
            (0..12).map(|i| 0.01 * a_bar * 300f64.powf(i as f64 / 11.0)).collect();
        for &sigma_s in &sigmas {
            let fs = truncated_gaussian_pdf(a_bar, sigma_s, 2001).unwrap();
            let p_harv = average_harvested_power(&fs, &model, h).unwrap();
            let fx = pushforward_input_to_output(&fs, &model, h, 2001).unwrap();
            let j_base = epi_rate(differential_entropy(&fx), &noise);
            let p = p_harv.min(p_max * (1.0 - 1e-6));
            let inst = ProblemInstance::new(a_bar, h, sigma2, p, &model).unwrap();
            let j_opt = solve_rate(&inst, 2001).unwrap().j_star;
            assert!(
                j_base <= j_opt + 1e-6,
                "sigma_s {sigma_s}: J_base {j_base} > J_opt {j_opt} at p = {p_harv}"
            );
        }
    }

    #[test]
    fn monte_carlo_deterministic_and_no_fading_limit() {
        let model = reference_model();
        let lb = LinkBudget {
            g_tx: 100.0,
            g_rx: 100.0,
            f_c: 1e11,
            d: 0.3,
            c_l: 2.998e8,
            rician_k: 1e12,
        };
        let t1 = monte_carlo_region(&lb, 1.0, 1e-8, &model, 3, 5, 7, McMode::Relative, 1501)
            .unwrap();
        let t2 = monte_carlo_region(&lb, 1.0, 1e-8, &model, 3, 5, 7, McMode::Relative, 1501)
            .unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_mc_csv(&t1, &mut a).unwrap();
        write_mc_csv(&t2, &mut b).unwrap();
        assert_eq!(a, b, "same seed must give byte-identical tables");

        // K -> inf: every realization equals the deterministic sweep
        let h = lb.large_scale_gain();
        let a_bar = effective_amplitude_cap(1.0, h, model.rho_max_watts());
        let sweep = sweep_region(&model, a_bar, h, 1e-8, 5, 1501).unwrap();
        for (mc, sw) in t1.points.iter().zip(&sweep) {
            assert!(rel_err(mc.p_req_bar, sw.p_req_bar) < 1e-9);
            assert!((mc.j_star - sw.j_star).abs() < 1e-9);
            assert!((mc.i_exact - sw.i_exact).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_abar_mode_matches_sweep() {
        let model = reference_model();
        let lb = LinkBudget {
            g_tx: 100.0,
            g_rx: 100.0,
            f_c: 1e11,
            d: 0.3,
            c_l: 2.998e8,
            rician_k: 1.0,
        };
        let t =
            monte_carlo_region(&lb, 1e9, 1e-8, &model, 10, 5, 3, McMode::FixedAbar(0.75), 1501)
                .unwrap();
        assert_eq!(t.n_realizations, 1);
        let h = lb.large_scale_gain();
        let a_bar = effective_amplitude_cap(0.75, h, model.rho_max_watts());
        let sweep = sweep_region(&model, a_bar, h, 1e-8, 5, 1501).unwrap();
        for (mc, sw) in t.points.iter().zip(&sweep) {
            assert_eq!(mc.p_req_bar.to_bits(), sw.p_req_bar.to_bits());
            assert_eq!(mc.j_star.to_bits(), sw.j_star.to_bits());
        }
    }

    #[test]
    fn delta_witness_meets_requirement_exactly() {
        let model = reference_model();
        let h = 0.0795;
        let p_req = 0.5 * model.first_segment_peak();
        let (s0, realized) = delta_witness(&model, h, p_req).unwrap();
        assert!(s0 > 0.0);
        assert!(rel_err(realized, p_req) < 1e-9);
    }

    #[test]
    fn average_harvested_power_of_spike() {
        let model = reference_model();
        let h = 0.0795;
        let s0 = 0.25;
        let fs = GridPdf::spike(0.0, 0.5, 2001, s0).unwrap();
        let grid_s0 = fs.node(((s0 - fs.lo()) / fs.step()).round() as usize);
        let want = model.eval_watts((h * grid_s0).powi(2)).unwrap();
        let got = average_harvested_power(&fs, &model, h).unwrap();
        assert!(rel_err(got, want) < 1e-12);
        // spike at zero harvests nothing
        let fs0 = GridPdf::spike(0.0, 0.5, 2001, 0.0).unwrap();
        assert_eq!(average_harvested_power(&fs0, &model, h).unwrap(), 0.0);
    }
}
