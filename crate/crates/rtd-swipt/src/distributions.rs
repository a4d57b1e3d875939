//! Probability densities on bounded supports: the uniform and
//! maximum-entropy output densities, the truncated-Gaussian transmit
//! baseline, and the change-of-variables machinery between transmit
//! amplitude space (s) and receiver output space (x = sqrt(psi(|h s|^2))).
//!
//! Densities are sampled on uniform closed grids with an odd node count and
//! integrated with composite Simpson weights, which keeps normalization,
//! moments and entropies accurate to well below the tolerances used by the
//! solver layer.

use std::io::Write;

use thiserror::Error;

use crate::eh_model::{EhError, EhModel};
use crate::special_math::{integrate, integrate_samples, simpson_weight, QuadratureSpec};

/// Tail exponent at which the maximum-entropy density support is restricted:
/// mass below the cut is bounded by e^-60 ~ 8.8e-27, far below every
/// tolerance, while keeping steep densities resolvable on a fixed grid.
const MAXENT_TAIL_EXPONENT: f64 = 60.0;

#[derive(Debug, Error)]
pub enum PdfError {
    #[error("grid pdf needs an odd node count >= 3, got {0}")]
    BadGridSize(usize),
    #[error("support bounds must satisfy lo < hi, got [{lo}, {hi}]")]
    BadSupport { lo: f64, hi: f64 },
    #[error("parameter {name} out of range: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("density normalization off by {deviation:.3e}: inconsistent parameters")]
    NotNormalized { deviation: f64 },
    #[error("output value {x} has no first-segment preimage (max {max})")]
    NoPreimage { x: f64, max: f64 },
    #[error(transparent)]
    Model(#[from] EhError),
}

/// A probability density sampled on a uniform closed grid over [lo, hi].
/// The node count is odd so composite Simpson applies directly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPdf {
    lo: f64,
    hi: f64,
    density: Vec<f64>,
}

impl GridPdf {
    /// Sample `f` on `m` nodes over [lo, hi] (no normalization applied).
    pub fn from_fn<F: Fn(f64) -> f64>(lo: f64, hi: f64, m: usize, f: F) -> Result<Self, PdfError> {
        if m < 3 || m % 2 == 0 {
            return Err(PdfError::BadGridSize(m));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(PdfError::BadSupport { lo, hi });
        }
        let step = (hi - lo) / (m - 1) as f64;
        let density = (0..m)
            .map(|i| {
                let x = if i == m - 1 { hi } else { lo + i as f64 * step };
                f(x).max(0.0)
            })
            .collect();
        Ok(Self { lo, hi, density })
    }

    /// Point mass approximation: a single nonzero node at the grid point
    /// nearest `at`, scaled so the Simpson mass is exactly one.
    pub fn spike(lo: f64, hi: f64, m: usize, at: f64) -> Result<Self, PdfError> {
        let mut pdf = Self::from_fn(lo, hi, m, |_| 0.0)?;
        let step = pdf.step();
        let idx = (((at - lo) / step).round() as usize).min(m - 1);
        pdf.density[idx] = 1.0 / simpson_weight(idx, m, step);
        Ok(pdf)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn node_count(&self) -> usize {
        self.density.len()
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.density.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.density.len() - 1 {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Simpson mass of the sampled density.
    pub fn mass(&self) -> f64 {
        integrate_samples(&self.density, self.step())
    }

    /// Simpson estimate of E{g(x)} under this density.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        let step = self.step();
        let vals: Vec<f64> = (0..self.node_count()).map(|i| self.density[i] * g(self.node(i))).collect();
        integrate_samples(&vals, step)
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|x| x * x)
    }

    /// Rescale so the Simpson mass is exactly one.
    pub fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            for d in &mut self.density {
                *d /= m;
            }
        }
    }

    /// Density at an arbitrary point, by 4-point Lagrange interpolation of
    /// the node samples (linear when the grid is tiny). Zero outside the
    /// support; interpolation undershoot is clamped to zero.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let m = self.density.len();
        let step = self.step();
        let t = (x - self.lo) / step;
        if m < 4 {
            let i = (t.floor() as usize).min(m - 2);
            let frac = t - i as f64;
            return (self.density[i] * (1.0 - frac) + self.density[i + 1] * frac).max(0.0);
        }
        let i = (t.floor() as usize).min(m - 2);
        let s = i.saturating_sub(1).min(m - 4);
        let u = t - s as f64; // in [0, 3] over the stencil
        let d = &self.density[s..s + 4];
        let l0 = (u - 1.0) * (u - 2.0) * (u - 3.0) / -6.0;
        let l1 = u * (u - 2.0) * (u - 3.0) / 2.0;
        let l2 = u * (u - 1.0) * (u - 3.0) / -2.0;
        let l3 = u * (u - 1.0) * (u - 2.0) / 6.0;
        (d[0] * l0 + d[1] * l1 + d[2] * l2 + d[3] * l3).max(0.0)
    }

    /// Write as CSV with header `x,density`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,density")?;
        for i in 0..self.node_count() {
            writeln!(w, "{},{}", self.node(i), self.density[i])?;
        }
        Ok(())
    }
}

/// Multipliers and constraint levels of the maximum-entropy output density
/// `f_x(x) = exp(-mu0 + mu2 x^2)` on [0, sqrt(p_max_bar)].
#[derive(Debug, Clone, Copy)]
pub struct MaxEntParams {
    pub mu0: f64,
    pub mu2: f64,
    pub p_max_bar: f64,
    pub p_req_bar: f64,
}

impl MaxEntParams {
    pub fn new(mu0: f64, mu2: f64, p_max_bar: f64, p_req_bar: f64) -> Result<Self, PdfError> {
        if !mu2.is_finite() || mu2 < 0.0 {
            return Err(PdfError::BadParameter { name: "mu2", value: mu2 });
        }
        if !p_max_bar.is_finite() || p_max_bar <= 0.0 {
            return Err(PdfError::BadParameter { name: "p_max_bar", value: p_max_bar });
        }
        if !(0.0..=p_max_bar).contains(&p_req_bar) {
            return Err(PdfError::BadParameter { name: "p_req_bar", value: p_req_bar });
        }
        if !mu0.is_finite() {
            return Err(PdfError::BadParameter { name: "mu0", value: mu0 });
        }
        Ok(Self { mu0, mu2, p_max_bar, p_req_bar })
    }
}

/// Constant output density 1/sqrt(p_max_bar) on [0, sqrt(p_max_bar)]:
/// the unconstrained entropy maximizer.
pub fn uniform_output_pdf(p_max_bar: f64, m: usize) -> Result<GridPdf, PdfError> {
    if !p_max_bar.is_finite() || p_max_bar <= 0.0 {
        return Err(PdfError::BadParameter { name: "p_max_bar", value: p_max_bar });
    }
    let width = p_max_bar.sqrt();
    GridPdf::from_fn(0.0, width, m, |_| 1.0 / width)
}

/// Maximum-entropy output density `exp(-mu0 + mu2 x^2)` on
/// [0, sqrt(p_max_bar)]. For very steep densities (mu2 * p_max_bar beyond
/// ~60) the support is cut where the omitted tail mass drops below e^-60,
/// so the grid always resolves the density. Fails if the sampled mass
/// deviates from one by more than 1e-4, which signals an inconsistent
/// (mu0, mu2) pair.
pub fn maxent_output_pdf(params: &MaxEntParams, m: usize) -> Result<GridPdf, PdfError> {
    let p = MaxEntParams::new(params.mu0, params.mu2, params.p_max_bar, params.p_req_bar)?;
    let hi = p.p_max_bar.sqrt();
    let lo = if p.mu2 * p.p_max_bar > MAXENT_TAIL_EXPONENT {
        (p.p_max_bar - MAXENT_TAIL_EXPONENT / p.mu2).max(0.0).sqrt()
    } else {
        0.0
    };
    let pdf = GridPdf::from_fn(lo, hi, m, |x| (-p.mu0 + p.mu2 * x * x).exp())?;
    let deviation = (pdf.mass() - 1.0).abs();
    if deviation > 1e-4 {
        return Err(PdfError::NotNormalized { deviation });
    }
    Ok(pdf)
}

/// Transmit density realizing a target output density through the first
/// (increasing) segment of psi: s(x) = sqrt(psi^-1(x^2))/|h|, the
/// smallest-amplitude preimage. The density is the change-of-variables
/// pullback f_s(s) = f_x(x(s)) x'(s) with the derivative taken by central
/// differences (relative step 1e-6; one-sided at the support ends, which
/// keeps the kink at the first breakpoint out of the stencil).
pub fn map_output_to_input_pdf(
    fx: &GridPdf,
    model: &EhModel,
    h_mag: f64,
    m: usize,
) -> Result<GridPdf, PdfError> {
    if !(h_mag > 0.0) {
        return Err(PdfError::BadParameter { name: "h_mag", value: h_mag });
    }
    let peak = model.first_segment_peak();
    let top = fx.hi() * fx.hi();
    if top > peak * (1.0 + 1e-9) {
        return Err(PdfError::NoPreimage { x: fx.hi(), max: peak.sqrt() });
    }
    let s_of_x = |x: f64| -> Result<f64, EhError> {
        Ok(model.invert_first_segment_watts((x * x).min(peak))?.sqrt() / h_mag)
    };
    let x_of_s = |s: f64| -> f64 {
        let rho_w = (h_mag * s).powi(2).min(model.rho_max_watts());
        model.eval_watts(rho_w).expect("clamped to rho_max").sqrt()
    };
    let s_lo = s_of_x(fx.lo())?;
    let s_hi = s_of_x(fx.hi())?;
    if !(s_lo < s_hi) {
        return Err(PdfError::BadSupport { lo: s_lo, hi: s_hi });
    }

    let n = if m % 2 == 0 { m + 1 } else { m.max(3) };
    let step = (s_hi - s_lo) / (n - 1) as f64;
    let mut density = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i == n - 1 { s_hi } else { s_lo + i as f64 * step };
        let delta = 1e-6 * if s > 0.0 { s } else { s_hi };
        let dxds = if i == 0 {
            (-3.0 * x_of_s(s) + 4.0 * x_of_s(s + delta) - x_of_s(s + 2.0 * delta)) / (2.0 * delta)
        } else if i == n - 1 {
            (3.0 * x_of_s(s) - 4.0 * x_of_s(s - delta) + x_of_s(s - 2.0 * delta)) / (2.0 * delta)
        } else {
            (x_of_s(s + delta) - x_of_s(s - delta)) / (2.0 * delta)
        };
        let x = x_of_s(s).clamp(fx.lo(), fx.hi());
        density.push((fx.value_at(x) * dxds.max(0.0)).max(0.0));
    }

    // x'(s) behaves like s^(alpha-1) at zero, which composite Simpson cannot
    // integrate to tolerance; pin the first pair to its exact output-space
    // mass int fx dx over [x(s0), x(s2)] instead of trusting the parabola.
    let x_a = x_of_s(s_lo).clamp(fx.lo(), fx.hi());
    let x_b = x_of_s(s_lo + 2.0 * step).clamp(fx.lo(), fx.hi());
    if x_b > x_a {
        let spec = QuadratureSpec::default();
        let pair_mass = integrate(|x| fx.value_at(x), x_a, x_b, &spec);
        density[0] = (3.0 * pair_mass / step - 4.0 * density[1] - density[2]).max(0.0);
    }

    let pdf = GridPdf { lo: s_lo, hi: s_hi, density };
    let deviation = (pdf.mass() - 1.0).abs();
    if deviation > 1e-3 {
        return Err(PdfError::NotNormalized { deviation });
    }
    Ok(pdf)
}

/// Histogram pushforward of a transmit density through x = sqrt(psi(|h s|^2)),
/// valid on non-monotone stretches of psi (mass from every branch
/// accumulates). `bins` controls the output resolution; the fine integration
/// grid uses at least 1e5 points. The result is normalized exactly.
pub fn pushforward_input_to_output(
    fs: &GridPdf,
    model: &EhModel,
    h_mag: f64,
    bins: usize,
) -> Result<GridPdf, PdfError> {
    if !(h_mag > 0.0) {
        return Err(PdfError::BadParameter { name: "h_mag", value: h_mag });
    }
    let rho_top_w = (h_mag * fs.hi()).powi(2);
    let rho_max_w = model.rho_max_watts();
    if rho_top_w > rho_max_w * (1.0 + 1e-9) {
        return Err(PdfError::Model(EhError::Breakdown {
            rho: rho_top_w / model.rho_unit().watts_per_unit(),
            rho_max: model.rho_max(),
        }));
    }

    let n_fine = {
        let want = 100_001.max(25 * bins + 1);
        if want % 2 == 0 {
            want + 1
        } else {
            want
        }
    };
    let fine_step = (fs.hi() - fs.lo()) / (n_fine - 1) as f64;
    let mut xs = Vec::with_capacity(n_fine);
    for j in 0..n_fine {
        let s = if j == n_fine - 1 { fs.hi() } else { fs.lo() + j as f64 * fine_step };
        let rho_w = (h_mag * s).powi(2).min(rho_max_w);
        xs.push(model.eval_watts(rho_w)?.sqrt());
    }

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in &xs {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
    }
    if x_max - x_min < 1e-12 * x_max.max(1e-30) {
        // effectively deterministic output
        let pad = x_max.max(1e-30) * 1e-9;
        let lo = (x_min - pad).max(0.0);
        return GridPdf::spike(lo, x_max + pad, bins.max(3) | 1, x_max);
    }

    // interval-overlap deposit: each fine s-interval carries its trapezoid
    // mass, spread uniformly over its image [x_j, x_{j+1}] and split across
    // the node cells it overlaps. Point deposits would leave sawtooth noise
    // wherever only a couple of intervals land per cell.
    let m = (bins.max(3)) | 1; // force odd
    let step = (x_max - x_min) / (m - 1) as f64;
    let fs_vals: Vec<f64> = (0..n_fine)
        .map(|j| {
            let s = if j == n_fine - 1 { fs.hi() } else { fs.lo() + j as f64 * fine_step };
            fs.value_at(s)
        })
        .collect();
    let mut node_mass = vec![0.0f64; m];
    // node i owns the cell [x_min + (i - 1/2) step, x_min + (i + 1/2) step]
    let cell_index = |x: f64| -> usize {
        (((x - x_min) / step + 0.5).floor().max(0.0) as usize).min(m - 1)
    };
    for j in 0..n_fine - 1 {
        let mass = 0.5 * (fs_vals[j] + fs_vals[j + 1]) * fine_step;
        if mass <= 0.0 {
            continue;
        }
        let (a, b) = if xs[j] <= xs[j + 1] { (xs[j], xs[j + 1]) } else { (xs[j + 1], xs[j]) };
        let (ia, ib) = (cell_index(a), cell_index(b));
        if ia == ib || b - a < 1e-300 {
            node_mass[ia] += mass;
            continue;
        }
        let inv_len = 1.0 / (b - a);
        for i in ia..=ib {
            let cell_lo = x_min + (i as f64 - 0.5) * step;
            let cell_hi = cell_lo + step;
            let overlap = (b.min(cell_hi) - a.max(cell_lo)).max(0.0);
            node_mass[i] += mass * overlap * inv_len;
        }
    }
    let avg: Vec<f64> = node_mass
        .iter()
        .enumerate()
        .map(|(i, &mass)| {
            let cell = if i == 0 || i == m - 1 { step / 2.0 } else { step };
            (mass / cell).max(0.0)
        })
        .collect();
    // deconvolve cell averages into node values (avg = f + h^2 f''/24 + ...);
    // without this the stair pattern biases the Simpson mass wherever the
    // density changes fast across cells
    let mut density = avg.clone();
    for i in 1..m - 1 {
        // the first/last cells are half-width, so the curvature stencil next
        // to them goes one-sided over full cells
        let dd = if i == 1 && m >= 5 {
            avg[1] - 2.0 * avg[2] + avg[3]
        } else if i == m - 2 && m >= 5 {
            avg[m - 4] - 2.0 * avg[m - 3] + avg[m - 2]
        } else {
            avg[i - 1] - 2.0 * avg[i] + avg[i + 1]
        };
        density[i] = (avg[i] - dd / 24.0).max(0.0);
    }
    density[0] = ((4.0 * avg[0] - density[1]) / 3.0).max(0.0);
    density[m - 1] = ((4.0 * avg[m - 1] - density[m - 2]) / 3.0).max(0.0);
    let mut pdf = GridPdf { lo: x_min, hi: x_max, density };
    pdf.normalize();
    Ok(pdf)
}

/// Truncated-Gaussian transmit baseline: a normal with mean a_bar/2 and
/// standard deviation sigma_s restricted to [0, a_bar] and renormalized.
pub fn truncated_gaussian_pdf(a_bar: f64, sigma_s: f64, m: usize) -> Result<GridPdf, PdfError> {
    if !(a_bar > 0.0) {
        return Err(PdfError::BadParameter { name: "a_bar", value: a_bar });
    }
    if !(sigma_s > 0.0) {
        return Err(PdfError::BadParameter { name: "sigma_s", value: sigma_s });
    }
    let n = m.max(3) | 1;
    let step = a_bar / (n - 1) as f64;
    let center = (n - 1) as f64 / 2.0;
    // distances taken in index space so the sampled density is exactly
    // symmetric about a_bar/2
    let density: Vec<f64> = (0..n)
        .map(|i| {
            let u = (i as f64 - center) * step / sigma_s;
            (-0.5 * u * u).exp()
        })
        .collect();
    let mut pdf = GridPdf { lo: 0.0, hi: a_bar, density };
    pdf.normalize();
    Ok(pdf)
}
