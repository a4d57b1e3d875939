//! Least-squares fitting of the piecewise logistic transfer function to
//! tabulated (rho, p_h) data: breakpoint detection on smoothed derivatives
//! and per-segment derivative-free simplex descent with seeded multi-start.
//! Continuity is enforced by construction: each segment's left-endpoint
//! power is propagated from the previous fitted segment, never free-fitted.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eh_model::{EhError, EhModel, RhoUnit, SegmentParams};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("fit did not converge within the evaluation budget (best rmse {best_rmse:.3e} W)")]
    NonConvergence { best_rmse: f64, report: Box<FitReport> },
    #[error(transparent)]
    Model(#[from] EhError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One measured or simulated transfer point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSample {
    /// Input power in model units.
    pub rho: f64,
    /// Harvested power in watts.
    pub p_h: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: EhModel,
    /// Root-mean-square residual over all samples, watts.
    pub rmse: f64,
    pub per_segment_rmse: Vec<f64>,
    /// Total objective evaluations across segments and restarts.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_evals_per_restart: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 16, max_evals_per_restart: 20_000, seed: 0 }
    }
}

/// Read `rho,p_h` CSV. Lines starting with `#` and blank lines are skipped;
/// the first data line must be the header.
pub fn read_transfer_csv(path: &Path) -> Result<Vec<TransferSample>, FitError> {
    let text = std::fs::read_to_string(path)?;
    parse_transfer_csv(&text)
}

pub fn parse_transfer_csv(text: &str) -> Result<Vec<TransferSample>, FitError> {
    let mut samples = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line.replace(' ', "") != "rho,p_h" {
                return Err(FitError::Csv {
                    line: idx + 1,
                    message: format!("expected header \"rho,p_h\", got \"{line}\""),
                });
            }
            saw_header = true;
            continue;
        }
        let mut parts = line.split(',');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(FitError::Csv {
                    line: idx + 1,
                    message: format!("expected two comma-separated values, got \"{line}\""),
                })
            }
        };
        let rho: f64 = a.trim().parse().map_err(|e| FitError::Csv {
            line: idx + 1,
            message: format!("bad rho \"{a}\": {e}"),
        })?;
        let p_h: f64 = b.trim().parse().map_err(|e| FitError::Csv {
            line: idx + 1,
            message: format!("bad p_h \"{b}\": {e}"),
        })?;
        if !rho.is_finite() || rho < 0.0 || !p_h.is_finite() || p_h < 0.0 {
            return Err(FitError::Csv {
                line: idx + 1,
                message: format!("values must be finite and non-negative: \"{line}\""),
            });
        }
        samples.push(TransferSample { rho, p_h });
    }
    if !saw_header {
        return Err(FitError::Csv { line: 1, message: "missing \"rho,p_h\" header".into() });
    }
    Ok(samples)
}

fn check_sorted(samples: &[TransferSample]) -> Result<(), FitError> {
    for w in samples.windows(2) {
        if !(w[0].rho < w[1].rho) {
            return Err(FitError::InvalidInput(format!(
                "samples must be strictly ascending in rho: {} then {}",
                w[0].rho, w[1].rho
            )));
        }
    }
    Ok(())
}

/// Interior local extrema of the moving-average-smoothed p_h sequence,
/// reported as rho values in ascending order. The extremum position is
/// refined to the raw-sample extremum inside the smoothing window, which
/// undoes the shift the average introduces at cliff-like peaks. Monotone
/// data yields an empty list.
pub fn detect_breakpoints(samples: &[TransferSample], window: usize) -> Result<Vec<f64>, FitError> {
    if samples.len() < 9 {
        return Err(FitError::InsufficientData(format!(
            "need at least 9 samples, got {}",
            samples.len()
        )));
    }
    if window < 3 || window % 2 == 0 {
        return Err(FitError::InvalidInput(format!(
            "smoothing window must be an odd integer >= 3, got {window}"
        )));
    }
    check_sorted(samples)?;

    let n = samples.len();
    let half = window / 2;
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            samples[lo..=hi].iter().map(|s| s.p_h).sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();

    let scale = smoothed.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let tiny = 1e-14 * scale;

    let mut breaks = Vec::new();
    let mut last_sign = 0i8;
    for i in 0..n - 1 {
        let d = smoothed[i + 1] - smoothed[i];
        let sign = if d > tiny {
            1i8
        } else if d < -tiny {
            -1i8
        } else {
            continue;
        };
        if last_sign != 0 && sign != last_sign {
            // smoothed extremum at index i; refine to the raw extremum
            // within the smoothing window
            let lo = i.saturating_sub(half).max(1);
            let hi = (i + half).min(n - 2);
            let j = (lo..=hi)
                .max_by(|&a, &b| {
                    let (va, vb) = if sign < 0 {
                        (samples[a].p_h, samples[b].p_h)
                    } else {
                        (-samples[a].p_h, -samples[b].p_h)
                    };
                    va.partial_cmp(&vb).unwrap()
                })
                .unwrap();
            let rho = samples[j].rho;
            if breaks.last().map_or(true, |&prev| rho > prev) {
                breaks.push(rho);
            }
        }
        last_sign = sign;
    }
    Ok(breaks)
}

// ---------------------------------------------------------------------------
// Nelder-Mead simplex descent
// ---------------------------------------------------------------------------

struct NmResult {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    converged: bool,
    /// Best objective after each accepted iteration (non-increasing).
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    tol_x: f64,
) -> NmResult {
    let n = x0.len();
    let clean = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        clean(f(x))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let fx0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let mut trace = Vec::new();
    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        trace.push(simplex[0].1);

        let spread = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if spread < tol_x {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> =
            (0..n).map(|d| centroid[d] + (centroid[d] - worst.0[d])).collect();
        let f_r = eval(&reflect, &mut evals);

        if f_r < simplex[0].1 {
            let expand: Vec<f64> =
                (0..n).map(|d| centroid[d] + 2.0 * (centroid[d] - worst.0[d])).collect();
            let f_e = eval(&expand, &mut evals);
            simplex[n] = if f_e < f_r { (expand, f_e) } else { (reflect, f_r) };
        } else if f_r < simplex[n - 1].1 {
            simplex[n] = (reflect, f_r);
        } else {
            let contract: Vec<f64> = if f_r < worst.1 {
                (0..n).map(|d| centroid[d] + 0.5 * (reflect[d] - centroid[d])).collect()
            } else {
                (0..n).map(|d| centroid[d] + 0.5 * (worst.0[d] - centroid[d])).collect()
            };
            let f_c = eval(&contract, &mut evals);
            if f_c < worst.1.min(f_r) {
                simplex[n] = (contract, f_c);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for d in 0..n {
                        v.0[d] = best[d] + 0.5 * (v.0[d] - best[d]);
                    }
                    v.1 = eval(&v.0, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    trace.push(simplex[0].1);
    NmResult { x: simplex[0].0.clone(), f: simplex[0].1, evals, converged, trace }
}

// ---------------------------------------------------------------------------
// Per-segment least squares
// ---------------------------------------------------------------------------

/// Parameter vector in optimizer space: [q, ln alpha, ln beta, ln theta]
/// with B = phi + dir * e^q, which bakes positivity of the shape parameters
/// and the segment direction into the parameterization.
fn decode(x: &[f64], phi: f64, dir: f64) -> SegmentParams {
    SegmentParams {
        b: phi + dir * x[0].exp(),
        alpha: x[1].exp(),
        beta: x[2].exp(),
        theta: x[3].exp(),
    }
}

fn segment_sse(x: &[f64], phi: f64, dir: f64, ln_u: &[f64], ys: &[f64]) -> f64 {
    let p = decode(x, phi, dir);
    if !p.b.is_finite() || !p.alpha.is_finite() || !p.beta.is_finite() || !p.theta.is_finite() {
        return f64::INFINITY;
    }
    let mut sse = 0.0;
    for (&lu, &y) in ln_u.iter().zip(ys) {
        let t = p.theta * (p.alpha * lu).exp();
        let val = p.b + (phi - p.b) * (-p.beta * t.ln_1p()).exp();
        let r = val - y;
        sse += r * r;
    }
    if sse.is_finite() {
        sse
    } else {
        f64::INFINITY
    }
}

struct SegmentFit {
    params: SegmentParams,
    sse: f64,
    evals: usize,
    any_converged: bool,
}

fn fit_segment(
    seg_samples: &[TransferSample],
    rho_lo: f64,
    phi: f64,
    dir: f64,
    opts: &FitOptions,
    rng: &mut ChaCha8Rng,
) -> SegmentFit {
    let ln_u: Vec<f64> = seg_samples.iter().map(|s| (s.rho - rho_lo).ln()).collect();
    let ys: Vec<f64> = seg_samples.iter().map(|s| s.p_h).collect();

    // heuristic start: asymptote slightly past the segment's far end,
    // mid-range shape exponents, theta matched at the segment midpoint
    let tail = &ys[ys.len().saturating_sub(3)..];
    let y_end = tail.iter().sum::<f64>() / tail.len() as f64;
    let amp = (dir * (y_end - phi)).max(1e-12 * y_end.abs().max(1e-30));
    let q0 = (amp * 1.1).ln();
    let (a0, b0) = (1.5f64.ln(), 0.6f64.ln());
    let mid = ys.len() / 2;
    let b_guess = phi + dir * amp * 1.1;
    let r_mid = ((ys[mid] - b_guess) / (phi - b_guess)).clamp(1e-9, 1.0 - 1e-9);
    let t0 = ((r_mid.powf(-1.0 / 0.6) - 1.0) / (seg_samples[mid].rho - rho_lo).powf(1.5))
        .max(1e-12)
        .ln();
    let x0 = vec![q0, a0, b0, t0];

    let mut best: Option<NmResult> = None;
    let mut total_evals = 0usize;
    let mut any_converged = false;
    for restart in 0..opts.restarts.max(1) {
        let start: Vec<f64> = if restart == 0 {
            x0.clone()
        } else {
            x0.iter().map(|&v| v + rng.gen_range(-1.0..1.0)).collect()
        };
        let r = nelder_mead(
            |x| segment_sse(x, phi, dir, &ln_u, &ys),
            &start,
            0.3,
            opts.max_evals_per_restart,
            1e-12,
        );
        total_evals += r.evals;
        any_converged |= r.converged;
        // strict improvement keeps the lowest restart index on ties
        if best.as_ref().map_or(true, |b| r.f < b.f) {
            best = Some(r);
        }
    }
    // polish from the overall best point
    let b = best.unwrap();
    let polished = nelder_mead(
        |x| segment_sse(x, phi, dir, &ln_u, &ys),
        &b.x,
        0.01,
        opts.max_evals_per_restart,
        1e-13,
    );
    total_evals += polished.evals;
    any_converged |= polished.converged;
    let chosen = if polished.f < b.f { polished } else { b };
    SegmentFit {
        params: decode(&chosen.x, phi, dir),
        sse: chosen.f,
        evals: total_evals,
        any_converged,
    }
}

/// Fit segment parameters {B, alpha, beta, theta} to the samples between
/// consecutive breakpoints, propagating continuity left to right. Segment
/// direction alternates starting increasing, matching the model invariant.
/// Deterministic for a fixed `opts.seed`.
pub fn fit_model(
    samples: &[TransferSample],
    breakpoints: &[f64],
    rho_max: f64,
    rho_unit: RhoUnit,
    opts: &FitOptions,
) -> Result<FitReport, FitError> {
    check_sorted(samples)?;
    if !(rho_max > 0.0) {
        return Err(FitError::InvalidInput(format!("rho_max must be positive, got {rho_max}")));
    }
    for w in breakpoints.windows(2) {
        if !(w[0] < w[1]) {
            return Err(FitError::InvalidInput("breakpoints must be strictly ascending".into()));
        }
    }
    if breakpoints.iter().any(|&b| b <= 0.0 || b >= rho_max) {
        return Err(FitError::InvalidInput(format!(
            "breakpoints must lie strictly inside (0, {rho_max})"
        )));
    }
    if samples.iter().any(|s| s.rho > rho_max) {
        return Err(FitError::InvalidInput("samples beyond rho_max".into()));
    }

    let mut bounds = vec![0.0];
    bounds.extend_from_slice(breakpoints);
    bounds.push(rho_max);

    let n_seg = breakpoints.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = Vec::with_capacity(n_seg);
    let mut per_segment_rmse = Vec::with_capacity(n_seg);
    let mut iterations = 0usize;
    let mut total_sse = 0.0;
    let mut total_n = 0usize;
    let mut phi = 0.0;
    let mut all_converged = true;

    for n in 0..n_seg {
        let (lo, hi) = (bounds[n], bounds[n + 1]);
        let last = n == n_seg - 1;
        let seg: Vec<TransferSample> = samples
            .iter()
            .filter(|s| s.rho >= lo && (s.rho < hi || (last && s.rho <= hi)) && s.rho > lo)
            .cloned()
            .collect();
        if seg.len() < 5 {
            return Err(FitError::InsufficientData(format!(
                "segment {} ([{lo}, {hi}]) has {} samples, need at least 5",
                n + 1,
                seg.len()
            )));
        }
        let dir = if n % 2 == 0 { 1.0 } else { -1.0 };
        let fit = fit_segment(&seg, lo, phi, dir, opts, &mut rng);
        iterations += fit.evals;
        all_converged &= fit.any_converged;
        per_segment_rmse.push((fit.sse / seg.len() as f64).sqrt());
        total_sse += fit.sse;
        total_n += seg.len();

        // advance the continuity anchor using the fitted segment
        let seg_model = EhModel::new(&[fit.params], &[], hi - lo, rho_unit)
            .map_err(FitError::Model)?;
        phi = seg_model.eval(hi - lo).expect("in range");
        params.push(fit.params);
    }

    let model = EhModel::new(&params, breakpoints, rho_max, rho_unit)?;
    let rmse = (total_sse / total_n as f64).sqrt();
    let report = FitReport { model, rmse, per_segment_rmse, iterations };
    if all_converged {
        Ok(report)
    } else {
        Err(FitError::NonConvergence { best_rmse: rmse, report: Box::new(report) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eh_model::test_fixtures::reference_model;

    fn synth(model: &EhModel, n: usize) -> Vec<TransferSample> {
        let rho_max = model.rho_max();
        (1..=n)
            .map(|i| {
                let rho = rho_max * i as f64 / n as f64;
                TransferSample { rho, p_h: model.eval(rho).unwrap() }
            })
            .collect()
    }

    #[test]
    fn detect_on_monotone_data_is_empty() {
        let samples: Vec<TransferSample> = (1..=50)
            .map(|i| {
                let rho = i as f64 * 0.02;
                TransferSample { rho, p_h: 1e-4 * rho / (1.0 + rho) }
            })
            .collect();
        assert!(detect_breakpoints(&samples, 5).unwrap().is_empty());
    }

    #[test]
    fn detect_tent_peak() {
        let samples: Vec<TransferSample> = (0..=40)
            .map(|i| {
                let rho = i as f64 * 0.05; // peak at 1.0
                TransferSample { rho, p_h: 1.0 - (rho - 1.0).abs() }
            })
            .collect();
        let breaks = detect_breakpoints(&samples, 5).unwrap();
        assert_eq!(breaks.len(), 1);
        assert!((breaks[0] - 1.0).abs() < 0.05 + 1e-12, "break at {}", breaks[0]);
    }

    #[test]
    fn detect_reference_peak_within_one_grid_step() {
        let model = reference_model();
        let samples = synth(&model, 200);
        let step = model.rho_max() / 200.0;
        let breaks = detect_breakpoints(&samples, 5).unwrap();
        assert_eq!(breaks.len(), 1, "breaks: {breaks:?}");
        assert!((breaks[0] - 1.8).abs() <= step + 1e-12, "break at {}", breaks[0]);
    }

    #[test]
    fn detect_suppresses_single_sample_noise() {
        let mut samples: Vec<TransferSample> = (1..=60)
            .map(|i| {
                let rho = i as f64 * 0.02;
                TransferSample { rho, p_h: 1e-4 * rho / (0.3 + rho) }
            })
            .collect();
        samples[30].p_h *= 1.0005; // one-sample blip on otherwise monotone data
        assert!(detect_breakpoints(&samples, 5).unwrap().is_empty());
    }

    #[test]
    fn detect_validates_inputs() {
        let samples = synth(&reference_model(), 8);
        assert!(matches!(detect_breakpoints(&samples, 5), Err(FitError::InsufficientData(_))));
        let samples = synth(&reference_model(), 20);
        assert!(matches!(detect_breakpoints(&samples, 4), Err(FitError::InvalidInput(_))));
    }

    #[test]
    fn nelder_mead_trace_is_non_increasing() {
        let r = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2),
            &[5.0, 5.0],
            0.5,
            5000,
            1e-12,
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8);
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0], "trace not monotone: {} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn refit_noiseless_reference_data() {
        let model = reference_model();
        let samples = synth(&model, 400);
        let report =
            fit_model(&samples, &[1.8], 2.4, RhoUnit::MilliWatt, &FitOptions::default()).unwrap();
        assert!(report.rmse <= 1e-8, "rmse = {:e}", report.rmse);
        // curve comparison against the generator on a fresh grid
        let mut worst: f64 = 0.0;
        for i in 1..=1000 {
            let rho = 2.4 * i as f64 / 1000.0;
            let d = (report.model.eval(rho).unwrap() - model.eval(rho).unwrap()).abs();
            worst = worst.max(d);
        }
        assert!(worst < 1e-7, "worst curve deviation {worst:e}");
    }

    #[test]
    fn refit_single_segment_roundtrip() {
        let gen = EhModel::new(
            &[SegmentParams { b: 9.0e-5, alpha: 1.2, beta: 0.9, theta: 45.0 }],
            &[],
            2.0,
            RhoUnit::MilliWatt,
        )
        .unwrap();
        let samples = synth(&gen, 120);
        let report =
            fit_model(&samples, &[], 2.0, RhoUnit::MilliWatt, &FitOptions::default()).unwrap();
        assert!(report.rmse <= 1e-9, "rmse = {:e}", report.rmse);
        assert_eq!(report.per_segment_rmse.len(), 1);
    }

    #[test]
    fn refit_with_uniform_noise() {
        let model = reference_model();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let samples: Vec<TransferSample> = synth(&model, 400)
            .into_iter()
            .map(|s| TransferSample {
                rho: s.rho,
                p_h: (s.p_h + rng.gen_range(-1e-7..1e-7)).max(0.0),
            })
            .collect();
        let report =
            fit_model(&samples, &[1.8], 2.4, RhoUnit::MilliWatt, &FitOptions::default()).unwrap();
        assert!(report.rmse <= 3e-7, "rmse = {:e}", report.rmse);
    }

    #[test]
    fn fit_is_reproducible_for_fixed_seed() {
        let model = reference_model();
        let samples = synth(&model, 120);
        let opts = FitOptions { restarts: 4, ..Default::default() };
        let a = fit_model(&samples, &[1.8], 2.4, RhoUnit::MilliWatt, &opts).unwrap();
        let b = fit_model(&samples, &[1.8], 2.4, RhoUnit::MilliWatt, &opts).unwrap();
        assert_eq!(a.rmse.to_bits(), b.rmse.to_bits());
        assert_eq!(a.iterations, b.iterations);
        for (sa, sb) in a.model.segments().iter().zip(b.model.segments()) {
            assert_eq!(sa.b.to_bits(), sb.b.to_bits());
            assert_eq!(sa.theta.to_bits(), sb.theta.to_bits());
        }
    }

    #[test]
    fn fit_rejects_sparse_segments() {
        let model = reference_model();
        let samples = synth(&model, 12); // only ~3 samples beyond 1.8
        assert!(matches!(
            fit_model(&samples, &[1.8], 2.4, RhoUnit::MilliWatt, &FitOptions::default()),
            Err(FitError::InsufficientData(_))
        ));
    }

    #[test]
    fn csv_parsing_and_errors() {
        let good = "# comment\nrho,p_h\n0.1,2e-5\n0.2,3e-5\n";
        let samples = parse_transfer_csv(good).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1], TransferSample { rho: 0.2, p_h: 3e-5 });

        let bad = "rho,p_h\n0.1,2e-5\noops\n";
        match parse_transfer_csv(bad) {
            Err(FitError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected csv error, got {other:?}"),
        }
        assert!(matches!(
            parse_transfer_csv("0.1,2e-5\n"),
            Err(FitError::Csv { line: 1, .. })
        ));
    }
}
