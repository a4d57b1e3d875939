//! Piecewise non-linear energy-harvesting transfer function `psi(rho)`:
//! ordered 5-parameter logistic segments with alternating monotonicity,
//! continuity coupling between segments, and a hard breakdown bound at
//! `rho_max`. Covers evaluation, the maximum harvestable power over a capped
//! input range, the closed-form first-segment inverse and JSON persistence.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EhError {
    #[error("input power {rho} exceeds breakdown bound {rho_max} (model units)")]
    Breakdown { rho: f64, rho_max: f64 },
    #[error("input power {rho} is negative")]
    NegativeInput { rho: f64 },
    #[error("model invariant violated: {0}")]
    Invariant(String),
    #[error("target power {target} W outside invertible range [0, {max} W] of the first segment")]
    InvertRange { target: f64, max: f64 },
    #[error("model file schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("model file i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Unit of the logistic argument rho. Harvested power is always in watts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoUnit {
    MilliWatt,
    Watt,
}

impl RhoUnit {
    /// Watts per one model unit of rho.
    pub fn watts_per_unit(self) -> f64 {
        match self {
            RhoUnit::MilliWatt => 1e-3,
            RhoUnit::Watt => 1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self, EhError> {
        match s {
            "mW" => Ok(RhoUnit::MilliWatt),
            "W" => Ok(RhoUnit::Watt),
            other => Err(EhError::Invariant(format!(
                "units.rho must be \"mW\" or \"W\", got \"{other}\""
            ))),
        }
    }
}

impl fmt::Display for RhoUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhoUnit::MilliWatt => "mW",
            RhoUnit::Watt => "W",
        })
    }
}

/// Shape parameters of one logistic segment (the left endpoint power and the
/// segment boundaries are derived during model construction).
#[derive(Debug, Clone, Copy)]
pub struct SegmentParams {
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

/// One monotone 5-parameter logistic segment of the transfer function:
/// `phi_n(rho) = B + (Phi - B) * (1 + theta (rho - rho_lo)^alpha)^(-beta)`.
/// Evaluation at `rho_lo` gives exactly `phi`; the segment tends to `b`
/// as rho grows, so it is strictly increasing iff `b > phi`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticSegment {
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// Left-endpoint harvested power, derived from the previous segment.
    pub phi: f64,
}

impl LogisticSegment {
    /// Evaluate at `rho` (model units). Does not range-check.
    pub fn eval(&self, rho: f64) -> f64 {
        let u = rho - self.rho_lo;
        self.b + (self.phi - self.b) * (1.0 + self.theta * u.powf(self.alpha)).powf(-self.beta)
    }

    pub fn is_increasing(&self) -> bool {
        self.b > self.phi
    }
}

/// The full piecewise transfer function on [0, rho_max].
#[derive(Debug, Clone)]
pub struct EhModel {
    segments: Vec<LogisticSegment>,
    rho_unit: RhoUnit,
}

impl EhModel {
    /// Build a model from per-segment shape parameters, interior breakpoints
    /// and the breakdown bound, validating every structural invariant:
    /// boundaries partition [0, rho_max], left-endpoint powers chain
    /// continuously with `Phi_1 = 0`, and segments alternate strictly
    /// increasing/decreasing starting with increasing.
    pub fn new(
        params: &[SegmentParams],
        breakpoints: &[f64],
        rho_max: f64,
        rho_unit: RhoUnit,
    ) -> Result<Self, EhError> {
        if params.is_empty() {
            return Err(EhError::Invariant("model needs at least one segment".into()));
        }
        if breakpoints.len() + 1 != params.len() {
            return Err(EhError::Invariant(format!(
                "{} segments require {} breakpoints, got {}",
                params.len(),
                params.len() - 1,
                breakpoints.len()
            )));
        }
        if !rho_max.is_finite() || rho_max <= 0.0 {
            return Err(EhError::Invariant(format!("rho_max must be positive, got {rho_max}")));
        }
        let mut bounds = Vec::with_capacity(params.len() + 1);
        bounds.push(0.0);
        bounds.extend_from_slice(breakpoints);
        bounds.push(rho_max);
        for w in bounds.windows(2) {
            if !(w[0] < w[1]) {
                return Err(EhError::Invariant(format!(
                    "segment boundaries must be strictly ascending: rho_lo {} >= rho_hi {}",
                    w[0], w[1]
                )));
            }
        }

        let mut segments = Vec::with_capacity(params.len());
        let mut phi = 0.0; // Phi_1 = 0
        for (n, p) in params.iter().enumerate() {
            for (name, v) in [("alpha", p.alpha), ("beta", p.beta), ("theta", p.theta)] {
                if !v.is_finite() || v <= 0.0 {
                    return Err(EhError::Invariant(format!(
                        "segment {}: {name} must be positive, got {v}",
                        n + 1
                    )));
                }
            }
            if !p.b.is_finite() {
                return Err(EhError::Invariant(format!("segment {}: B must be finite", n + 1)));
            }
            let seg = LogisticSegment {
                b: p.b,
                alpha: p.alpha,
                beta: p.beta,
                theta: p.theta,
                rho_lo: bounds[n],
                rho_hi: bounds[n + 1],
                phi,
            };
            let want_increasing = n % 2 == 0;
            if seg.is_increasing() != want_increasing || seg.b == seg.phi {
                return Err(EhError::Invariant(format!(
                    "segment {} must be strictly {} (B = {}, Phi = {})",
                    n + 1,
                    if want_increasing { "increasing" } else { "decreasing" },
                    seg.b,
                    seg.phi
                )));
            }
            phi = seg.eval(seg.rho_hi);
            segments.push(seg);
        }
        Ok(Self { segments, rho_unit })
    }

    pub fn segments(&self) -> &[LogisticSegment] {
        &self.segments
    }

    pub fn rho_unit(&self) -> RhoUnit {
        self.rho_unit
    }

    /// Breakdown bound in model units.
    pub fn rho_max(&self) -> f64 {
        self.segments.last().unwrap().rho_hi
    }

    /// Breakdown bound in watts.
    pub fn rho_max_watts(&self) -> f64 {
        self.rho_max() * self.rho_unit.watts_per_unit()
    }

    /// Locate the segment owning `rho`: boundaries belong to the segment on
    /// their right, except rho_max which belongs to the last segment.
    fn segment_index(&self, rho: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.rho_hi <= rho);
        idx.min(self.segments.len() - 1)
    }

    /// Harvested power (watts) for input power `rho` in model units.
    /// Inputs above `rho_max` signal diode breakdown and are a hard error.
    pub fn eval(&self, rho: f64) -> Result<f64, EhError> {
        if rho < 0.0 || !rho.is_finite() {
            return Err(EhError::NegativeInput { rho });
        }
        if rho > self.rho_max() {
            return Err(EhError::Breakdown { rho, rho_max: self.rho_max() });
        }
        Ok(self.segments[self.segment_index(rho)].eval(rho))
    }

    /// Harvested power (watts) for received power `rho_w` in watts.
    pub fn eval_watts(&self, rho_w: f64) -> Result<f64, EhError> {
        self.eval(rho_w / self.rho_unit.watts_per_unit())
            .map_err(|e| match e {
                EhError::Breakdown { rho, rho_max } => EhError::Breakdown {
                    rho: rho * self.rho_unit.watts_per_unit(),
                    rho_max: rho_max * self.rho_unit.watts_per_unit(),
                },
                other => other,
            })
    }

    /// Maximum of psi over [0, rho_cap] (model units). Each segment is
    /// monotone, so the maximum is attained at a segment boundary or at the
    /// cap itself; caps outside [0, rho_max] are clamped.
    pub fn p_max(&self, rho_cap: f64) -> f64 {
        let cap = rho_cap.clamp(0.0, self.rho_max());
        let mut best = 0.0f64;
        for seg in &self.segments {
            if seg.rho_lo >= cap {
                break;
            }
            let right = seg.rho_hi.min(cap);
            best = best.max(seg.eval(right)).max(seg.phi);
        }
        best
    }

    /// Maximum of psi over received powers [0, rho_cap_w] in watts.
    pub fn p_max_watts(&self, rho_cap_w: f64) -> f64 {
        self.p_max(rho_cap_w / self.rho_unit.watts_per_unit())
    }

    /// Value of psi at the right end of the first segment: the largest power
    /// reachable through the increasing first branch.
    pub fn first_segment_peak(&self) -> f64 {
        let s = &self.segments[0];
        s.eval(s.rho_hi)
    }

    /// Unique rho in the first (increasing) segment with psi(rho) = target,
    /// target in watts, via the closed-form 5PL inverse
    /// `rho = [((target-B)/(Phi-B))^(-1/beta) - 1) / theta]^(1/alpha)`.
    /// Returns rho in model units.
    pub fn invert_first_segment(&self, target: f64) -> Result<f64, EhError> {
        let peak = self.first_segment_peak();
        if !(0.0..=peak * (1.0 + 1e-9)).contains(&target) {
            return Err(EhError::InvertRange { target, max: peak });
        }
        let s = &self.segments[0];
        // Phi_1 = 0, so (target - B)/(Phi - B) = 1 - target/B; ln_1p/exp_m1
        // keep precision for targets far below B.
        let ln_r = (-target / s.b).ln_1p();
        let u = ((-ln_r / s.beta).exp_m1() / s.theta).powf(1.0 / s.alpha);
        Ok(u.min(s.rho_hi))
    }

    /// As `invert_first_segment`, returning the received power in watts.
    pub fn invert_first_segment_watts(&self, target: f64) -> Result<f64, EhError> {
        Ok(self.invert_first_segment(target)? * self.rho_unit.watts_per_unit())
    }

    pub fn save(&self, path: &Path) -> Result<(), EhError> {
        let file = ModelFile::from_model(self);
        let text = serde_json::to_string_pretty(&file)?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EhError> {
        let text = fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.into_model()
    }
}

/// On-disk JSON schema. Left-endpoint powers are recomputed on load, so the
/// file carries only free parameters.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    units: UnitsFile,
    rho_max: f64,
    breakpoints: Vec<f64>,
    segments: Vec<SegmentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitsFile {
    rho: String,
    power: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentFile {
    #[serde(rename = "B")]
    b: f64,
    alpha: f64,
    beta: f64,
    theta: f64,
}

impl ModelFile {
    fn from_model(m: &EhModel) -> Self {
        Self {
            units: UnitsFile { rho: m.rho_unit.to_string(), power: "W".into() },
            rho_max: m.rho_max(),
            breakpoints: m.segments[..m.segments.len() - 1]
                .iter()
                .map(|s| s.rho_hi)
                .collect(),
            segments: m
                .segments
                .iter()
                .map(|s| SegmentFile { b: s.b, alpha: s.alpha, beta: s.beta, theta: s.theta })
                .collect(),
        }
    }

    fn into_model(self) -> Result<EhModel, EhError> {
        let rho_unit = RhoUnit::parse(&self.units.rho)?;
        if self.units.power != "W" {
            return Err(EhError::Invariant(format!(
                "units.power must be \"W\", got \"{}\"",
                self.units.power
            )));
        }
        let params: Vec<SegmentParams> = self
            .segments
            .iter()
            .map(|s| SegmentParams { b: s.b, alpha: s.alpha, beta: s.beta, theta: s.theta })
            .collect();
        EhModel::new(&params, &self.breakpoints, self.rho_max, rho_unit)
    }
}
