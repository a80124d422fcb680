//! Progressive view sampling.
//!
//! Every sampler draws a *deviation fraction* `x ∈ [0, 1]` per axis from a
//! time-dependent distribution and places the angle at `center ± x ·
//! half_range`, where the side is chosen by a separate uniform draw weighted
//! by the width of each side of the global range. Early in training the beta
//! distribution keeps `x` small, so cameras stay near the in-boundary box;
//! past the uniform point `t_u` the deviation is uniform and the pose is
//! uniform over the global ranges.
//!
//! The module holds no RNG: callers pass the uniform draws in.

mod deviation;

pub use deviation::{BetaTable, Deviation, SIMPSON_PANELS};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Closed box of azimuth/elevation angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBox {
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl AngleBox {
    pub const fn new(theta_min: f64, theta_max: f64, phi_min: f64, phi_max: f64) -> Self {
        Self {
            theta_min,
            theta_max,
            phi_min,
            phi_max,
        }
    }

    /// The frontal in-boundary box: θ ∈ [60, 120], φ ∈ [−30, 30].
    pub const fn in_boundary_default() -> Self {
        Self::new(60.0, 120.0, -30.0, 30.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.theta_min + self.theta_max),
            0.5 * (self.phi_min + self.phi_max),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.theta_min <= self.theta_max
            && self.phi_min <= self.phi_max
            && self.phi_min >= -90.0
            && self.phi_max <= 90.0
    }

    pub fn contains(&self, theta: f64, phi: f64) -> bool {
        let eps = 1e-9;
        let theta = wrap_into(theta, self.theta_min);
        theta >= self.theta_min - eps
            && theta <= self.theta_max + eps
            && phi >= self.phi_min - eps
            && phi <= self.phi_max + eps
    }
}

impl Default for AngleBox {
    fn default() -> Self {
        Self::in_boundary_default()
    }
}

/// Shifts `theta` by whole turns into `[lo, lo + 360)`.
fn wrap_into(theta: f64, lo: f64) -> f64 {
    lo + (theta - lo).rem_euclid(360.0)
}

/// Normalizes an azimuth to `[0, 360)`.
pub fn normalize_azimuth(theta: f64) -> f64 {
    let t = theta.rem_euclid(360.0);
    if t >= 360.0 {
        0.0
    } else {
        t
    }
}

/// `δ_R`: whether a pose lies in the (closed) in-boundary box.
pub fn is_ib(theta: f64, phi: f64, bounds: &AngleBox) -> bool {
    bounds.contains(theta, phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgvsParams {
    pub alpha0: f64,
    pub beta0: f64,
    /// Uniform point; defaults to `0.3 · t_total`.
    pub t_u: f64,
    pub t_total: f64,
    pub global_theta: (f64, f64),
    pub global_phi: (f64, f64),
    pub ib_center: (f64, f64),
}

impl PgvsParams {
    pub fn for_total(t_total: usize) -> Self {
        Self {
            t_u: 0.3 * t_total as f64,
            t_total: t_total as f64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err("alpha0 and beta0 must be positive".into());
        }
        if !(self.t_u > 0.0 && self.t_u <= self.t_total) {
            return Err("t_u must lie in (0, t_total]".into());
        }
        let (t0, t1) = self.global_theta;
        let (p0, p1) = self.global_phi;
        if !(t0 < t1 && p0 < p1) {
            return Err("global ranges must be nondegenerate".into());
        }
        if !(t0..=t1).contains(&self.ib_center.0) || !(p0..=p1).contains(&self.ib_center.1) {
            return Err("ib_center must lie inside the global ranges".into());
        }
        Ok(())
    }
}

impl Default for PgvsParams {
    fn default() -> Self {
        Self {
            alpha0: 2.0,
            beta0: 8.0,
            t_u: 1500.0,
            t_total: 5000.0,
            global_theta: (-90.0, 270.0),
            global_phi: (-30.0, 45.0),
            ib_center: (90.0, 0.0),
        }
    }
}

/// Uniform draws for one pose: `u_*` feed the inverse CDF, `side_*` pick
/// the side of the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewDraw {
    pub u_theta: f64,
    pub u_phi: f64,
    pub side_theta: f64,
    pub side_phi: f64,
}

impl ViewDraw {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            u_theta: rng.gen(),
            u_phi: rng.gen(),
            side_theta: rng.gen(),
            side_phi: rng.gen(),
        }
    }
}

/// `(α(t), β(t))` of the progressive schedule: linear decay from
/// `(α0 + 1, β0 + 1)` to `(1, 1)` at `t_u`, constant after.
pub fn alpha_beta(t: f64, p: &PgvsParams) -> (f64, f64) {
    if t >= p.t_u {
        return (1.0, 1.0);
    }
    (
        p.alpha0 + 1.0 - p.alpha0 / p.t_u * t,
        p.beta0 + 1.0 - p.beta0 / p.t_u * t,
    )
}

/// The progressive sampler's deviation distribution at iteration `t`.
pub fn pgvs_deviation(t: f64, p: &PgvsParams) -> Deviation {
    if t >= p.t_u {
        return Deviation::Uniform;
    }
    let (a, b) = alpha_beta(t, p);
    Deviation::Beta(BetaTable::new(a, b))
}

pub fn pgvs_pdf(x: f64, t: f64, p: &PgvsParams) -> f64 {
    pgvs_deviation(t, p).pdf(x)
}

/// Places deviation fractions on the global ranges around the IB center.
pub fn place(x_theta: f64, x_phi: f64, draw: &ViewDraw, p: &PgvsParams) -> (f64, f64) {
    let axis = |x: f64, side: f64, center: f64, (lo, hi): (f64, f64)| {
        let positive_share = (hi - center) / (hi - lo);
        let angle = if side < positive_share {
            center + x * (hi - center)
        } else {
            center - x * (center - lo)
        };
        angle.clamp(lo, hi)
    };
    (
        axis(x_theta, draw.side_theta, p.ib_center.0, p.global_theta),
        axis(x_phi, draw.side_phi, p.ib_center.1, p.global_phi),
    )
}

/// Draws a pose from a deviation distribution.
pub fn sample_with(dev: &Deviation, draw: &ViewDraw, p: &PgvsParams) -> (f64, f64) {
    place(dev.inverse_cdf(draw.u_theta), dev.inverse_cdf(draw.u_phi), draw, p)
}

/// Progressive global view sampling at iteration `t`.
pub fn pgvs_sample(t: f64, p: &PgvsParams, draw: &ViewDraw) -> (f64, f64) {
    sample_with(&pgvs_deviation(t, p), draw, p)
}

/// `(α, β)` of the moving-beta ablation: the two parameters swap their
/// initial values linearly over `[0, t_u]`.
pub fn moving_alpha_beta(t: f64, p: &PgvsParams) -> (f64, f64) {
    let s = (t / p.t_u).clamp(0.0, 1.0);
    let (a0, b0) = (p.alpha0 + 1.0, p.beta0 + 1.0);
    (a0 + (b0 - a0) * s, b0 + (a0 - b0) * s)
}

pub fn moving_beta_deviation(t: f64, p: &PgvsParams) -> Deviation {
    if t >= p.t_u {
        return Deviation::Uniform;
    }
    let (a, b) = moving_alpha_beta(t, p);
    Deviation::Beta(BetaTable::new(a, b))
}

pub fn moving_beta_sample(t: f64, p: &PgvsParams, draw: &ViewDraw) -> (f64, f64) {
    sample_with(&moving_beta_deviation(t, p), draw, p)
}

/// Index of the interval carrying mass `r` at iteration `t`.
pub fn active_interval(t: f64, p: &PgvsParams, n_intervals: usize) -> usize {
    (((t / p.t_u).max(0.0) * n_intervals as f64).floor() as usize).min(n_intervals - 1)
}

/// Discrete-accumulation ablation: `n_intervals` equal slices of `[0, 1]`;
/// the active slice (advancing with `t`) holds mass `r`, the rest share
/// `1 − r` equally. Uniform after `t_u`.
pub fn discrete_accum_deviation(t: f64, p: &PgvsParams, r: f64, n_intervals: usize) -> Deviation {
    assert!(r > 0.0 && r < 1.0, "r must lie in (0, 1)");
    assert!(n_intervals >= 2, "need at least two intervals");
    if t >= p.t_u {
        return Deviation::Uniform;
    }
    let active = active_interval(t, p, n_intervals);
    let rest = (1.0 - r) / (n_intervals - 1) as f64;
    let masses = (0..n_intervals)
        .map(|i| if i == active { r } else { rest })
        .collect();
    Deviation::piecewise(masses)
}

pub fn discrete_accum_sample(
    t: f64,
    p: &PgvsParams,
    r: f64,
    n_intervals: usize,
    draw: &ViewDraw,
) -> (f64, f64) {
    sample_with(&discrete_accum_deviation(t, p, r, n_intervals), draw, p)
}

/// Which sampler drives training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplerKind {
    #[default]
    Progressive,
    MovingBeta,
    DiscreteAccumulation {
        r: f64,
        n_intervals: usize,
    },
    Uniform,
}

impl SamplerKind {
    pub fn deviation(&self, t: f64, p: &PgvsParams) -> Deviation {
        match *self {
            SamplerKind::Progressive => pgvs_deviation(t, p),
            SamplerKind::MovingBeta => moving_beta_deviation(t, p),
            SamplerKind::DiscreteAccumulation { r, n_intervals } => {
                discrete_accum_deviation(t, p, r, n_intervals)
            }
            SamplerKind::Uniform => Deviation::Uniform,
        }
    }

    pub fn sample(&self, t: f64, p: &PgvsParams, draw: &ViewDraw) -> (f64, f64) {
        sample_with(&self.deviation(t, p), draw, p)
    }
}
