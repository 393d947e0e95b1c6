//! Band degeneracies: search, local classification, beta continuation and
//! density of states.

mod classify;
mod critical;
mod dos;
mod optimize;
mod search;
mod sweep;

pub use classify::classify;
pub use critical::{critical_beta, CriticalBeta};
pub use dos::{dos_histogram, Dos};
pub use optimize::nelder_mead;
pub use search::{find_degeneracies, pair_gap, refine, SearchRegion};
pub use sweep::{tilt_transition_scan, ConeTrajectory, EventKind, TrajectoryEvent};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{bands_at, Polarization};
use crate::error::{Error, Result};
use crate::greens::{GreenMode, K0};
use crate::lattice::{LatticeSpec, Vec2};

/// Numerical settings shared by every operation in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionConfig {
    pub mode: GreenMode,
    /// Largest gap that counts as a degeneracy (detuning units).
    pub eps_deg: f64,
    /// Coarse scan points per axis.
    pub grid_n: usize,
    /// Refinement stops once the simplex is smaller than this (units of |b1|).
    pub refine_tol: f64,
    /// Degeneracies closer than this are merged (units of |b1|).
    pub merge_tol: f64,
    /// Ray sampling radii (units of |b1|).
    pub fit_radius: f64,
    pub fit_radius_min: f64,
    pub n_directions: usize,
    pub n_radii: usize,
    /// `tau_t`: half-width of the type-III window around `t = 1`.
    pub tilt_tolerance: f64,
    pub linear_window: f64,
    pub quadratic_window: f64,
    pub max_condition: f64,
    /// Retarded mode ignores degeneracies with `|k| < k0 (1 + margin)`, where
    /// the radiative band sweeps steeply through the others.
    pub light_line_margin: f64,
    pub beta_step: f64,
    /// Smallest continuation step reached by halving before a cone is lost.
    pub beta_step_min: f64,
    /// Final bracket width of `critical_beta`.
    pub critical_tol: f64,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        Self {
            mode: GreenMode::Retarded,
            eps_deg: 1e-3,
            grid_n: 48,
            refine_tol: 1e-9,
            merge_tol: 1e-4,
            fit_radius: 0.05,
            fit_radius_min: 0.005,
            n_directions: 16,
            n_radii: 12,
            tilt_tolerance: 0.05,
            linear_window: 0.15,
            quadratic_window: 0.25,
            max_condition: 1e8,
            light_line_margin: 0.25,
            beta_step: 0.005,
            beta_step_min: 0.005 / 8.0,
            critical_tol: 1e-10,
        }
    }
}

impl DispersionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_deg", self.eps_deg),
            ("refine_tol", self.refine_tol),
            ("merge_tol", self.merge_tol),
            ("fit_radius", self.fit_radius),
            ("fit_radius_min", self.fit_radius_min),
            ("tilt_tolerance", self.tilt_tolerance),
            ("linear_window", self.linear_window),
            ("quadratic_window", self.quadratic_window),
            ("max_condition", self.max_condition),
            ("beta_step", self.beta_step),
            ("beta_step_min", self.beta_step_min),
            ("critical_tol", self.critical_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.light_line_margin >= 0.0 && self.light_line_margin.is_finite()) {
            return Err(Error::InvalidArgument("light_line_margin must be non-negative".into()));
        }
        if self.fit_radius_min >= self.fit_radius {
            return Err(Error::InvalidArgument(
                "fit_radius_min must be smaller than fit_radius".into(),
            ));
        }
        if self.grid_n < 2 || self.n_directions < 4 || self.n_radii < 3 {
            return Err(Error::InvalidArgument(
                "grid_n >= 2, n_directions >= 4 and n_radii >= 3 are required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    #[serde(rename = "dirac_I")]
    DiracI,
    #[serde(rename = "dirac_II")]
    DiracII,
    #[serde(rename = "dirac_III")]
    DiracIII,
    #[serde(rename = "semi_dirac")]
    SemiDirac,
    #[serde(rename = "quadratic")]
    Quadratic,
    #[serde(rename = "gapped")]
    Gapped,
}

impl ConeKind {
    pub fn is_dirac(self) -> bool {
        matches!(self, ConeKind::DiracI | ConeKind::DiracII | ConeKind::DiracIII)
    }

    pub fn label(self) -> &'static str {
        match self {
            ConeKind::DiracI => "dirac_I",
            ConeKind::DiracII => "dirac_II",
            ConeKind::DiracIII => "dirac_III",
            ConeKind::SemiDirac => "semi_dirac",
            ConeKind::Quadratic => "quadratic",
            ConeKind::Gapped => "gapped",
        }
    }
}

/// Root-mean-square residuals of the local fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResiduals {
    /// Band-average fit, detuning units.
    pub tilt: f64,
    /// Relative residual of the gap^2 fit.
    pub velocity: f64,
    /// Log-log regressions along the two principal axes.
    pub exponents: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: ConeKind,
    /// Gradient of the band average at `k_star`.
    pub tilt: Vec2,
    /// `A` with `gap^2 = 4 q.A.q`, row-major.
    pub velocity_matrix: [[f64; 2]; 2],
    pub tilt_ratio: f64,
    /// Unit principal directions; `exponents[i]` belongs to `principal_axes[i]`.
    pub principal_axes: [Vec2; 2],
    pub exponents: [f64; 2],
    pub residuals: FitResiduals,
    /// Second derivative of the upper band along each principal axis.
    pub top_curvature: [f64; 2],
    /// Smallest and largest sampling radius actually used.
    pub fit_radii: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub k_star: Vec2,
    pub block: Polarization,
    pub band_pair: [usize; 2],
    pub gap_min: f64,
    pub beta: f64,
    pub d0: f64,
    #[serde(flatten)]
    pub classification: Option<Classification>,
}

impl DegeneracyReport {
    pub fn kind(&self) -> Option<ConeKind> {
        self.classification.as_ref().map(|c| c.kind)
    }

    pub fn tilt_ratio(&self) -> Option<f64> {
        self.classification.as_ref().map(|c| c.tilt_ratio)
    }
}

/// Whether a degeneracy at `k` is outside the excluded light-line region.
pub(crate) fn admissible(spec: &LatticeSpec, k: Vec2, cfg: &DispersionConfig) -> bool {
    cfg.mode == GreenMode::Quasistatic
        || spec.reciprocal().reduce_to_bz(k).norm() >= K0 * (1.0 + cfg.light_line_margin)
}

pub(crate) fn block_size(block: Polarization) -> usize {
    match block {
        Polarization::OutOfPlane => 2,
        Polarization::InPlane => 4,
    }
}

pub(crate) fn check_pair(block: Polarization, pair: [usize; 2]) -> Result<()> {
    let n = block_size(block);
    if pair[0] >= n || pair[1] >= n || pair[0] == pair[1] {
        return Err(Error::InvalidArgument(format!(
            "band pair {pair:?} invalid for a block of {n} bands"
        )));
    }
    Ok(())
}

/// The two eigenvalues of `pair` within `block`, bands ordered by detuning.
pub(crate) fn pair_eigenvalues(
    spec: &LatticeSpec,
    k: Vec2,
    mode: GreenMode,
    block: Polarization,
    pair: [usize; 2],
) -> Result<(Complex64, Complex64)> {
    let set = bands_at(spec, k, mode)?;
    let vals: Vec<Complex64> = set.block(block).map(|b| b.eigenvalue()).collect();
    let (i, j) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
    Ok((vals[i], vals[j]))
}
