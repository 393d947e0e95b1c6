//! Geometry of the anisotropic two-site honeycomb lattice.
//!
//! The Bravais lattice is fixed by the honeycomb nearest-neighbour distance
//! `d0`; only the position of site B inside the unit cell moves with the
//! anisotropy `beta = d_intra / d_inter`. All lengths are in units of the
//! emitter wavelength, so wavevectors are in units of `1/lambda_a`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

pub const BETA_MIN: f64 = 0.5;
pub const BETA_MAX: f64 = 1.7321;

/// Two-site lattice. Site A sits at the origin, site B at `basis_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub d0: f64,
    pub beta: f64,
    pub a1: Vec2,
    pub a2: Vec2,
    pub d_intra: f64,
    pub d_inter: f64,
    pub basis_offset: Vec2,
}

/// Intracell distance that realises `beta` inside the fixed unit cell.
///
/// This is the root of `(b^2 - 1) t^2 - 3 b^2 d0 t + 3 b^2 d0^2 = 0` that is
/// continuous with `t = d0` at `beta = 1`, written in a form without the
/// cancellation at `beta -> 1`.
pub fn solve_intracell_distance(d0: f64, beta: f64) -> Result<f64> {
    check_spacing(d0)?;
    check_beta(beta)?;
    let disc = (3.0 * (4.0 - beta * beta)).sqrt();
    Ok(6.0 * beta * d0 / (3.0 * beta + disc))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(BETA_MIN..=BETA_MAX).contains(&beta) {
        return Err(Error::BetaOutOfRange(beta));
    }
    Ok(())
}

fn check_spacing(d0: f64) -> Result<()> {
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(Error::InvalidSpacing(d0));
    }
    Ok(())
}

impl LatticeSpec {
    pub fn new(d0: f64, beta: f64) -> Result<Self> {
        let d_intra = solve_intracell_distance(d0, beta)?;
        let (a1, a2) = primitive_vectors(d0);
        let d_inter = ((1.5 * d0 - d_intra).powi(2) + 0.75 * d0 * d0).sqrt();
        Ok(Self {
            d0,
            beta,
            a1,
            a2,
            d_intra,
            d_inter,
            basis_offset: Vec2::new(-d_intra, 0.0),
        })
    }

    pub fn honeycomb(d0: f64) -> Result<Self> {
        Self::new(d0, 1.0)
    }

    /// Same Bravais lattice with a different anisotropy.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.d0, beta)
    }

    pub fn lattice_constant(&self) -> f64 {
        self.a1.norm()
    }

    pub fn cell_area(&self) -> f64 {
        (self.a1.x * self.a2.y - self.a1.y * self.a2.x).abs()
    }

    pub fn lattice_vector(&self, n1: i64, n2: i64) -> Vec2 {
        self.a1 * n1 as f64 + self.a2 * n2 as f64
    }

    pub fn reciprocal(&self) -> ReciprocalSpec {
        ReciprocalSpec::from_lattice(self)
    }
}

/// `a1/2 = (d0 sqrt(3) / 2) (sqrt(3), +-1)`, independent of beta.
fn primitive_vectors(d0: f64) -> (Vec2, Vec2) {
    let s = d0 * 3f64.sqrt() / 2.0;
    (
        Vec2::new(s * 3f64.sqrt(), s),
        Vec2::new(s * 3f64.sqrt(), -s),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryPoint {
    Gamma,
    M,
    K,
    KPrime,
    /// Image of M on the `k_x = 0` axis, `(b1 - b2) / 2`.
    MVertical,
    /// Image of K' on the `k_x = 0` axis, `(b1 - b2) / 3`.
    KVertical,
}

impl SymmetryPoint {
    pub fn parse(label: &str) -> Option<Self> {
        Some(match label {
            "G" | "Gamma" | "Γ" => SymmetryPoint::Gamma,
            "M" => SymmetryPoint::M,
            "K" => SymmetryPoint::K,
            "Kp" | "K'" | "K′" => SymmetryPoint::KPrime,
            "Mv" => SymmetryPoint::MVertical,
            "Kv" => SymmetryPoint::KVertical,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            SymmetryPoint::Gamma => "G",
            SymmetryPoint::M => "M",
            SymmetryPoint::K => "K",
            SymmetryPoint::KPrime => "Kp",
            SymmetryPoint::MVertical => "Mv",
            SymmetryPoint::KVertical => "Kv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalSpec {
    pub b1: Vec2,
    pub b2: Vec2,
    pub gamma: Vec2,
    pub m: Vec2,
    pub k: Vec2,
    pub k_prime: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub k: Vec2,
    pub arclength: f64,
    /// Label of the symmetry point this sample sits on, if any.
    pub label: Option<String>,
}

impl ReciprocalSpec {
    pub fn from_lattice(spec: &LatticeSpec) -> Self {
        let a = Matrix2::from_rows(&[spec.a1.transpose(), spec.a2.transpose()]);
        // Rows of 2 pi A^{-T} are the dual vectors.
        let b = a
            .try_inverse()
            .expect("primitive vectors are linearly independent")
            .transpose()
            * (2.0 * PI);
        let b1 = Vec2::new(b[(0, 0)], b[(0, 1)]);
        let b2 = Vec2::new(b[(1, 0)], b[(1, 1)]);
        Self {
            b1,
            b2,
            gamma: Vec2::zeros(),
            m: (b1 + b2) / 2.0,
            k: (b1 * 2.0 + b2) / 3.0,
            k_prime: (b1 + b2 * 2.0) / 3.0,
        }
    }

    pub fn point(&self, p: SymmetryPoint) -> Vec2 {
        match p {
            SymmetryPoint::Gamma => self.gamma,
            SymmetryPoint::M => self.m,
            SymmetryPoint::K => self.k,
            SymmetryPoint::KPrime => self.k_prime,
            SymmetryPoint::MVertical => (self.b1 - self.b2) / 2.0,
            SymmetryPoint::KVertical => (self.b1 - self.b2) / 3.0,
        }
    }

    /// Resolve a label, optionally prefixed with `-` for the inverted point.
    pub fn resolve(&self, label: &str) -> Result<Vec2> {
        let (sign, name) = match label.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, label),
        };
        SymmetryPoint::parse(name)
            .map(|p| self.point(p) * sign)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn g_vector(&self, m1: i64, m2: i64) -> Vec2 {
        self.b1 * m1 as f64 + self.b2 * m2 as f64
    }

    /// Uniform samples along the polyline through `labels`, `n_per_segment`
    /// per segment including both ends. Shared segment endpoints are emitted
    /// once.
    pub fn sample_path<S: AsRef<str>>(
        &self,
        labels: &[S],
        n_per_segment: usize,
    ) -> Result<Vec<PathPoint>> {
        if labels.len() < 2 {
            return Err(Error::InvalidArgument(
                "a path needs at least two labels".into(),
            ));
        }
        if n_per_segment < 2 {
            return Err(Error::InvalidArgument(
                "at least two samples per segment are required".into(),
            ));
        }
        let nodes = labels
            .iter()
            .map(|l| self.resolve(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;

        let mut out = Vec::with_capacity((labels.len() - 1) * (n_per_segment - 1) + 1);
        let mut arc = 0.0;
        for (seg, pair) in nodes.windows(2).enumerate() {
            let (start, end) = (pair[0], pair[1]);
            let len = (end - start).norm();
            let first = if seg == 0 { 0 } else { 1 };
            for i in first..n_per_segment {
                let s = i as f64 / (n_per_segment - 1) as f64;
                let k = if i == n_per_segment - 1 {
                    end
                } else {
                    start + (end - start) * s
                };
                let label = if i == 0 {
                    Some(labels[seg].as_ref().to_string())
                } else if i == n_per_segment - 1 {
                    Some(labels[seg + 1].as_ref().to_string())
                } else {
                    None
                };
                out.push(PathPoint {
                    k,
                    arclength: arc + len * s,
                    label,
                });
            }
            arc += len;
            if let Some(last) = out.last_mut() {
                last.arclength = arc;
            }
        }
        Ok(out)
    }

    /// Wigner-Seitz representative of `k`. Points on the zone boundary are
    /// disambiguated by the largest `k_x`, then the largest `k_y`.
    pub fn reduce_to_bz(&self, k: Vec2) -> Vec2 {
        // Fractional coordinates in the (b1, b2) basis are k . a_i / 2 pi.
        let basis = Matrix2::from_columns(&[self.b1, self.b2]);
        let frac = basis
            .try_inverse()
            .expect("reciprocal vectors are linearly independent")
            * k;
        let base = k - self.g_vector(frac.x.floor() as i64, frac.y.floor() as i64);
        let scale = self.b1.norm();
        let tie = 1e-9 * scale;
        let mut best = base;
        let mut best_norm = base.norm();
        for m1 in -2..=2 {
            for m2 in -2..=2 {
                let cand = base + self.g_vector(m1, m2);
                let n = cand.norm();
                let better = if n < best_norm - tie {
                    true
                } else if (n - best_norm).abs() <= tie {
                    cand.x > best.x + tie || ((cand.x - best.x).abs() <= tie && cand.y > best.y + tie)
                } else {
                    false
                };
                if better {
                    best = cand;
                    best_norm = n;
                }
            }
        }
        best
    }

    /// True when `a` and `b` differ by a reciprocal lattice vector, within `tol`.
    pub fn equivalent(&self, a: Vec2, b: Vec2, tol: f64) -> bool {
        let d = self.reduce_to_bz(a - b);
        d.norm() <= tol
    }
}
