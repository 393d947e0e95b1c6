use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{
    check_pair, pair_eigenvalues, Classification, ConeKind, DegeneracyReport, DispersionConfig,
    FitResiduals,
};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, Vec2};

struct Sample {
    q: Vec2,
    lo: Complex64,
    hi: Complex64,
}

impl Sample {
    fn gap(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    fn average(&self) -> f64 {
        (self.lo.re + self.hi.re) / 2.0
    }
}

/// Least squares with column scaling; fails if the scaled design matrix is
/// worse conditioned than `max_condition`.
fn lstsq(rows: &[Vec<f64>], rhs: &[f64], max_condition: f64) -> Result<(Vec<f64>, f64)> {
    let (m, n) = (rows.len(), rows[0].len());
    let scale: Vec<f64> = (0..n)
        .map(|j| rows.iter().fold(0.0f64, |s, r| s.max(r[j].abs())).max(f64::MIN_POSITIVE))
        .collect();
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j] / scale[j]);
    let b = DVector::from_column_slice(rhs);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= max_condition) {
        return Err(Error::FitDegenerate(cond));
    }
    let x = svd.solve(&b, 0.0).map_err(|_| Error::FitDegenerate(cond))?;
    let resid = (&a * &x - &b).norm() / (m as f64).sqrt();
    Ok(((0..n).map(|j| x[j] / scale[j]).collect(), resid))
}

/// Slope and rms residual of `ln y` against `ln x`.
fn loglog_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, rms)
}

fn canonical(v: Vec2) -> Vec2 {
    let v = v.normalize();
    let lead = if v.x.abs() >= v.y.abs() { v.x } else { v.y };
    if lead < 0.0 {
        -v
    } else {
        v
    }
}

fn quartic_at(c: &[f64], n: Vec2) -> f64 {
    let (x, y) = (n.x, n.y);
    c[0] * x.powi(4) + c[1] * x.powi(3) * y + c[2] * x * x * y * y + c[3] * x * y.powi(3) + c[4] * y.powi(4)
}

fn exponent_class(p: f64, cfg: &DispersionConfig) -> u8 {
    if (p - 1.0).abs() <= cfg.linear_window {
        1
    } else if (p - 2.0).abs() <= cfg.quadratic_window {
        2
    } else if p < 1.5 {
        1
    } else {
        2
    }
}

/// Local fit of the pair around `report.k_star` and the resulting label.
pub fn classify(
    spec: &LatticeSpec,
    report: &DegeneracyReport,
    cfg: &DispersionConfig,
) -> Result<DegeneracyReport> {
    cfg.validate()?;
    check_pair(report.block, report.band_pair)?;
    let (block, pair, k_star) = (report.block, report.band_pair, report.k_star);
    let b = spec.reciprocal().b1.norm();
    let (rmin, rmax) = (cfg.fit_radius_min * b, cfg.fit_radius * b);
    let nr = cfg.n_radii;
    let radii: Vec<f64> = (0..nr)
        .map(|i| rmin * (rmax / rmin).powf(i as f64 / (nr - 1) as f64))
        .collect();
    let mut qs = vec![Vec2::zeros()];
    for j in 0..cfg.n_directions {
        let t = 2.0 * PI * j as f64 / cfg.n_directions as f64;
        for &r in &radii {
            qs.push(Vec2::new(t.cos(), t.sin()) * r);
        }
    }
    let sample = |q: Vec2| -> Result<Sample> {
        let (lo, hi) = pair_eigenvalues(spec, k_star + q, cfg.mode, block, pair)?;
        Ok(Sample { q, lo, hi })
    };
    let samples = qs.par_iter().map(|&q| sample(q)).collect::<Result<Vec<_>>>()?;
    let centre = &samples[0];
    let gap0 = centre.gap();

    // Band average: constant + linear (tilt) + quadratic.
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let (x, y) = (s.q.x, s.q.y);
            vec![1.0, x, y, x * x, x * y, y * y]
        })
        .collect();
    let rhs: Vec<f64> = samples.iter().map(|s| s.average()).collect();
    let (c, tilt_resid) = lstsq(&rows, &rhs, cfg.max_condition)?;
    let tilt = Vec2::new(c[1], c[2]);

    // gap^2 - gap0^2: quadratic form plus cubic and quartic corrections.
    let ring = &samples[1..];
    let rows: Vec<Vec<f64>> = ring
        .iter()
        .map(|s| {
            let (x, y) = (s.q.x, s.q.y);
            vec![
                x * x,
                x * y,
                y * y,
                x.powi(3),
                x * x * y,
                x * y * y,
                y.powi(3),
                x.powi(4),
                x.powi(3) * y,
                x * x * y * y,
                x * y.powi(3),
                y.powi(4),
            ]
        })
        .collect();
    let rhs: Vec<f64> = ring.iter().map(|s| s.gap().powi(2) - gap0 * gap0).collect();
    let (g, resid) = lstsq(&rows, &rhs, cfg.max_condition)?;
    let rhs_rms = (rhs.iter().map(|v| v * v).sum::<f64>() / rhs.len() as f64).sqrt();
    let velocity_resid = resid / rhs_rms.max(f64::MIN_POSITIVE);
    let a = Matrix2::new(g[0], g[1] / 2.0, g[1] / 2.0, g[2]) / 4.0;
    let quartic = &g[7..12];

    let eig = SymmetricEigen::new(a);
    let (big, small) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let rmid = (rmin * rmax).sqrt();
    let directions: Vec<Vec2> = (0..360)
        .map(|i| {
            let t = PI * i as f64 / 360.0;
            Vec2::new(t.cos(), t.sin())
        })
        .collect();
    let quartic_max = directions
        .iter()
        .map(|&n| quartic_at(quartic, n).abs())
        .fold(0.0, f64::max);
    let quad_max = eig.eigenvalues.abs().max() * 4.0;
    let axes = if quad_max * rmid * rmid >= quartic_max * rmid.powi(4) {
        let e0 = eig.eigenvectors.column(big);
        let e1 = eig.eigenvectors.column(small);
        [canonical(Vec2::new(e0[0], e0[1])), canonical(Vec2::new(e1[0], e1[1]))]
    } else {
        let n = *directions
            .iter()
            .max_by(|p, q| quartic_at(quartic, **p).abs().total_cmp(&quartic_at(quartic, **q).abs()))
            .expect("non-empty");
        [canonical(n), canonical(Vec2::new(-n.y, n.x))]
    };

    // Exponents and upper-band curvature along the principal axes.
    let mut axis_q = Vec::new();
    for axis in &axes {
        for &r in &radii {
            axis_q.push(*axis * r);
            axis_q.push(-*axis * r);
        }
    }
    let axis_samples = axis_q.par_iter().map(|&q| sample(q)).collect::<Result<Vec<_>>>()?;
    let mut exponents = [0.0; 2];
    let mut exp_resid = [0.0; 2];
    let mut curvature = [0.0; 2];
    for (i, chunk) in axis_samples.chunks(2 * nr).enumerate() {
        let pts: Vec<(f64, f64)> = chunk.iter().map(|s| (s.q.norm(), s.gap())).collect();
        let (p, rms) = loglog_slope(&pts);
        exponents[i] = p;
        exp_resid[i] = rms;
        curvature[i] = (chunk[0].hi.re + chunk[1].hi.re - 2.0 * centre.hi.re) / (radii[0] * radii[0]);
    }

    let pos_def = eig.eigenvalues.min() > 0.0;
    let tilt_ratio = if pos_def {
        let inv = a.try_inverse().expect("positive definite");
        tilt.dot(&(inv * tilt)).max(0.0).sqrt()
    } else {
        directions
            .iter()
            .flat_map(|&n| [n, -n])
            .filter_map(|n| {
                let s = n.dot(&(a * n));
                (s > 0.0).then(|| tilt.dot(&n).abs() / s.sqrt())
            })
            .fold(0.0, f64::max)
    };

    let kind = if gap0 >= cfg.eps_deg {
        ConeKind::Gapped
    } else {
        match (exponent_class(exponents[0], cfg), exponent_class(exponents[1], cfg)) {
            (1, 2) | (2, 1) => ConeKind::SemiDirac,
            (2, 2) => ConeKind::Quadratic,
            _ => {
                let tau = cfg.tilt_tolerance;
                if (tilt_ratio - 1.0).abs() <= tau {
                    ConeKind::DiracIII
                } else if !pos_def || tilt_ratio > 1.0 + tau {
                    ConeKind::DiracII
                } else {
                    ConeKind::DiracI
                }
            }
        }
    };

    Ok(DegeneracyReport {
        gap_min: report.gap_min.min(gap0),
        classification: Some(Classification {
            kind,
            tilt,
            velocity_matrix: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]],
            tilt_ratio,
            principal_axes: axes,
            exponents,
            residuals: FitResiduals {
                tilt: tilt_resid,
                velocity: velocity_resid,
                exponents: exp_resid,
            },
            top_curvature: curvature,
            fit_radii: [rmin, rmax],
        }),
        ..report.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_recovers_power() {
        let pts: Vec<(f64, f64)> = (1..10).map(|i| (i as f64 * 0.1, 3.0 * (i as f64 * 0.1).powf(1.7))).collect();
        let (p, rms) = loglog_slope(&pts);
        assert!((p - 1.7).abs() < 1e-12 && rms < 1e-12);
    }

    #[test]
    fn lstsq_flags_collinear_design() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let rhs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(lstsq(&rows, &rhs, 1e8), Err(Error::FitDegenerate(_))));
    }

    #[test]
    fn exponent_windows() {
        let cfg = DispersionConfig::default();
        assert_eq!(exponent_class(1.14, &cfg), 1);
        assert_eq!(exponent_class(1.76, &cfg), 2);
        assert_eq!(exponent_class(2.2, &cfg), 2);
        assert_eq!(exponent_class(1.4, &cfg), 1);
    }
}
