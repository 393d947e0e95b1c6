use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{admissible, check_pair, nelder_mead, pair_eigenvalues, DegeneracyReport, DispersionConfig};
use crate::bloch::Polarization;
use crate::error::Result;
use crate::greens::GreenMode;
use crate::lattice::{LatticeSpec, ReciprocalSpec, Vec2};

/// Rectangle of k-space to scan. With `mirror` set, the images of every
/// degeneracy under `ky -> -ky` and `k -> -k` are added to the result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub kx: (f64, f64),
    pub ky: (f64, f64),
    pub mirror: bool,
}

impl SearchRegion {
    /// Upper half of the Brillouin zone's bounding box.
    pub fn half_bz(spec: &LatticeSpec) -> Self {
        let r = spec.reciprocal();
        let xmax = r.m.x.abs().max(r.k.x.abs());
        let ymax = (r.b1 - r.b2).norm() / 3.0;
        SearchRegion {
            kx: (-xmax, xmax),
            ky: (0.0, ymax),
            mirror: true,
        }
    }

    pub fn around(center: Vec2, half_width: f64) -> Self {
        SearchRegion {
            kx: (center.x - half_width, center.x + half_width),
            ky: (center.y - half_width, center.y + half_width),
            mirror: false,
        }
    }

    fn spacing(&self, n: usize) -> f64 {
        let d = (n - 1).max(1) as f64;
        ((self.kx.1 - self.kx.0) / d).max((self.ky.1 - self.ky.0) / d)
    }
}

/// `|lambda_j - lambda_i|` for the pair within its block.
pub fn pair_gap(
    spec: &LatticeSpec,
    k: Vec2,
    mode: GreenMode,
    block: Polarization,
    pair: [usize; 2],
) -> Result<f64> {
    let (lo, hi) = pair_eigenvalues(spec, k, mode, block, pair)?;
    Ok((hi - lo).norm())
}

fn symmetry_points(r: &ReciprocalSpec) -> [Vec2; 6] {
    [r.gamma, r.m, r.b1 / 2.0, r.b2 / 2.0, r.k, r.k_prime]
}

/// Local minimisation of the gap from `start` with initial simplex `step`.
pub fn refine(
    spec: &LatticeSpec,
    block: Polarization,
    pair: [usize; 2],
    start: Vec2,
    step: f64,
    cfg: &DispersionConfig,
) -> (Vec2, f64) {
    let recip = spec.reciprocal();
    let b = recip.b1.norm();
    let gap = |k: Vec2| pair_gap(spec, k, cfg.mode, block, pair).unwrap_or(f64::INFINITY);
    let (mut k, mut g) = nelder_mead(gap, start, step, cfg.refine_tol * b, 4000);
    for p in symmetry_points(&recip) {
        if recip.equivalent(k, p, 1e-5 * b) {
            let gp = gap(p);
            if gp <= g {
                // Keep the image nearest the refined point.
                let shift = recip.reduce_to_bz(k) - k;
                k = recip.reduce_to_bz(p) - shift;
                g = gp;
            }
        }
    }
    (k, g)
}

fn local_minima(values: &[f64], nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let v = values[iy * nx + ix];
            if !v.is_finite() {
                continue;
            }
            let mut is_min = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (x, y) = (ix as i64 + dx, iy as i64 + dy);
                    if x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
                        continue;
                    }
                    if values[y as usize * nx + x as usize] < v {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                out.push((ix, iy));
            }
        }
    }
    out
}

fn insert_unique(found: &mut Vec<(Vec2, f64)>, k: Vec2, g: f64, recip: &ReciprocalSpec, tol: f64) {
    let k = recip.reduce_to_bz(k);
    for f in found.iter_mut() {
        if recip.equivalent(f.0, k, tol) {
            if g < f.1 {
                *f = (k, g);
            }
            return;
        }
    }
    found.push((k, g));
}

/// Coarse scan, local refinement of every grid minimum, and merging of
/// duplicates. Only minima with gap below `eps_deg` are reported; locations
/// are reduced to the first Brillouin zone.
pub fn find_degeneracies(
    spec: &LatticeSpec,
    block: Polarization,
    pair: [usize; 2],
    region: &SearchRegion,
    cfg: &DispersionConfig,
) -> Result<Vec<DegeneracyReport>> {
    cfg.validate()?;
    check_pair(block, pair)?;
    let recip = spec.reciprocal();
    let b = recip.b1.norm();
    let n = cfg.grid_n;
    let axis = |lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let xs = axis(region.kx.0, region.kx.1);
    let ys = axis(region.ky.0, region.ky.1);
    let points: Vec<Vec2> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| Vec2::new(x, y)))
        .collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&k| pair_gap(spec, k, cfg.mode, block, pair).unwrap_or(f64::INFINITY))
        .collect();
    let step = region.spacing(n);
    let refined: Vec<(Vec2, f64)> = local_minima(&values, n, n)
        .par_iter()
        .map(|&(ix, iy)| refine(spec, block, pair, points[iy * n + ix], step, cfg))
        .collect();

    let tol = cfg.merge_tol * b;
    let mut found = Vec::new();
    for &(k, g) in &refined {
        if g < cfg.eps_deg && admissible(spec, k, cfg) {
            insert_unique(&mut found, k, g, &recip, tol);
        }
    }
    if region.mirror {
        for (k, g) in found.clone() {
            for image in [Vec2::new(k.x, -k.y), -k, Vec2::new(-k.x, k.y)] {
                insert_unique(&mut found, image, g, &recip, tol);
            }
        }
    }
    found.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
    Ok(found
        .into_iter()
        .map(|(k, g)| DegeneracyReport {
            k_star: k,
            block,
            band_pair: pair,
            gap_min: g,
            beta: spec.beta,
            d0: spec.d0,
            classification: None,
        })
        .collect())
}
