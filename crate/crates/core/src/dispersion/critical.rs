use serde::{Deserialize, Serialize};

use super::{check_pair, pair_gap, DispersionConfig};
use crate::bloch::Polarization;
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, BETA_MAX, BETA_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalBeta {
    pub beta: f64,
    /// Gap at the target point at `beta`.
    pub gap: f64,
}

const COARSE: usize = 24;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Anisotropy in `bracket` at which the pair closes at the fixed k-point
/// `target` (a symmetry label such as "M").
///
/// A coarse scan picks the smallest gap, then golden-section search narrows
/// the neighbouring interval down to `critical_tol`.
pub fn critical_beta(
    d0: f64,
    block: Polarization,
    pair: [usize; 2],
    target: &str,
    bracket: (f64, f64),
    cfg: &DispersionConfig,
) -> Result<CriticalBeta> {
    cfg.validate()?;
    check_pair(block, pair)?;
    let (lo, hi) = bracket;
    if !(lo < hi) || lo < BETA_MIN || hi > BETA_MAX {
        return Err(Error::InvalidArgument(format!(
            "beta bracket [{lo}, {hi}] must be increasing and within [{BETA_MIN}, {BETA_MAX}]"
        )));
    }
    let gap = |beta: f64| -> Result<f64> {
        let spec = LatticeSpec::new(d0, beta)?;
        let k = spec.reciprocal().resolve(target)?;
        pair_gap(&spec, k, cfg.mode, block, pair)
    };
    let betas: Vec<f64> = (0..=COARSE)
        .map(|i| lo + (hi - lo) * i as f64 / COARSE as f64)
        .collect();
    let values = betas.iter().map(|&b| gap(b)).collect::<Result<Vec<_>>>()?;
    let imin = (0..values.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty scan");
    let (mut a, mut b) = (betas[imin.saturating_sub(1)], betas[(imin + 1).min(COARSE)]);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (gap(c)?, gap(d)?);
    while b - a > cfg.critical_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = gap(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = gap(d)?;
        }
    }
    let (beta, g) = [(c, fc), (d, fd), (betas[imin], values[imin])]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty");
    if g >= cfg.eps_deg {
        return Err(Error::NoClosure {
            lo,
            hi,
            eps: cfg.eps_deg,
            min_gap: g,
        });
    }
    Ok(CriticalBeta { beta, gap: g })
}
