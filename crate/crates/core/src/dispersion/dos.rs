use serde::{Deserialize, Serialize};

use super::DispersionConfig;
use crate::bloch::{bands_on_grid, KGrid, Polarization};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dos {
    pub centers: Vec<f64>,
    /// States per unit detuning, normalised to the total number of sampled
    /// states of the block.
    pub density: Vec<f64>,
    pub bin_width: f64,
}

/// Histogram of the block's detunings over an equally weighted k-grid.
pub fn dos_histogram(
    spec: &LatticeSpec,
    block: Polarization,
    window: (f64, f64),
    bin_width: f64,
    grid: &KGrid,
    cfg: &DispersionConfig,
) -> Result<Dos> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width must be positive, got {bin_width}")));
    }
    let (lo, hi) = window;
    if !(hi > lo) {
        return Ok(Dos {
            centers: Vec::new(),
            density: Vec::new(),
            bin_width,
        });
    }
    // Tolerate rounding when the window is a whole number of bins.
    let nbins = ((hi - lo) / bin_width * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let bands = bands_on_grid(spec, grid, cfg.mode)?;
    let mut counts = vec![0usize; nbins];
    let mut total = 0usize;
    for set in &bands.sets {
        for b in set.block(block) {
            total += 1;
            if b.detuning >= lo && b.detuning < hi {
                let i = (((b.detuning - lo) / bin_width) as usize).min(nbins - 1);
                counts[i] += 1;
            }
        }
    }
    let norm = 1.0 / (total.max(1) as f64 * bin_width);
    Ok(Dos {
        centers: (0..nbins).map(|i| lo + (i as f64 + 0.5) * bin_width).collect(),
        density: counts.iter().map(|&c| c as f64 * norm).collect(),
        bin_width,
    })
}
