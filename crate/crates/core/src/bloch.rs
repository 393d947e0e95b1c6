//! Bloch matrix of the two-site lattice, its spectrum and band connection.
//!
//! `m = -i/2 I - 3/2 [D]` in units of the single-emitter decay rate, with the
//! 3x3 blocks `D_same` on the diagonal, `D(+d)` at (A, B) and `D(-d)` at
//! (B, A). Eigenvalues are `omega - i gamma / 2` measured from the bare
//! transition.

use nalgebra::{DMatrix, DVector, Matrix6, Schur};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{Dyadic, GreenMode, K0};
use crate::lattice::{LatticeSpec, PathPoint, Vec2};
use crate::latticesums::{ewald_sum, EwaldSettings, SumOffset};

/// Coupling prefactor `3 pi / k0` in units of `lambda_a`.
pub const COUPLING: f64 = 1.5;
pub const RESIDUAL_BOUND: f64 = 1e-10;
/// Shift applied to k-points that sit on a Rayleigh anomaly, in units of `|b1|`.
pub const ANOMALY_NUDGE: f64 = 1e-7;
/// Matching scores closer than this count as ties.
pub const OVERLAP_TIE: f64 = 1e-6;

pub const OUT_OF_PLANE: [usize; 2] = [2, 5];
pub const IN_PLANE: [usize; 4] = [0, 1, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    OutOfPlane,
    InPlane,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochMatrix {
    pub m: Matrix6<Complex64>,
    pub k: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// `(omega_k - omega_a) / Gamma_a`.
    pub detuning: f64,
    /// `gamma_k / Gamma_a`.
    pub decay: f64,
    pub polarization: Polarization,
    /// Unit-norm right eigenvector in the (A x,y,z, B x,y,z) basis.
    pub eigenvector: Vec<Complex64>,
}

impl Band {
    pub fn eigenvalue(&self) -> Complex64 {
        Complex64::new(self.detuning, -self.decay / 2.0)
    }
}

/// Six bands at one k-point: the out-of-plane pair first, then the four
/// in-plane bands. Within a block bands are in ascending detuning unless they
/// have been reordered by path connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub k: Vec2,
    pub arclength: f64,
    pub bands: Vec<Band>,
    pub in_light_cone: bool,
    /// The k-point was moved off a Rayleigh anomaly.
    pub nudged: bool,
}

impl BandSet {
    pub fn block(&self, p: Polarization) -> impl Iterator<Item = &Band> {
        self.bands.iter().filter(move |b| b.polarization == p)
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.detuning).collect()
    }
}

fn place(m: &mut Matrix6<Complex64>, d: &Dyadic, row: usize, col: usize) {
    for i in 0..3 {
        for j in 0..3 {
            m[(row + i, col + j)] = -COUPLING * d[(i, j)];
        }
    }
}

pub fn assemble(spec: &LatticeSpec, k: Vec2, mode: GreenMode) -> Result<BlochMatrix> {
    assemble_with(spec, k, mode, &EwaldSettings::default())
}

pub fn assemble_with(
    spec: &LatticeSpec,
    k: Vec2,
    mode: GreenMode,
    ewald: &EwaldSettings,
) -> Result<BlochMatrix> {
    let sum = |offset| ewald_sum(&ewald.request(*spec, k, offset, mode)).map(|r| r.d);
    let same = sum(SumOffset::SameSite)?;
    let ab = sum(SumOffset::AToB)?;
    let ba = sum(SumOffset::BToA)?;
    let mut m = Matrix6::zeros();
    place(&mut m, &same, 0, 0);
    place(&mut m, &same, 3, 3);
    place(&mut m, &ab, 0, 3);
    place(&mut m, &ba, 3, 0);
    for i in 0..6 {
        m[(i, i)] -= Complex64::new(0.0, 0.5);
    }
    Ok(BlochMatrix { m, k })
}

fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenpairs of a general complex matrix, eigenvectors normalised, with the
/// residual of every pair checked against `RESIDUAL_BOUND * |m|`.
pub fn eig(m: &DMatrix<Complex64>) -> Result<Vec<(Complex64, DVector<Complex64>)>> {
    let n = m.nrows();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let norm = frobenius(m);
    let pairs = if n == 2 {
        eig2(m)
    } else {
        let schur = Schur::try_new(m.clone(), f64::EPSILON, 0).ok_or(Error::EigenFailure {
            residual: f64::INFINITY,
            bound: RESIDUAL_BOUND * norm,
        })?;
        let (q, t) = schur.unpack();
        (0..n)
            .map(|i| {
                let y = triangular_eigenvector(&t, i, norm);
                let v = &q * y;
                (t[(i, i)], v.normalize())
            })
            .collect()
    };
    let bound = RESIDUAL_BOUND * norm.max(f64::MIN_POSITIVE);
    for (lambda, v) in &pairs {
        let residual = (m * v - v * *lambda).norm();
        if !(residual <= bound) {
            return Err(Error::EigenFailure { residual, bound });
        }
    }
    Ok(pairs)
}

/// Closed form for a 2x2 block.
fn eig2(m: &DMatrix<Complex64>) -> Vec<(Complex64, DVector<Complex64>)> {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let half = (a + d) / 2.0;
    let disc = (((a - d) / 2.0).powi(2) + b * c).sqrt();
    let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
    [half - disc, half + disc]
        .into_iter()
        .enumerate()
        .map(|(i, lambda)| {
            // Pick the better-conditioned of the two row equations.
            let v1 = DVector::from_vec(vec![b, lambda - a]);
            let v2 = DVector::from_vec(vec![lambda - d, c]);
            let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
            let v = if v.norm() <= 1e-300 + 1e-15 * scale {
                let mut e = DVector::zeros(2);
                e[i] = Complex64::new(1.0, 0.0);
                e
            } else {
                v
            };
            (lambda, v.normalize())
        })
        .collect()
}

/// Eigenvector of upper-triangular `t` for its `i`-th diagonal entry.
fn triangular_eigenvector(t: &DMatrix<Complex64>, i: usize, norm: f64) -> DVector<Complex64> {
    let n = t.nrows();
    let lambda = t[(i, i)];
    let tiny = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
    let mut y = DVector::zeros(n);
    y[i] = Complex64::new(1.0, 0.0);
    for j in (0..i).rev() {
        let mut s = Complex64::new(0.0, 0.0);
        for l in j + 1..=i {
            s += t[(j, l)] * y[l];
        }
        let mut den = t[(j, j)] - lambda;
        if den.norm() < tiny {
            den = Complex64::new(tiny, 0.0);
        }
        y[j] = -s / den;
    }
    y
}

fn sub_block(m: &Matrix6<Complex64>, idx: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn embed(v: &DVector<Complex64>, idx: &[usize]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); 6];
    for (i, &j) in idx.iter().enumerate() {
        out[j] = v[i];
    }
    out
}

fn polarization_of(v: &[Complex64]) -> Polarization {
    let w: f64 = OUT_OF_PLANE.iter().map(|&i| v[i].norm_sqr()).sum();
    if w >= 0.99 {
        Polarization::OutOfPlane
    } else {
        Polarization::InPlane
    }
}

fn band(lambda: Complex64, v: Vec<Complex64>) -> Band {
    Band {
        detuning: lambda.re,
        decay: -2.0 * lambda.im,
        polarization: polarization_of(&v),
        eigenvector: v,
    }
}

fn sorted(mut bands: Vec<Band>) -> Vec<Band> {
    bands.sort_by(|a, b| a.detuning.total_cmp(&b.detuning));
    bands
}

/// Spectrum of `m`, solving the two decoupled blocks separately.
pub fn eigensolve(m: &BlochMatrix) -> Result<BandSet> {
    let mut bands = Vec::with_capacity(6);
    for idx in [&OUT_OF_PLANE[..], &IN_PLANE[..]] {
        let block = eig(&sub_block(&m.m, idx))?;
        bands.extend(sorted(
            block.into_iter().map(|(l, v)| band(l, embed(&v, idx))).collect(),
        ));
    }
    Ok(BandSet {
        k: m.k,
        arclength: 0.0,
        bands,
        in_light_cone: m.k.norm() < K0,
        nudged: false,
    })
}

/// Spectrum of the full 6x6 matrix without using the block structure,
/// sorted by detuning.
pub fn eigensolve_full(m: &BlochMatrix) -> Result<Vec<Band>> {
    let dm = DMatrix::from_fn(6, 6, |i, j| m.m[(i, j)]);
    let pairs = eig(&dm)?;
    Ok(sorted(
        pairs
            .into_iter()
            .map(|(l, v)| band(l, v.iter().copied().collect()))
            .collect(),
    ))
}

/// Bands at one k-point, nudging it off a Rayleigh anomaly if needed.
pub fn bands_at(spec: &LatticeSpec, k: Vec2, mode: GreenMode) -> Result<BandSet> {
    bands_at_with(spec, k, mode, &EwaldSettings::default())
}

pub fn bands_at_with(
    spec: &LatticeSpec,
    k: Vec2,
    mode: GreenMode,
    ewald: &EwaldSettings,
) -> Result<BandSet> {
    let mut set = bands_at_raw(spec, k, mode, ewald)?;
    set.in_light_cone = spec.reciprocal().reduce_to_bz(k).norm() < K0;
    Ok(set)
}

fn bands_at_raw(
    spec: &LatticeSpec,
    k: Vec2,
    mode: GreenMode,
    ewald: &EwaldSettings,
) -> Result<BandSet> {
    match assemble_with(spec, k, mode, ewald) {
        Ok(m) => eigensolve(&m),
        Err(Error::RayleighAnomaly { .. }) => {
            let step = ANOMALY_NUDGE * spec.reciprocal().b1.norm();
            let mut last = None;
            for dir in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(-1.0, 0.0)] {
                match assemble_with(spec, k + dir * step, mode, ewald) {
                    Ok(m) => {
                        let mut set = eigensolve(&m)?;
                        set.nudged = true;
                        return Ok(set);
                    }
                    Err(e @ Error::RayleighAnomaly { .. }) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one nudge attempted"))
        }
        Err(e) => Err(e),
    }
}

fn overlap(a: &Band, b: &Band) -> f64 {
    a.eigenvector
        .iter()
        .zip(&b.eigenvector)
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        .norm()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Permutation `perm` with `cur[perm[i]]` continuing `prev[i]`.
pub fn match_bands(prev: &[Band], cur: &[Band]) -> Vec<usize> {
    let n = prev.len();
    let mut scored: Vec<(f64, f64, Vec<usize>)> = permutations(n)
        .into_iter()
        .map(|p| {
            let s = (0..n).map(|i| overlap(&prev[i], &cur[p[i]])).sum::<f64>();
            let e = (0..n)
                .map(|i| (prev[i].detuning - cur[p[i]].detuning).abs())
                .sum::<f64>();
            (s, e, p)
        })
        .collect();
    let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    scored.retain(|s| s.0 >= best - OVERLAP_TIE);
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    scored.swap_remove(0).2
}

/// Reorder `cur` within each block so its bands continue those of `prev`.
pub fn connect(prev: &BandSet, cur: &mut BandSet) {
    for p in [Polarization::OutOfPlane, Polarization::InPlane] {
        let pi: Vec<usize> = (0..6).filter(|&i| prev.bands[i].polarization == p).collect();
        let ci: Vec<usize> = (0..6).filter(|&i| cur.bands[i].polarization == p).collect();
        if pi.len() != ci.len() {
            continue;
        }
        let pb: Vec<Band> = pi.iter().map(|&i| prev.bands[i].clone()).collect();
        let cb: Vec<Band> = ci.iter().map(|&i| cur.bands[i].clone()).collect();
        let perm = match_bands(&pb, &cb);
        for (slot, &j) in pi.iter().zip(&perm) {
            cur.bands[*slot] = cb[j].clone();
        }
    }
}

/// Per-point spectra in parallel, connected sequentially afterwards.
pub fn bands_on_path(
    spec: &LatticeSpec,
    path: &[PathPoint],
    mode: GreenMode,
) -> Result<Vec<BandSet>> {
    bands_on_path_with(spec, path, mode, &EwaldSettings::default())
}

pub fn bands_on_path_with(
    spec: &LatticeSpec,
    path: &[PathPoint],
    mode: GreenMode,
    ewald: &EwaldSettings,
) -> Result<Vec<BandSet>> {
    let mut sets = path
        .par_iter()
        .map(|p| {
            let mut s = bands_at_with(spec, p.k, mode, ewald)?;
            s.arclength = p.arclength;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    for i in 1..sets.len() {
        let (head, tail) = sets.split_at_mut(i);
        connect(&head[i - 1], &mut tail[0]);
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub kx: (f64, f64),
    pub ky: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl KGrid {
    pub fn around(center: Vec2, half_width: f64, n: usize) -> Self {
        KGrid {
            kx: (center.x - half_width, center.x + half_width),
            ky: (center.y - half_width, center.y + half_width),
            nx: n,
            ny: n,
        }
    }

    fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![(range.0 + range.1) / 2.0];
        }
        (0..n)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.kx, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.ky, self.ny)
    }

    /// Points in row-major order (`kx` fastest).
    pub fn points(&self) -> Vec<Vec2> {
        let xs = self.xs();
        self.ys()
            .into_iter()
            .flat_map(|y| xs.iter().map(move |&x| Vec2::new(x, y)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandGrid {
    pub grid: KGrid,
    /// Row-major, `kx` fastest; bands in each set are energy-sorted per block.
    pub sets: Vec<BandSet>,
}

impl BandGrid {
    pub fn at(&self, ix: usize, iy: usize) -> &BandSet {
        &self.sets[iy * self.grid.nx + ix]
    }

    /// Detuning surface of band `b`, indexed `[iy][ix]`.
    pub fn surface(&self, b: usize) -> Vec<Vec<f64>> {
        self.sets
            .chunks(self.grid.nx)
            .map(|row| row.iter().map(|s| s.bands[b].detuning).collect())
            .collect()
    }
}

pub fn bands_on_grid(spec: &LatticeSpec, grid: &KGrid, mode: GreenMode) -> Result<BandGrid> {
    bands_on_grid_with(spec, grid, mode, &EwaldSettings::default())
}

pub fn bands_on_grid_with(
    spec: &LatticeSpec,
    grid: &KGrid,
    mode: GreenMode,
    ewald: &EwaldSettings,
) -> Result<BandGrid> {
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point per axis".into()));
    }
    let sets = grid
        .points()
        .par_iter()
        .map(|&k| bands_at_with(spec, k, mode, ewald))
        .collect::<Result<Vec<_>>>()?;
    Ok(BandGrid { grid: *grid, sets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SymmetryPoint;
    use crate::latticesums::LatticeSumRequest;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn honeycomb() -> LatticeSpec {
        LatticeSpec::honeycomb(0.1).unwrap()
    }

    fn norm6(m: &Matrix6<Complex64>) -> f64 {
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn planar_and_normal_blocks_decouple() {
        let spec = LatticeSpec::new(0.1, 0.84).unwrap();
        for mode in [GreenMode::Retarded, GreenMode::Quasistatic] {
            let m = assemble(&spec, Vec2::new(2.0, -5.0), mode).unwrap();
            let n = norm6(&m.m);
            for &i in &IN_PLANE {
                for &j in &OUT_OF_PLANE {
                    assert!(m.m[(i, j)].norm() < 1e-12 * n && m.m[(j, i)].norm() < 1e-12 * n);
                }
            }
        }
    }

    #[test]
    fn diagonal_is_self_term() {
        let spec = honeycomb();
        let k = Vec2::new(1.0, 2.0);
        let m = assemble(&spec, k, GreenMode::Retarded).unwrap();
        let d = ewald_sum(&LatticeSumRequest::new(spec, k, SumOffset::SameSite, GreenMode::Retarded))
            .unwrap()
            .d;
        for i in 0..3 {
            let want = c(0.0, -0.5) - COUPLING * d[(i, i)];
            assert!((m.m[(i, i)] - want).norm() < 1e-14 * norm6(&m.m));
            assert!((m.m[(i + 3, i + 3)] - want).norm() < 1e-14 * norm6(&m.m));
        }
    }

    #[test]
    fn zero_coupling_limit() {
        let m = BlochMatrix {
            m: Matrix6::from_diagonal_element(c(0.0, -0.5)),
            k: Vec2::zeros(),
        };
        let set = eigensolve(&m).unwrap();
        for b in &set.bands {
            assert_eq!(b.eigenvalue(), c(0.0, -0.5));
        }
    }

    #[test]
    fn out_of_plane_block_closed_form() {
        let spec = honeycomb();
        let m = assemble(&spec, spec.reciprocal().m, GreenMode::Retarded).unwrap();
        let a = m.m[(2, 2)];
        let b = m.m[(2, 5)];
        assert!((m.m[(5, 2)] - b.conj()).norm() < 1e-10 * b.norm());
        let set = eigensolve(&m).unwrap();
        let oop: Vec<f64> = set.block(Polarization::OutOfPlane).map(|b| b.detuning).collect();
        assert!((oop[0] - (a.re - b.norm())).abs() < 1e-10 * norm6(&m.m));
        assert!((oop[1] - (a.re + b.norm())).abs() < 1e-10 * norm6(&m.m));
    }

    #[test]
    fn trace_and_determinant_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = DMatrix::from_fn(6, 6, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let pairs = eig(&m).unwrap();
            let sum: Complex64 = pairs.iter().map(|p| p.0).sum();
            let prod: Complex64 = pairs.iter().map(|p| p.0).product();
            assert!((sum - m.trace()).norm() < 1e-10 * m.trace().norm().max(1.0));
            let det = m.clone().determinant();
            assert!((prod - det).norm() < 1e-10 * det.norm().max(1.0));
        }
    }

    #[test]
    fn full_and_block_solutions_agree() {
        let spec = LatticeSpec::new(0.1, 0.63).unwrap();
        let m = assemble(&spec, Vec2::new(3.0, 1.0), GreenMode::Retarded).unwrap();
        let full = eigensolve_full(&m).unwrap();
        let mut blocks = eigensolve(&m).unwrap().bands;
        blocks.sort_by(|a, b| a.detuning.total_cmp(&b.detuning));
        for (x, y) in full.iter().zip(&blocks) {
            assert!((x.eigenvalue() - y.eigenvalue()).norm() < 1e-10 * norm6(&m.m));
            assert_eq!(x.polarization, y.polarization);
        }
        let oop = full.iter().filter(|b| b.polarization == Polarization::OutOfPlane).count();
        assert_eq!(oop, 2);
    }

    #[test]
    fn gamma_degeneracies_for_honeycomb() {
        let set = bands_at(&honeycomb(), Vec2::zeros(), GreenMode::Retarded).unwrap();
        let ip: Vec<Complex64> = set.block(Polarization::InPlane).map(|b| b.eigenvalue()).collect();
        let scale = ip.iter().map(|z| z.norm()).fold(0.0, f64::max);
        // Two two-dimensional representations.
        assert!((ip[0] - ip[1]).norm() < 1e-9 * scale, "{ip:?}");
        assert!((ip[2] - ip[3]).norm() < 1e-9 * scale, "{ip:?}");
        assert!((ip[1] - ip[2]).norm() > 1e-3 * scale);
    }

    #[test]
    fn quasistatic_decay_is_single_emitter() {
        let spec = LatticeSpec::new(0.1, 0.9).unwrap();
        for k in [Vec2::zeros(), Vec2::new(2.0, 1.0), spec.reciprocal().k] {
            let set = bands_at(&spec, k, GreenMode::Quasistatic).unwrap();
            for b in &set.bands {
                assert!((b.decay - 1.0).abs() < 1e-10, "{}", b.decay);
            }
        }
    }

    #[test]
    fn spectrum_even_in_k() {
        let spec = LatticeSpec::new(0.1, 0.7).unwrap();
        for k in [Vec2::new(3.0, 2.0), Vec2::new(15.0, -4.0)] {
            let a = bands_at(&spec, k, GreenMode::Retarded).unwrap();
            let b = bands_at(&spec, -k, GreenMode::Retarded).unwrap();
            for (x, y) in a.bands.iter().zip(&b.bands) {
                assert!((x.eigenvalue() - y.eigenvalue()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn decay_bounds() {
        let spec = honeycomb();
        let recip = spec.reciprocal();
        for k in [Vec2::zeros(), Vec2::new(3.0, 1.0), recip.m, recip.k, recip.m * 0.5] {
            let set = bands_at(&spec, k, GreenMode::Retarded).unwrap();
            for b in &set.bands {
                assert!(b.decay >= -1e-9);
                if !set.in_light_cone {
                    assert!(b.decay < 1e-6, "{k:?}: {}", b.decay);
                }
            }
        }
    }

    #[test]
    fn dirac_point_at_k() {
        let spec = honeycomb();
        let set = bands_at(&spec, spec.reciprocal().k, GreenMode::Retarded).unwrap();
        let oop: Vec<f64> = set.block(Polarization::OutOfPlane).map(|b| b.detuning).collect();
        assert!((oop[1] - oop[0]).abs() < 1e-6);
    }

    #[test]
    fn k_and_k_prime_spectra_match() {
        let spec = honeycomb();
        let r = spec.reciprocal();
        let a = bands_at(&spec, r.k, GreenMode::Retarded).unwrap();
        let b = bands_at(&spec, r.k_prime, GreenMode::Retarded).unwrap();
        for (x, y) in a.bands.iter().zip(&b.bands) {
            assert!((x.eigenvalue() - y.eigenvalue()).norm() < 1e-10);
        }
    }

    #[test]
    fn path_reversal_symmetry() {
        let spec = honeycomb();
        let path = spec
            .reciprocal()
            .sample_path(&["M", "Kp", "G", "K", "M"], 12)
            .unwrap();
        let sets = bands_on_path(&spec, &path, GreenMode::Retarded).unwrap();
        let n = sets.len();
        for i in 0..n {
            let mut a = sets[i].detunings();
            let mut b = sets[n - 1 - i].detunings();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quasistatic_tracks_retarded_away_from_light_line() {
        let spec = honeycomb();
        let path = spec.reciprocal().sample_path(&["M", "K"], 41).unwrap();
        let ret = bands_on_path(&spec, &path, GreenMode::Retarded).unwrap();
        let qs = bands_on_path(&spec, &path, GreenMode::Quasistatic).unwrap();
        let all: Vec<f64> = ret.iter().flat_map(|s| s.detunings()).collect();
        let range = all.iter().cloned().fold(f64::MIN, f64::max) - all.iter().cloned().fold(f64::MAX, f64::min);
        let mut worst = 0.0f64;
        for (r, q) in ret.iter().zip(&qs).skip(20) {
            let mut a = r.detunings();
            let mut b = q.detunings();
            a[..2].sort_by(f64::total_cmp);
            b[..2].sort_by(f64::total_cmp);
            a[2..].sort_by(f64::total_cmp);
            b[2..].sort_by(f64::total_cmp);
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst < 0.1 * range, "{worst} vs range {range}");
    }

    #[test]
    fn closed_loop_matching_is_identity() {
        let spec = LatticeSpec::new(0.1, 0.8).unwrap();
        let r = spec.reciprocal();
        let centre = r.m * 0.6 + r.k * 0.2;
        let rad = 0.08 * r.b1.norm();
        let path: Vec<PathPoint> = (0..=64)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 64.0;
                PathPoint {
                    k: centre + Vec2::new(t.cos(), t.sin()) * rad,
                    arclength: rad * t,
                    label: None,
                }
            })
            .collect();
        let sets = bands_on_path(&spec, &path, GreenMode::Retarded).unwrap();
        let first = &sets[0];
        let last = sets.last().unwrap();
        for (a, b) in first.bands.iter().zip(&last.bands) {
            assert!((a.detuning - b.detuning).abs() < 1e-9);
        }
    }

    #[test]
    fn matching_follows_crossings() {
        let v = |i: usize| {
            let mut e = vec![c(0.0, 0.0); 6];
            e[i] = c(1.0, 0.0);
            e
        };
        let mk = |d: f64, i| Band {
            detuning: d,
            decay: 0.0,
            polarization: Polarization::InPlane,
            eigenvector: v(i),
        };
        let prev = [mk(0.0, 0), mk(1.0, 1)];
        // Energies swapped but states kept: a crossing, not an anticrossing.
        let cur = [mk(0.5, 1), mk(0.6, 0)];
        assert_eq!(match_bands(&prev, &cur), vec![1, 0]);
        // Fully degenerate overlaps fall back to energy order.
        let cur = [mk(0.1, 3), mk(0.9, 4)];
        assert_eq!(match_bands(&prev, &cur), vec![0, 1]);
    }

    #[test]
    fn grid_mirror_symmetry() {
        let spec = LatticeSpec::new(0.1, 0.7).unwrap();
        let grid = KGrid {
            kx: (-10.0, 14.0),
            ky: (-6.0, 6.0),
            nx: 5,
            ny: 5,
        };
        let g = bands_on_grid(&spec, &grid, GreenMode::Retarded).unwrap();
        for iy in 0..5 {
            for ix in 0..5 {
                let a = g.at(ix, iy).detunings();
                let b = g.at(ix, 4 - iy).detunings();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn single_point_grid_matches_path() {
        let spec = honeycomb();
        let k = Vec2::new(5.0, 3.0);
        let g = bands_on_grid(&spec, &KGrid::around(k, 0.0, 1), GreenMode::Retarded).unwrap();
        let p = bands_on_path(
            &spec,
            &[PathPoint { k, arclength: 0.0, label: None }],
            GreenMode::Retarded,
        )
        .unwrap();
        assert_eq!(g.sets[0].detunings(), p[0].detunings());
    }

    #[test]
    fn grid_refinement_locates_k() {
        let spec = honeycomb();
        let kp = spec.reciprocal().point(SymmetryPoint::K);
        let half = 0.05 * spec.reciprocal().b1.norm();
        for n in [5, 9, 17] {
            let g = bands_on_grid(&spec, &KGrid::around(kp + Vec2::new(0.1, 0.07) * half, half, n), GreenMode::Retarded).unwrap();
            let spacing = 2.0 * half / (n - 1) as f64;
            let best = g
                .sets
                .iter()
                .min_by(|a, b| {
                    let ga = (a.bands[1].detuning - a.bands[0].detuning).abs();
                    let gb = (b.bands[1].detuning - b.bands[0].detuning).abs();
                    ga.total_cmp(&gb)
                })
                .unwrap();
            assert!((best.k - kp).norm() <= spacing, "n = {n}");
        }
    }

    #[test]
    fn anomaly_points_are_nudged() {
        let spec = LatticeSpec::honeycomb(0.3).unwrap();
        let set = bands_at(&spec, Vec2::new(K0, 0.0), GreenMode::Retarded).unwrap();
        assert!(set.nudged);
        assert_eq!(set.bands.len(), 6);
    }
}
