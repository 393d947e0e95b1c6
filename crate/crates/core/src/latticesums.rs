//! Quasi-periodic lattice sums of the dyadic Green's function,
//! `D = sum_R exp(-i k.R) G(R + rho)`, by Ewald summation.
//!
//! The scalar sum `S = sum_R exp(-i k.R) g(R + rho)` with
//! `g = exp(i kappa r) / (4 pi r)` is split into a spatial series of
//! complementary error functions and a spectral series over reciprocal
//! vectors. Both series are differentiated analytically, so the dyadic comes
//! out as `S I + H / k0^2` (retarded) or `H / k0^2` (quasistatic, `kappa = 0`).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faddeeva::erfc;
use crate::greens::{Dyadic, GreenMode, K0};
use crate::lattice::{LatticeSpec, ReciprocalSpec, Vec2};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const MAX_SHELLS: usize = 40;
/// Relative distance to `|k + g| = k0` below which a k-point is rejected.
pub const RAYLEIGH_THRESHOLD: f64 = 1e-9;

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SumOffset {
    /// `rho = 0`, the `R = 0` term excluded.
    SameSite,
    /// `rho = +d`.
    AToB,
    /// `rho = -d`.
    BToA,
}

impl SumOffset {
    pub fn rho(self, spec: &LatticeSpec) -> Vec2 {
        match self {
            SumOffset::SameSite => Vec2::zeros(),
            SumOffset::AToB => spec.basis_offset,
            SumOffset::BToA => -spec.basis_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSumRequest {
    pub spec: LatticeSpec,
    pub k: Vec2,
    pub offset: SumOffset,
    pub mode: GreenMode,
    pub splitting: f64,
    pub tolerance: f64,
}

impl LatticeSumRequest {
    /// Request with the default splitting and tolerance.
    pub fn new(spec: LatticeSpec, k: Vec2, offset: SumOffset, mode: GreenMode) -> Self {
        Self {
            spec,
            k,
            offset,
            mode,
            splitting: default_splitting(&spec),
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_splitting(mut self, splitting: f64) -> Self {
        self.splitting = splitting;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.splitting > 0.0 && self.splitting.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Ewald splitting must be positive, got {}",
                self.splitting
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.k.x.is_finite() && self.k.y.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Bloch vector".into()));
        }
        Ok(())
    }
}

/// Caller overrides of the Ewald parameters; `None` keeps the default splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwaldSettings {
    pub splitting: Option<f64>,
    pub tolerance: f64,
}

impl Default for EwaldSettings {
    fn default() -> Self {
        Self {
            splitting: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl EwaldSettings {
    pub fn request(&self, spec: LatticeSpec, k: Vec2, offset: SumOffset, mode: GreenMode) -> LatticeSumRequest {
        let mut req = LatticeSumRequest::new(spec, k, offset, mode);
        if let Some(e) = self.splitting {
            req.splitting = e;
        }
        req.tolerance = self.tolerance;
        req
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSumResult {
    pub d: Dyadic,
    pub n_spatial: usize,
    pub n_spectral: usize,
    pub est_error: f64,
}

/// `E = sqrt(pi) / |a1|`.
pub fn default_splitting(spec: &LatticeSpec) -> f64 {
    SQRT_PI / spec.lattice_constant()
}

/// Largest entry modulus.
pub fn max_abs(d: &Dyadic) -> f64 {
    d.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn rel_diff(a: &Dyadic, b: &Dyadic) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(f64::MIN_POSITIVE)
}

fn spatial_norm(n1: i64, n2: i64) -> i64 {
    n1.abs().max(n2.abs()).max((n1 + n2).abs())
}

fn spectral_norm(m1: i64, m2: i64) -> i64 {
    m1.abs().max(m2.abs()).max((m1 - m2).abs())
}

/// Index pairs on hexagonal shell `n` of the given norm.
fn shell(n: i64, norm: fn(i64, i64) -> i64) -> impl Iterator<Item = (i64, i64)> {
    (-n..=n).flat_map(move |i| (-n..=n).map(move |j| (i, j)))
        .filter(move |&(i, j)| norm(i, j) == n)
}

/// Scalar value and in-plane Hessian of one series term; `hzz` is the
/// second z-derivative at `z = 0`.
#[derive(Clone, Copy, Default)]
struct Term {
    s: Complex64,
    hxx: Complex64,
    hxy: Complex64,
    hyy: Complex64,
    hzz: Complex64,
}

impl Term {
    fn scale(self, f: Complex64) -> Self {
        Term {
            s: self.s * f,
            hxx: self.hxx * f,
            hxy: self.hxy * f,
            hyy: self.hyy * f,
            hzz: self.hzz * f,
        }
    }

    fn add(&mut self, o: Term) {
        self.s += o.s;
        self.hxx += o.hxx;
        self.hxy += o.hxy;
        self.hyy += o.hyy;
        self.hzz += o.hzz;
    }

    fn dyadic(&self, mode: GreenMode) -> Dyadic {
        let inv = 1.0 / (K0 * K0);
        let s = match mode {
            GreenMode::Retarded => self.s,
            GreenMode::Quasistatic => Complex64::new(0.0, 0.0),
        };
        let z = Complex64::new(0.0, 0.0);
        Dyadic::new(
            s + self.hxx * inv,
            self.hxy * inv,
            z,
            self.hxy * inv,
            s + self.hyy * inv,
            z,
            z,
            z,
            s + self.hzz * inv,
        )
    }
}

fn spatial_term(x: Vec2, kappa: f64, e: f64) -> Term {
    let r = x.norm();
    let i = Complex64::i();
    let c = 2.0 * e / SQRT_PI * (kappa * kappa / (4.0 * e * e) - r * r * e * e).exp();
    let shift = Complex64::new(0.0, kappa / (2.0 * e));
    let phase = Complex64::new(0.0, kappa * r).exp();
    let pp = phase * erfc(r * e + shift);
    let pm = phase.inv() * erfc(r * e - shift);
    let phi = pp + pm;
    let phi1 = i * kappa * (pp - pm) - 2.0 * c;
    let phi2 = -kappa * kappa * phi + 4.0 * r * e * e * c;
    let h = phi / (8.0 * PI * r);
    let h1 = (phi1 / r - phi / (r * r)) / (8.0 * PI);
    let h2 = (phi2 / r - 2.0 * phi1 / (r * r) + 2.0 * phi / (r * r * r)) / (8.0 * PI);
    let (ux, uy) = (x.x / r, x.y / r);
    let t = h1 / r;
    Term {
        s: h,
        hxx: h2 * ux * ux + t * (1.0 - ux * ux),
        hxy: (h2 - t) * ux * uy,
        hyy: h2 * uy * uy + t * (1.0 - uy * uy),
        hzz: t,
    }
}

/// Spectral term for `q = k + g`, without the `exp(i q.rho) / (4 A)` factor.
fn spectral_term(q: Vec2, kappa: f64, e: f64) -> Term {
    let qn = q.norm();
    let gamma = if qn >= kappa {
        Complex64::new((qn * qn - kappa * kappa).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, -(kappa * kappa - qn * qn).sqrt())
    };
    let a = gamma / (2.0 * e);
    let ea = erfc(a);
    let hzz = 2.0 * gamma * ea - 4.0 * e / SQRT_PI * (-a * a).exp();
    if gamma.norm() == 0.0 {
        return Term {
            hzz,
            ..Term::default()
        };
    }
    let f0 = 2.0 * ea / gamma;
    Term {
        s: f0,
        hxx: -q.x * q.x * f0,
        hxy: -q.x * q.y * f0,
        hyy: -q.y * q.y * f0,
        hzz,
    }
}

/// The `R = 0` part of the spatial split, which is subtracted from a
/// same-site sum: value `d0` and isotropic Hessian `d2 I`.
fn screened_self_term(kappa: f64, e: f64) -> Term {
    let c0 = 2.0 * e / SQRT_PI * (kappa * kappa / (4.0 * e * e)).exp();
    let c1 = -Complex64::i() * kappa * erfc(Complex64::new(0.0, -kappa / (2.0 * e))) - c0;
    let c3 = (-kappa * kappa * c1 + 2.0 * e * e * c0) / 6.0;
    let d0 = -c1 / (4.0 * PI);
    let d2 = -c3 / (2.0 * PI);
    Term {
        s: d0,
        hxx: d2,
        hxy: Complex64::new(0.0, 0.0),
        hyy: d2,
        hzz: d2,
    }
}

fn kappa_of(mode: GreenMode) -> f64 {
    match mode {
        GreenMode::Retarded => K0,
        GreenMode::Quasistatic => 0.0,
    }
}

/// Distance of `k` to the nearest Rayleigh anomaly, `min_g ||k + g| - k0|`.
pub fn rayleigh_distance(spec: &LatticeSpec, k: Vec2) -> f64 {
    let recip = spec.reciprocal();
    let k = recip.reduce_to_bz(k);
    let bmin = recip.b1.norm().min(recip.b2.norm()).min((recip.b1 + recip.b2).norm());
    let reach = ((K0 + k.norm()) / (bmin * 3f64.sqrt() / 2.0)).ceil() as i64 + 1;
    let mut best = f64::INFINITY;
    for n in 0..=reach {
        for (m1, m2) in shell(n, spectral_norm) {
            let q = k + recip.g_vector(m1, m2);
            best = best.min((q.norm() - K0).abs());
        }
    }
    best
}

pub fn ewald_sum(req: &LatticeSumRequest) -> Result<LatticeSumResult> {
    req.validate()?;
    let spec = &req.spec;
    let recip: ReciprocalSpec = spec.reciprocal();
    let k = recip.reduce_to_bz(req.k);
    let rho = req.offset.rho(spec);
    let kappa = kappa_of(req.mode);
    let e = req.splitting;
    let area = spec.cell_area();
    let tol = req.tolerance / 10.0;

    // Spectral series first so anomalies are reported before any work.
    let mut spectral = Term::default();
    let mut n_spectral = 0;
    let mut spectral_err = f64::INFINITY;
    let mut quiet = 0;
    for n in 0..=MAX_SHELLS as i64 {
        let mut part = Term::default();
        let mut beyond_cone = true;
        for (m1, m2) in shell(n, spectral_norm) {
            let q = k + recip.g_vector(m1, m2);
            let qn = q.norm();
            if req.mode == GreenMode::Retarded && (qn - kappa).abs() < RAYLEIGH_THRESHOLD * K0 {
                return Err(Error::RayleighAnomaly {
                    kx: req.k.x,
                    ky: req.k.y,
                    distance: (qn - kappa).abs(),
                });
            }
            if qn <= kappa {
                beyond_cone = false;
            }
            let phase = Complex64::new(0.0, q.dot(&rho)).exp() / (4.0 * area);
            part.add(spectral_term(q, kappa, e).scale(phase));
            n_spectral += 1;
        }
        spectral.add(part);
        let size = max_abs(&spectral.dyadic(req.mode)).max(f64::MIN_POSITIVE);
        spectral_err = max_abs(&part.dyadic(req.mode)) / size;
        if n > 0 && beyond_cone && spectral_err < tol {
            quiet += 1;
            if quiet == 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        if n == MAX_SHELLS as i64 {
            return Err(Error::NonConvergent {
                shells: MAX_SHELLS,
                est_error: spectral_err,
            });
        }
    }

    let mut spatial = Term::default();
    let mut n_spatial = 0;
    let mut spatial_err = f64::INFINITY;
    quiet = 0;
    let same_site = req.offset == SumOffset::SameSite;
    for n in 0..=MAX_SHELLS as i64 {
        let mut part = Term::default();
        for (n1, n2) in shell(n, spatial_norm) {
            if same_site && n1 == 0 && n2 == 0 {
                continue;
            }
            let r = spec.lattice_vector(n1, n2);
            let phase = Complex64::new(0.0, -k.dot(&r)).exp();
            part.add(spatial_term(r + rho, kappa, e).scale(phase));
            n_spatial += 1;
        }
        spatial.add(part);
        let size = max_abs(&(spatial.dyadic(req.mode) + spectral.dyadic(req.mode)))
            .max(f64::MIN_POSITIVE);
        spatial_err = max_abs(&part.dyadic(req.mode)) / size;
        if n > 0 && spatial_err < tol {
            quiet += 1;
            if quiet == 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        if n == MAX_SHELLS as i64 {
            return Err(Error::NonConvergent {
                shells: MAX_SHELLS,
                est_error: spatial_err,
            });
        }
    }

    let mut total = spectral;
    total.add(spatial);
    if same_site {
        total.add(screened_self_term(kappa, e).scale(Complex64::new(-1.0, 0.0)));
    }
    let size = max_abs(&total.dyadic(req.mode)).max(f64::MIN_POSITIVE);
    let scale_s = max_abs(&spectral.dyadic(req.mode)) / size;
    let scale_r = max_abs(&(spatial.dyadic(req.mode) + spectral.dyadic(req.mode))) / size;
    Ok(LatticeSumResult {
        d: total.dyadic(req.mode),
        n_spatial,
        n_spectral,
        est_error: (spectral_err * scale_s).max(spatial_err * scale_r),
    })
}

/// C-infinity step from 0 at `x <= 0` to 1 at `x >= 1`.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let f = (-1.0 / x).exp();
    let g = (-1.0 / (1.0 - x)).exp();
    f / (f + g)
}

/// Weight of a term at `s = r / cutoff`: 1 inside half the cutoff, 0 beyond it.
fn taper(s: f64) -> f64 {
    1.0 - smooth_step(2.0 * s - 1.0)
}

/// `int_0^inf (1 - taper(s)) / s^2 ds`.
pub(crate) fn taper_tail_integral() -> f64 {
    // Simpson on [1/2, 1]; the integrand is 1/s^2 beyond.
    let n = 2000;
    let h = 0.5 / n as f64;
    let f = |s: f64| smooth_step(2.0 * s - 1.0) / (s * s);
    let mut acc = f(0.5) + f(1.0);
    for i in 1..n {
        let s = 0.5 + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(s);
    }
    acc * h / 3.0 + 1.0
}

/// Real-space quasistatic sum over `|R + rho| <= cutoff_radius`.
///
/// Terms are weighted by a smooth taper over the outer half of the cutoff,
/// which removes the lattice-point noise of a hard edge. When `k` is a
/// reciprocal vector the sum does not oscillate and the part cut away by the
/// taper is restored from its continuum limit.
pub fn direct_sum_quasistatic(
    req: &LatticeSumRequest,
    cutoff_radius: f64,
) -> Result<LatticeSumResult> {
    if req.mode != GreenMode::Quasistatic {
        return Err(Error::InvalidArgument(
            "direct summation is only defined for the quasistatic dyadic".into(),
        ));
    }
    if !(cutoff_radius > 0.0 && cutoff_radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cutoff radius must be positive, got {cutoff_radius}"
        )));
    }
    let spec = &req.spec;
    let recip = spec.reciprocal();
    let k = recip.reduce_to_bz(req.k);
    let rho = req.offset.rho(spec);
    let a = spec.lattice_constant();
    let pref = 1.0 / (4.0 * PI * K0 * K0);
    let reach = (cutoff_radius / (a * 3f64.sqrt() / 2.0)).ceil() as i64 + 2;

    let mut sum = [[Complex64::new(0.0, 0.0); 2]; 2];
    let mut szz = Complex64::new(0.0, 0.0);
    let mut edge = 0.0f64;
    let mut n_spatial = 0;
    for n1 in -reach..=reach {
        for n2 in -reach..=reach {
            let r_vec = spec.lattice_vector(n1, n2);
            let x = r_vec + rho;
            let r = x.norm();
            if r > cutoff_radius || r < 1e-12 * a {
                continue;
            }
            let w = taper(r / cutoff_radius);
            if w == 0.0 {
                continue;
            }
            let ph = Complex64::new(0.0, -k.dot(&r_vec)).exp() * (w * pref / (r * r * r));
            let u = [x.x / r, x.y / r];
            for i in 0..2 {
                for j in 0..2 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    sum[i][j] += ph * (3.0 * u[i] * u[j] - delta);
                }
            }
            szz -= ph;
            if r > cutoff_radius - a {
                edge += ph.norm() * 2.0;
            }
            n_spatial += 1;
        }
    }
    if k.norm() < 1e-9 * recip.b1.norm() {
        let tail = pref * PI * taper_tail_integral() / (spec.cell_area() * cutoff_radius);
        sum[0][0] += tail;
        sum[1][1] += tail;
        szz -= 2.0 * tail;
    }
    let z = Complex64::new(0.0, 0.0);
    let d = Dyadic::new(
        sum[0][0], sum[0][1], z, sum[1][0], sum[1][1], z, z, z, szz,
    );
    Ok(LatticeSumResult {
        d,
        n_spatial,
        n_spectral: 0,
        est_error: edge / max_abs(&d).max(f64::MIN_POSITIVE),
    })
}

/// Cutoff used by [`sum_diagnostics`] for the direct-sum comparison.
pub const DIAGNOSTIC_CUTOFF: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumDiagnostics {
    pub k: Vec2,
    pub splitting: f64,
    /// Max relative change of the quasistatic sums under `E -> 2E, E/2`.
    pub quasistatic_splitting: f64,
    /// Max relative quasistatic Ewald vs direct-sum deviation.
    pub quasistatic_direct: f64,
    /// Same as `quasistatic_splitting` for the retarded sums; `None` on a
    /// Rayleigh anomaly.
    pub retarded_splitting: Option<f64>,
    /// Set when `k` sits on a Rayleigh anomaly.
    pub rayleigh_distance: Option<f64>,
}

impl SumDiagnostics {
    pub fn max_deviation(&self) -> f64 {
        self.quasistatic_splitting
            .max(self.quasistatic_direct)
            .max(self.retarded_splitting.unwrap_or(0.0))
    }
}

fn splitting_deviation(req: &LatticeSumRequest) -> Result<f64> {
    let base = ewald_sum(req)?;
    let mut worst = 0.0f64;
    for f in [2.0, 0.5] {
        let other = ewald_sum(&req.with_splitting(req.splitting * f))?;
        worst = worst.max(rel_diff(&other.d, &base.d));
    }
    Ok(worst)
}

/// Ewald splitting invariance and direct-sum agreement over all three offsets.
pub fn sum_diagnostics(spec: &LatticeSpec, k: Vec2) -> Result<SumDiagnostics> {
    let offsets = [SumOffset::SameSite, SumOffset::AToB, SumOffset::BToA];
    let cutoff = DIAGNOSTIC_CUTOFF * spec.lattice_constant();
    let mut qs = 0.0f64;
    let mut qd = 0.0f64;
    let mut rs = Some(0.0f64);
    let mut anomaly = None;
    for offset in offsets {
        let req = LatticeSumRequest::new(*spec, k, offset, GreenMode::Quasistatic);
        qs = qs.max(splitting_deviation(&req)?);
        let ew = ewald_sum(&req)?;
        let direct = direct_sum_quasistatic(&req, cutoff)?;
        qd = qd.max(rel_diff(&direct.d, &ew.d));

        let req = LatticeSumRequest::new(*spec, k, offset, GreenMode::Retarded);
        match splitting_deviation(&req) {
            Ok(v) => rs = rs.map(|r| r.max(v)),
            Err(Error::RayleighAnomaly { distance, .. }) => {
                rs = None;
                anomaly = Some(distance);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SumDiagnostics {
        k,
        splitting: default_splitting(spec),
        quasistatic_splitting: qs,
        quasistatic_direct: qd,
        retarded_splitting: rs,
        rayleigh_distance: anomaly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SymmetryPoint;

    fn honeycomb() -> LatticeSpec {
        LatticeSpec::honeycomb(0.1).unwrap()
    }

    fn sum(spec: LatticeSpec, k: Vec2, offset: SumOffset, mode: GreenMode) -> Dyadic {
        ewald_sum(&LatticeSumRequest::new(spec, k, offset, mode)).unwrap().d
    }

    #[test]
    fn splitting_invariance_at_k() {
        let spec = honeycomb();
        let k = spec.reciprocal().k;
        for offset in [SumOffset::SameSite, SumOffset::AToB] {
            let req = LatticeSumRequest::new(spec, k, offset, GreenMode::Retarded);
            let a = ewald_sum(&req).unwrap();
            let b = ewald_sum(&req.with_splitting(2.0 * req.splitting)).unwrap();
            assert!(rel_diff(&b.d, &a.d) < 1e-8, "{offset:?}: {:e}", rel_diff(&b.d, &a.d));
            assert!(a.est_error < 1e-10);
        }
    }

    #[test]
    fn structure_zero_and_symmetric() {
        let spec = LatticeSpec::new(0.1, 0.84).unwrap();
        let k = Vec2::new(3.0, 7.0);
        for mode in [GreenMode::Retarded, GreenMode::Quasistatic] {
            for offset in [SumOffset::SameSite, SumOffset::AToB, SumOffset::BToA] {
                let d = sum(spec, k, offset, mode);
                let n = max_abs(&d);
                for (i, j) in [(0, 2), (2, 0), (1, 2), (2, 1)] {
                    assert!(d[(i, j)].norm() <= 1e-12 * n);
                }
                assert!(max_abs(&(d - d.transpose())) <= 1e-12 * n);
            }
        }
    }

    #[test]
    fn quasistatic_is_real() {
        let spec = LatticeSpec::new(0.1, 1.3).unwrap();
        for k in [Vec2::new(0.0, 0.0), Vec2::new(5.0, -2.0), spec.reciprocal().m] {
            // Only the same-site sum pairs R with -R; offset sums carry a
            // Bloch phase and are merely adjoint to each other.
            let d = sum(spec, k, SumOffset::SameSite, GreenMode::Quasistatic);
            assert!(d.iter().all(|z| z.im.abs() < 1e-12 * max_abs(&d)));
        }
    }

    #[test]
    fn same_site_k_reversal() {
        let spec = LatticeSpec::new(0.1, 0.7).unwrap();
        let k = Vec2::new(4.0, 11.0);
        let q = sum(spec, k, SumOffset::SameSite, GreenMode::Quasistatic);
        let qm = sum(spec, -k, SumOffset::SameSite, GreenMode::Quasistatic);
        assert!(rel_diff(&qm, &q.conjugate()) < 1e-12);
        // G is even and complex, so the retarded sum is even in k instead.
        let r = sum(spec, k, SumOffset::SameSite, GreenMode::Retarded);
        let rm = sum(spec, -k, SumOffset::SameSite, GreenMode::Retarded);
        assert!(rel_diff(&rm, &r) < 1e-12);
    }

    #[test]
    fn offset_sums_are_adjoint() {
        let spec = LatticeSpec::new(0.1, 1.2).unwrap();
        // Outside the light cone Im G sums to zero, so the identity also
        // holds for the retarded sums.
        let k = Vec2::new(-6.0, 9.0);
        for mode in [GreenMode::Quasistatic, GreenMode::Retarded] {
            let ab = sum(spec, k, SumOffset::AToB, mode);
            let ba = sum(spec, k, SumOffset::BToA, mode);
            assert!(max_abs(&(ab - ba.adjoint())) < 1e-10 * max_abs(&ab), "{mode:?}");
        }
        let k = Vec2::new(1.0, -2.0);
        let ab = sum(spec, k, SumOffset::AToB, GreenMode::Quasistatic);
        let ba = sum(spec, k, SumOffset::BToA, GreenMode::Quasistatic);
        assert!(max_abs(&(ab - ba.adjoint())) < 1e-10 * max_abs(&ab));
    }

    #[test]
    fn gamma_is_isotropic_for_honeycomb() {
        let d = sum(honeycomb(), Vec2::zeros(), SumOffset::SameSite, GreenMode::Quasistatic);
        assert!((d[(0, 0)] - d[(1, 1)]).norm() < 1e-12 * max_abs(&d));
        assert!(d[(0, 1)].norm() < 1e-12 * max_abs(&d));
        let direct = direct_sum_quasistatic(
            &LatticeSumRequest::new(honeycomb(), Vec2::zeros(), SumOffset::SameSite, GreenMode::Quasistatic),
            30.0 * honeycomb().lattice_constant(),
        )
        .unwrap();
        assert!((direct.d[(0, 0)] - direct.d[(1, 1)]).norm() < 1e-10 * max_abs(&d));
    }

    #[test]
    fn direct_sum_matches_ewald() {
        for beta in [1.0, 0.84] {
            let spec = LatticeSpec::new(0.1, beta).unwrap();
            let recip = spec.reciprocal();
            for p in [SymmetryPoint::Gamma, SymmetryPoint::M, SymmetryPoint::K] {
                for offset in [SumOffset::SameSite, SumOffset::AToB] {
                    let req = LatticeSumRequest::new(spec, recip.point(p), offset, GreenMode::Quasistatic);
                    let ew = ewald_sum(&req).unwrap();
                    let a = spec.lattice_constant();
                    let d60 = direct_sum_quasistatic(&req, 60.0 * a).unwrap();
                    let d30 = direct_sum_quasistatic(&req, 30.0 * a).unwrap();
                    assert!(rel_diff(&d60.d, &ew.d) < 1e-6, "{beta} {p:?} {offset:?}");
                    assert!(rel_diff(&d30.d, &d60.d) < 1e-6, "{beta} {p:?} {offset:?}");
                }
            }
        }
    }

    #[test]
    fn direct_sum_rejects_retarded() {
        let req = LatticeSumRequest::new(honeycomb(), Vec2::zeros(), SumOffset::AToB, GreenMode::Retarded);
        assert!(matches!(direct_sum_quasistatic(&req, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn taper_integral() {
        // Independent adaptive quadrature of the same integral.
        assert!((taper_tail_integral() - 1.349713191482602).abs() < 1e-12);
    }

    #[test]
    fn no_propagating_orders_outside_cone() {
        let spec = honeycomb();
        let k = spec.reciprocal().k;
        assert!(k.norm() > K0);
        // The only imaginary part left is the radiative self term, which the
        // same-site sum must cancel: Im D = -Im G0(0) = -k0/(6 pi) I.
        let d = sum(spec, k, SumOffset::SameSite, GreenMode::Retarded);
        for i in 0..3 {
            assert!((d[(i, i)].im + K0 / (6.0 * PI)).abs() < 1e-10);
        }
        // Inter-site sums carry no radiative part: D_AB - D_BA^dagger, which
        // is 2i times the lattice sum of Im G, vanishes.
        let ab = sum(spec, k, SumOffset::AToB, GreenMode::Retarded);
        let ba = sum(spec, k, SumOffset::BToA, GreenMode::Retarded);
        assert!(max_abs(&(ab - ba.adjoint())) < 1e-10 * max_abs(&ab));
    }

    #[test]
    fn rayleigh_anomaly_is_reported() {
        let spec = LatticeSpec::honeycomb(0.3).unwrap();
        let k = Vec2::new(K0, 0.0);
        assert!(rayleigh_distance(&spec, k) < 1e-12);
        let req = LatticeSumRequest::new(spec, k, SumOffset::SameSite, GreenMode::Retarded);
        assert!(matches!(ewald_sum(&req), Err(Error::RayleighAnomaly { .. })));
        let diag = sum_diagnostics(&spec, k).unwrap();
        assert!(diag.retarded_splitting.is_none() && diag.rayleigh_distance.is_some());
    }

    #[test]
    fn diagnostics_examples() {
        let spec = honeycomb();
        let d = sum_diagnostics(&spec, spec.reciprocal().k).unwrap();
        assert!(d.max_deviation() < 1e-7, "{d:?}");
        let spec = LatticeSpec::new(0.1, 0.84).unwrap();
        let d = sum_diagnostics(&spec, spec.reciprocal().m).unwrap();
        assert!(d.max_deviation() < 1e-7, "{d:?}");
    }

    // Independent implementation of the same split (scalar erfc from a
    // reference library), beta = 0.84, k = (3, 7).
    #[test]
    fn matches_reference_values() {
        let c = Complex64::new;
        let cases = [
            (GreenMode::Retarded, SumOffset::SameSite, [
                c(4.196144619721275, -0.33333333333333337),
                c(-2.0093918060740075, 0.0),
                c(0.40082454756886055, -0.33333333333333337),
                c(0.6807496804491475, -0.33333333333333337),
            ]),
            (GreenMode::Retarded, SumOffset::AToB, [
                c(9.923665195087837, -1.1915307631679708),
                c(-2.8148289570013545, -1.6911327316654137),
                c(0.6131184914504608, -1.3956221519306542),
                c(-3.265515699742012, 0.6482847475113158),
            ]),
            (GreenMode::Quasistatic, SumOffset::SameSite, [
                c(1.553451571483664, 0.0),
                c(-0.9767385187323083, 0.0),
                c(-0.2782928895995103, 0.0),
                c(-1.2751586818841527, 0.0),
            ]),
            (GreenMode::Quasistatic, SumOffset::AToB, [
                c(6.454153834730588, -0.3202013747902065),
                c(-1.7808335278982266, -1.847599783937564),
                c(-0.7744434764513738, -0.9755086980141855),
                c(-5.6797103582792134, 1.295710072804392),
            ]),
        ];
        let spec = LatticeSpec::new(0.1, 0.84).unwrap();
        for (mode, offset, want) in cases {
            let d = sum(spec, Vec2::new(3.0, 7.0), offset, mode);
            let got = [d[(0, 0)], d[(0, 1)], d[(1, 1)], d[(2, 2)]];
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).norm() < 1e-11 * max_abs(&d), "{mode:?} {offset:?}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn rejects_bad_splitting() {
        let req = LatticeSumRequest::new(honeycomb(), Vec2::zeros(), SumOffset::AToB, GreenMode::Quasistatic)
            .with_splitting(0.0);
        assert!(matches!(ewald_sum(&req), Err(Error::InvalidArgument(_))));
    }
}
