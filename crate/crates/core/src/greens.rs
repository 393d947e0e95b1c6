//! Free-space electric dyadic Green's function and its near-field limit.
//!
//! `G(r) = (1/4pi) [I + grad grad / k0^2] exp(i k0 r) / r`, evaluated in the
//! closed form `A(r) I + B(r) r_hat r_hat`. Lengths are in units of the
//! emitter wavelength, so the physical wavenumber is `k0 = 2 pi`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Dyadic = Matrix3<Complex64>;
pub type Vec3 = Vector3<f64>;

/// Emitter wavenumber with lengths measured in `lambda_a`.
pub const K0: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMode {
    Retarded,
    Quasistatic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenDyadic {
    pub components: Dyadic,
    pub displacement: Vec3,
    pub k0: f64,
}

/// Coherent exchange `j` and pair decay `gamma`, in units of the single
/// emitter decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingPair {
    pub j: f64,
    pub gamma: f64,
    pub p_i: Vector3<Complex64>,
    pub p_j: Vector3<Complex64>,
}

fn unit_and_norm(r: &Vec3) -> Result<(Vec3, f64)> {
    let n = r.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroDisplacement);
    }
    Ok((r / n, n))
}

fn dyadic_from(a: Complex64, b: Complex64, u: &Vec3) -> Dyadic {
    Dyadic::from_fn(|i, j| {
        let delta = if i == j { a } else { Complex64::new(0.0, 0.0) };
        delta + b * (u[i] * u[j])
    })
}

/// Identity and `r_hat r_hat` coefficients of the retarded dyadic.
///
/// With `x = k0 r`, `A = e^{ix} (x^2 - 1 + ix) / (4 pi r x^2)` and
/// `B = e^{ix} (3 - x^2 - 3ix) / (4 pi r x^2)`. The imaginary numerators
/// cancel to O(x^3) and O(x^5), so below `x = 1` they come from their
/// Taylor series.
pub fn retarded_coefficients(r: f64, k0: f64) -> (Complex64, Complex64) {
    let x = k0 * r;
    let (s, c) = x.sin_cos();
    let x2 = x * x;
    let re_a = c * (x2 - 1.0) - x * s;
    let re_b = c * (3.0 - x2) + 3.0 * x * s;
    let (im_a, im_b) = if x < 1.0 {
        imaginary_numerators_series(x)
    } else {
        (s * (x2 - 1.0) + x * c, s * (3.0 - x2) - 3.0 * x * c)
    };
    let scale = 1.0 / (4.0 * PI * r * x2);
    (
        Complex64::new(re_a, im_a) * scale,
        Complex64::new(re_b, im_b) * scale,
    )
}

fn imaginary_numerators_series(x: f64) -> (f64, f64) {
    // Coefficients of x^{2m+1}, m >= 1:
    //   A: (-1)^m [1/(2m)! - 1/(2m-1)! - 1/(2m+1)!]
    //   B: (-1)^m [3/(2m+1)! + 1/(2m-1)! - 3/(2m)!]
    let x2 = x * x;
    let mut fact_lo = 1.0; // (2m-1)!
    let mut power = x; // x^{2m+1} / x^2 at m = 0
    let mut sign = 1.0;
    let (mut a, mut b) = (0.0, 0.0);
    for m in 1..=12 {
        let fm = m as f64;
        if m > 1 {
            fact_lo *= (2.0 * fm - 2.0) * (2.0 * fm - 1.0);
        }
        let fact_mid = fact_lo * 2.0 * fm;
        let fact_hi = fact_mid * (2.0 * fm + 1.0);
        power *= x2;
        sign = -sign;
        a += sign * (1.0 / fact_mid - 1.0 / fact_lo - 1.0 / fact_hi) * power;
        b += sign * (3.0 / fact_hi + 1.0 / fact_lo - 3.0 / fact_mid) * power;
    }
    (a, b)
}

pub fn green_retarded(r: Vec3, k0: f64) -> Result<GreenDyadic> {
    let (u, n) = unit_and_norm(&r)?;
    let (a, b) = retarded_coefficients(n, k0);
    Ok(GreenDyadic {
        components: dyadic_from(a, b, &u),
        displacement: r,
        k0,
    })
}

/// Near-field term `(3 r_hat r_hat - I) / (4 pi k0^2 r^3)` with no
/// retardation phase.
pub fn green_quasistatic(r: Vec3, k0: f64) -> Result<GreenDyadic> {
    let (u, n) = unit_and_norm(&r)?;
    let c = 1.0 / (4.0 * PI * k0 * k0 * n * n * n);
    Ok(GreenDyadic {
        components: dyadic_from(Complex64::from(-c), Complex64::from(3.0 * c), &u),
        displacement: r,
        k0,
    })
}

pub fn green(r: Vec3, k0: f64, mode: GreenMode) -> Result<GreenDyadic> {
    match mode {
        GreenMode::Retarded => green_retarded(r, k0),
        GreenMode::Quasistatic => green_quasistatic(r, k0),
    }
}

/// Photon-mediated coupling between two emitters separated by `r`.
///
/// With `c / omega_a = 1 / k0` the prefactor `3 pi Gamma_a c / omega_a`
/// becomes `3 pi / k0`, i.e. `(3/2) lambda_a`.
pub fn coupling(
    r: Vec3,
    p_i: Vector3<Complex64>,
    p_j: Vector3<Complex64>,
    k0: f64,
) -> Result<CouplingPair> {
    for p in [&p_i, &p_j] {
        if (p.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "dipole orientation must be a unit vector (|p| = {})",
                p.norm()
            )));
        }
    }
    let g = green_retarded(r, k0)?;
    let proj = (p_i.conjugate().transpose() * g.components * p_j)[(0, 0)];
    let pref = 3.0 * PI / k0;
    Ok(CouplingPair {
        j: -pref * proj.re,
        gamma: 2.0 * pref * proj.im,
        p_i,
        p_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zhat() -> Vector3<Complex64> {
        Vector3::new(0.0.into(), 0.0.into(), 1.0.into())
    }
    fn xhat() -> Vector3<Complex64> {
        Vector3::new(1.0.into(), 0.0.into(), 0.0.into())
    }

    /// `(1/4pi) [I + H/k0^2] phi` with the Hessian of
    /// `phi = exp(i k0 |r|) / |r|` from central differences.
    fn finite_difference_dyadic(r: Vec3, k0: f64, h: f64) -> Dyadic {
        let phi = |p: Vec3| {
            let n = p.norm();
            Complex64::from_polar(1.0 / n, k0 * n)
        };
        let e = |i: usize| {
            let mut v = Vec3::zeros();
            v[i] = h;
            v
        };
        let mut out = Dyadic::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let hess = if i == j {
                    (phi(r + e(i)) - phi(r) * 2.0 + phi(r - e(i))) / (h * h)
                } else {
                    (phi(r + e(i) + e(j)) - phi(r + e(i) - e(j)) - phi(r - e(i) + e(j))
                        + phi(r - e(i) - e(j)))
                        / (4.0 * h * h)
                };
                let delta = if i == j { phi(r) } else { Complex64::from(0.0) };
                out[(i, j)] = (delta + hess / (k0 * k0)) / (4.0 * PI);
            }
        }
        out
    }

    fn rel_err(a: &Dyadic, b: &Dyadic) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn on_axis_example() {
        let g = green_retarded(Vec3::new(1.0, 0.0, 0.0), K0).unwrap().components;
        let (a, b) = retarded_coefficients(1.0, K0);
        assert_eq!(g[(2, 2)], a);
        let phase = Complex64::from_polar(1.0, 2.0 * PI) / (4.0 * PI);
        let longitudinal = phase * (Complex64::new(0.0, -2.0 / (2.0 * PI)) + 2.0 / (2.0 * PI).powi(2));
        assert!((g[(0, 0)] - longitudinal).norm() < 1e-15);
        assert!((g[(0, 0)] - (a + b)).norm() < 1e-15);
    }

    #[test]
    fn closed_form_matches_finite_difference_hessian() {
        let r = Vec3::new(0.1, 0.07, 0.0);
        let closed = green_retarded(r, K0).unwrap().components;
        let fd = finite_difference_dyadic(r, K0, 1e-5);
        for i in 0..3 {
            for j in 0..3 {
                let scale = closed[(i, j)].norm().max(1e-12 * closed.norm());
                assert!(
                    (closed[(i, j)] - fd[(i, j)]).norm() / scale < 1e-6
                        || (closed[(i, j)] - fd[(i, j)]).norm() < 1e-9 * closed.norm(),
                    "component ({i},{j}): {} vs {}",
                    closed[(i, j)],
                    fd[(i, j)]
                );
            }
        }
    }

    #[test]
    fn hessian_oracle_on_random_displacements() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let len = rng.random_range(0.05..2.0);
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let r = dir * len;
            let closed = green_retarded(r, K0).unwrap().components;
            let fd = finite_difference_dyadic(r, K0, 1e-5);
            let err = rel_err(&fd, &closed);
            assert!(err < 1e-6, "r = {r:?}: rel err {err:e}");
        }
    }

    #[test]
    fn symmetry_and_reciprocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let g = green_retarded(r, K0).unwrap().components;
            assert_eq!(g, g.transpose());
            assert_eq!(g, green_retarded(-r, K0).unwrap().components);
        }
        let planar = green_retarded(Vec3::new(0.3, -0.2, 0.0), K0).unwrap().components;
        for (i, j) in [(0, 2), (1, 2), (2, 0), (2, 1)] {
            assert_eq!(planar[(i, j)], Complex64::from(0.0));
        }
    }

    #[test]
    fn radiative_limit_at_short_distance() {
        let g = green_retarded(Vec3::new(0.0, 0.0, 1e-5), K0).unwrap().components;
        for i in 0..3 {
            assert!((g[(i, i)].im - K0 / (6.0 * PI)).abs() < 1e-8);
        }
    }

    #[test]
    fn quasistatic_examples() {
        let r = 0.2;
        let g = green_quasistatic(Vec3::new(r, 0.0, 0.0), K0).unwrap().components;
        let c = 1.0 / (4.0 * PI * K0 * K0 * r * r * r);
        assert!((g[(0, 0)].re - 2.0 * c).abs() < 1e-14 * c);
        assert!((g[(1, 1)].re + c).abs() < 1e-14 * c);
        assert!((g[(2, 2)].re + c).abs() < 1e-14 * c);

        let g = green_quasistatic(Vec3::new(0.1, 0.07, -0.3), K0).unwrap().components;
        assert!(g.trace().norm() < 1e-12 * g.norm());
        assert!(g.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn quasistatic_is_static_part_of_closed_form() {
        // The 1/(k0 r)^2 terms of A and B with the phase set to one.
        let r = Vec3::new(0.1, 0.07, 0.0);
        let n = r.norm();
        let u = r / n;
        let kr = K0 * n;
        let a = -1.0 / (4.0 * PI * n * kr * kr);
        let b = 3.0 / (4.0 * PI * n * kr * kr);
        let extracted = dyadic_from(a.into(), b.into(), &u);
        let qs = green_quasistatic(r, K0).unwrap().components;
        assert!(rel_err(&qs, &extracted) < 1e-12);
    }

    #[test]
    fn series_and_direct_forms_agree_near_switch() {
        for &x in &[0.3, 0.7, 0.999, 1.001] {
            let (sa, sb) = imaginary_numerators_series(x);
            let (s, c) = x.sin_cos();
            let da = s * (x * x - 1.0) + x * c;
            let db = s * (3.0 - x * x) - 3.0 * x * c;
            assert!((sa - da).abs() < 1e-13 * da.abs(), "x={x}");
            assert!((sb - db).abs() < 1e-11 * db.abs(), "x={x}");
        }
    }

    #[test]
    fn near_field_dominance() {
        let r = Vec3::new(6e-4, -7e-4, 2e-4);
        let ret = green_retarded(r, K0).unwrap().components;
        let qs = green_quasistatic(r, K0).unwrap().components;
        assert!(rel_err(&ret, &qs) < 1e-2);
    }

    #[test]
    fn zero_displacement_is_an_error() {
        assert_eq!(green_retarded(Vec3::zeros(), K0).unwrap_err(), Error::ZeroDisplacement);
        assert_eq!(green_quasistatic(Vec3::zeros(), K0).unwrap_err(), Error::ZeroDisplacement);
    }

    #[test]
    fn coupling_limits() {
        let c = coupling(Vec3::new(0.0, 1e-6, 0.0), zhat(), zhat(), K0).unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-9);

        let c = coupling(Vec3::new(0.3, 0.0, 0.0), xhat(), zhat(), K0).unwrap();
        assert_eq!((c.j, c.gamma), (0.0, 0.0));
        let yhat = Vector3::new(0.0.into(), 1.0.into(), 0.0.into());
        let c = coupling(Vec3::new(0.3, 0.0, 0.0), xhat(), yhat, K0).unwrap();
        assert_eq!((c.j, c.gamma), (0.0, 0.0));

        assert!(coupling(Vec3::new(0.1, 0.0, 0.0), zhat() * Complex64::from(2.0), zhat(), K0).is_err());
    }

    #[test]
    fn coupling_regression_value() {
        // Both dipoles along z, r = 0.1 lambda along x:
        // p.G.p = A(0.1) = e^{i 0.2 pi}/(0.4 pi) (1 + i/(0.2 pi) - 1/(0.2 pi)^2).
        let c = coupling(Vec3::new(0.1, 0.0, 0.0), zhat(), zhat(), K0).unwrap();
        assert!((c.j - 2.597_093_873_725_706_5).abs() < 1e-10, "{}", c.j);
        assert!((c.gamma - 0.922_696_848_382_276_5).abs() < 1e-12, "{}", c.gamma);

        let fd = finite_difference_dyadic(Vec3::new(0.1, 0.0, 0.0), K0, 1e-5)[(2, 2)];
        let pref = 3.0 * PI / K0;
        assert!((-pref * fd.re - c.j).abs() < 1e-6 * c.j.abs());
        assert!((2.0 * pref * fd.im - c.gamma).abs() < 1e-6);
    }

    #[test]
    fn coupling_exchange_symmetry() {
        let p = Vector3::new(0.6.into(), 0.8.into(), 0.0.into());
        let q = Vector3::new(0.0.into(), 0.6.into(), 0.8.into());
        let r = Vec3::new(0.13, -0.05, 0.02);
        let a = coupling(r, p, q, K0).unwrap();
        let b = coupling(-r, q, p, K0).unwrap();
        assert!((a.j - b.j).abs() < 1e-12 * a.j.abs());
        assert!((a.gamma - b.gamma).abs() < 1e-12);
    }
}
