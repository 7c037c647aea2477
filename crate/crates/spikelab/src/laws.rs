//! Closed-form Marchenko-Pastur quantities and the spike maps built on them.
//!
//! Conventions: `phi = M / N`, `K = min(M, N)`, and the limiting spectrum of
//! the rescaled sample covariance matrix is `[gamma_minus, gamma_plus]` with
//! `gamma_pm = phi^{1/2} + phi^{-1/2} +- 2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quadrature;
use crate::{Error, Result};

/// Default exponent `C` in the growth condition `N^{1/C} <= M <= N^C`.
pub const DEFAULT_GROWTH_EXPONENT: f64 = 4.0;

/// Default `omega` for the spectral domains.
pub const DEFAULT_OMEGA: f64 = 0.1;

fn check_phi(phi: f64) -> Result<()> {
    if phi.is_finite() && phi > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("aspect ratio must be positive, got {phi}")))
    }
}

/// Dimensions of a sample covariance problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aspect {
    pub m: usize,
    pub n: usize,
    pub phi: f64,
    pub k: usize,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
}

impl Aspect {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        Self::with_growth_exponent(m, n, DEFAULT_GROWTH_EXPONENT)
    }

    pub fn with_growth_exponent(m: usize, n: usize, c: f64) -> Result<Self> {
        if m == 0 || n < 2 {
            return Err(Error::domain(format!("need M >= 1 and N >= 2, got M={m}, N={n}")));
        }
        if !(c >= 1.0) {
            return Err(Error::domain(format!("growth exponent must be >= 1, got {c}")));
        }
        let (mf, nf) = (m as f64, n as f64);
        if mf < nf.powf(1.0 / c) || mf > nf.powf(c) {
            return Err(Error::domain(format!(
                "dimensions violate N^(1/C) <= M <= N^C with C={c}: M={m}, N={n}"
            )));
        }
        let phi = mf / nf;
        let (gamma_minus, gamma_plus) = edges(phi)?;
        Ok(Aspect {
            m,
            n,
            phi,
            k: m.min(n),
            gamma_minus,
            gamma_plus,
        })
    }

    pub fn sqrt_phi(&self) -> f64 {
        self.phi.sqrt()
    }

    /// The transition window half-width `K^{-1/3}`.
    pub fn window(&self) -> f64 {
        (self.k as f64).powf(-1.0 / 3.0)
    }
}

/// Spectrum edges `(gamma_minus, gamma_plus)`.
pub fn edges(phi: f64) -> Result<(f64, f64)> {
    check_phi(phi)?;
    let s = phi.sqrt();
    // (s -+ 1)^2 / s equals s + 1/s -+ 2 and is exactly zero at phi = 1.
    Ok(((s - 1.0).powi(2) / s, (s + 1.0).powi(2) / s))
}

/// Absolutely continuous part of the Marchenko-Pastur law `rho_phi`.
pub fn mp_density(x: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    let (lo, hi) = edges(phi)?;
    if x <= 0.0 || x <= lo || x >= hi {
        return Ok(0.0);
    }
    Ok(phi.sqrt() / (2.0 * PI * x) * ((x - lo) * (hi - x)).sqrt())
}

/// Point mass of `rho_phi` at the origin.
pub fn mp_atom(phi: f64) -> Result<f64> {
    check_phi(phi)?;
    Ok((1.0 - phi).max(0.0))
}

/// Bulk density of the `M x M` matrix, i.e. `rho_{1/phi}` in the same units.
pub fn mp_density_companion(x: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    let (lo, hi) = edges(phi)?;
    if x <= 0.0 || x <= lo || x >= hi {
        return Ok(0.0);
    }
    Ok(((x - lo) * (hi - x)).sqrt() / (2.0 * PI * phi.sqrt() * x))
}

pub fn mp_atom_companion(phi: f64) -> Result<f64> {
    check_phi(phi)?;
    Ok((1.0 - 1.0 / phi).max(0.0))
}

/// A spectral parameter `z = E + i eta` with `eta >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub e: f64,
    pub eta: f64,
}

impl SpectralPoint {
    pub fn new(e: f64, eta: f64) -> Result<Self> {
        if !e.is_finite() || !eta.is_finite() || eta < 0.0 {
            return Err(Error::domain(format!("invalid spectral point {e} + {eta}i")));
        }
        Ok(SpectralPoint { e, eta })
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }

    /// Distance from `E` to the nearer spectral edge.
    pub fn kappa(&self, phi: f64) -> Result<f64> {
        let (lo, hi) = edges(phi)?;
        Ok((hi - self.e).abs().min((lo - self.e).abs()))
    }
}

/// `w_phi(z)`: the root of `w^2 + (z - phi^{1/2} - phi^{-1/2}) w + 1 = 0`
/// with `|w| <= 1`, equivalently the branch vanishing at infinity.
pub fn stieltjes_w(z: Complex64, phi: f64) -> Result<Complex64> {
    check_phi(phi)?;
    let (lo, hi) = edges(phi)?;
    if !(z.re.is_finite() && z.im.is_finite()) || z.im < 0.0 {
        return Err(Error::domain(format!("spectral parameter must have Im z >= 0, got {z}")));
    }
    if z.im == 0.0 && z.re >= lo && z.re <= hi {
        return Err(Error::domain(format!(
            "real spectral parameter {} lies in the bulk [{lo}, {hi}]; use stieltjes_w_boundary",
            z.re
        )));
    }
    let b = Complex64::new(phi.sqrt() + 1.0 / phi.sqrt(), 0.0) - z;
    let s = (b * b - 4.0).sqrt();
    let r1 = (b + s) * 0.5;
    let r2 = (b - s) * 0.5;
    // The product of the roots is one: take the large root and invert it.
    let big = if r1.norm() >= r2.norm() { r1 } else { r2 };
    Ok(big.inv())
}

/// Boundary value `w_phi(E + i0)` for real `E`, permitted inside the bulk.
pub fn stieltjes_w_boundary(e: f64, phi: f64) -> Result<Complex64> {
    check_phi(phi)?;
    let (lo, hi) = edges(phi)?;
    if e < lo || e > hi {
        return stieltjes_w(Complex64::new(e, 0.0), phi);
    }
    let b = phi.sqrt() + 1.0 / phi.sqrt() - e;
    Ok(Complex64::new(0.5 * b, 0.5 * (4.0 - b * b).max(0.0).sqrt()))
}

/// `m_phi(z)`, the Stieltjes transform of `rho_phi`.
pub fn stieltjes_m(z: Complex64, phi: f64) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Err(Error::domain("m_phi is not evaluated at z = 0"));
    }
    let w = stieltjes_w(z, phi)?;
    Ok((w * phi.sqrt() - 1.0) / z)
}

/// Boundary value `m_phi(E + i0)`, permitted inside the bulk.
pub fn stieltjes_m_boundary(e: f64, phi: f64) -> Result<Complex64> {
    if e == 0.0 {
        return Err(Error::domain("m_phi is not evaluated at z = 0"));
    }
    let w = stieltjes_w_boundary(e, phi)?;
    Ok((w * phi.sqrt() - 1.0) / e)
}

/// Residual of `m + 1 / (z + z phi^{-1/2} m - (phi^{1/2} - phi^{-1/2}))`.
pub fn m_self_consistency_residual(m: Complex64, z: Complex64, phi: f64) -> f64 {
    let s = phi.sqrt();
    (m + (z + z * m / s - (s - 1.0 / s)).inv()).norm()
}

/// Residual of `z - (1 - phi^{-1/2} w^{-1})(phi^{1/2} - w)`.
pub fn w_self_consistency_residual(w: Complex64, z: Complex64, phi: f64) -> f64 {
    let s = phi.sqrt();
    (z - (1.0 - w.inv() / s) * (s - w)).norm()
}

/// Classical outlier location `theta(d) = phi^{1/2} + phi^{-1/2} + d + 1/d`.
pub fn classical_location(d: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    if d == 0.0 || !d.is_finite() {
        return Err(Error::domain(format!("theta is undefined at d = {d}")));
    }
    Ok(phi.sqrt() + 1.0 / phi.sqrt() + d + 1.0 / d)
}

/// `theta` extended to complex arguments.
pub fn classical_location_complex(zeta: Complex64, phi: f64) -> Complex64 {
    zeta + zeta.inv() + (phi.sqrt() + 1.0 / phi.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Right,
    Left,
}

/// Inverts `theta` on `(1, inf)` (right) or `(-phi^{-1/2}, -1)` (left).
pub fn inverse_classical_location(mu: f64, phi: f64, side: Side) -> Result<f64> {
    check_phi(phi)?;
    let (lo, hi) = edges(phi)?;
    let t = mu - phi.sqrt() - 1.0 / phi.sqrt();
    match side {
        Side::Right => {
            if !(mu > hi) {
                return Err(Error::NoOutlier(format!("{mu} is not right of the bulk edge {hi}")));
            }
            Ok((t + (t * t - 4.0).sqrt()) / 2.0)
        }
        Side::Left => {
            if !(mu < lo) {
                return Err(Error::NoOutlier(format!("{mu} is not left of the bulk edge {lo}")));
            }
            let d = (t - (t * t - 4.0).sqrt()) / 2.0;
            if d <= -1.0 / phi.sqrt() {
                return Err(Error::domain(format!(
                    "{mu} has no preimage in (-phi^(-1/2), -1) for phi = {phi}"
                )));
            }
            Ok(d)
        }
    }
}

/// Population eigenvalue `sigma = 1 + phi^{1/2} d`.
pub fn sigma_of(d: f64, phi: f64) -> f64 {
    1.0 + phi.sqrt() * d
}

/// Squared overlap `u(d)` of an outlier eigenvector with its spike direction.
pub fn cone_mass(d: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    if !(d > 1.0) {
        return Err(Error::domain(format!("cone mass needs d > 1, got {d}")));
    }
    if d.is_infinite() {
        return Ok(1.0);
    }
    let theta = classical_location(d, phi)?;
    Ok(sigma_of(d, phi) / (phi.sqrt() * theta) * (1.0 - 1.0 / (d * d)))
}

/// Fluctuation scale `Delta(d)` of an outlier, so that `mu - theta(d)` is
/// of order `Delta(d) K^{-1/2}`.
pub fn fluctuation_scale(d: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    let s = phi.sqrt();
    if d > 1.0 && d <= 2.0 {
        Ok((d - 1.0).sqrt())
    } else if d > 2.0 && d.is_finite() {
        Ok(1.0 + d / (1.0 + 1.0 / s))
    } else if d < -1.0 && d > -1.0 / s {
        let theta = classical_location(d, phi)?;
        Ok(s * theta / (1.0 + (d.abs() - 1.0).powf(-0.5)))
    } else {
        Err(Error::domain(format!(
            "fluctuation scale needs d in (-phi^(-1/2), -1) or (1, inf), got {d}"
        )))
    }
}

/// Tail mass `int_x^inf rho_phi` of the continuous part.
///
/// Integrates in the angle `t` with `x = gamma_minus + 2 (1 - cos t)`, which
/// removes the square-root endpoint behaviour.
fn tail_mass_angle(t0: f64, phi: f64) -> Result<f64> {
    let (lo, _) = edges(phi)?;
    let s = phi.sqrt();
    let integrand = |t: f64| {
        let x = lo + 4.0 * (0.5 * t).sin().powi(2);
        if x <= 0.0 {
            // only reachable at phi = 1, t = 0, where the limit is 2 / pi
            return 2.0 / PI;
        }
        4.0 * s * t.sin().powi(2) / (2.0 * PI * x)
    };
    Ok(quadrature::integrate(integrand, t0, PI, 1e-12, 1e-15)?.value)
}

fn angle_of(x: f64, phi: f64) -> Result<f64> {
    let (lo, _) = edges(phi)?;
    Ok((1.0 - (x - lo) / 2.0).clamp(-1.0, 1.0).acos())
}

/// `int_x^inf rho_phi(dy)` for `x > 0`.
pub fn mp_tail_mass(x: f64, phi: f64) -> Result<f64> {
    check_phi(phi)?;
    let (lo, hi) = edges(phi)?;
    if x >= hi {
        return Ok(0.0);
    }
    let x = x.max(lo);
    tail_mass_angle(angle_of(x, phi)?, phi)
}

/// Classical eigenvalue locations `gamma_i`, defined by
/// `int_{gamma_i}^inf rho_phi = i / N`, for 1-based indices in `[1, K]`.
pub fn classical_eigenvalue_locations(aspect: &Aspect, indices: &[usize]) -> Result<Vec<f64>> {
    let phi = aspect.phi;
    let (lo, _) = edges(phi)?;
    let total = phi.min(1.0);
    indices
        .iter()
        .map(|&i| {
            if i == 0 || i > aspect.k {
                return Err(Error::domain(format!("index {i} outside [1, {}]", aspect.k)));
            }
            let target = i as f64 / aspect.n as f64;
            if target >= total * (1.0 - 1e-15) {
                return Ok(lo);
            }
            let t = solve_angle(target, phi)?;
            Ok(lo + 4.0 * (0.5 * t).sin().powi(2))
        })
        .collect()
}

/// Finds the angle `t` with tail mass `target` by bisection with a secant
/// step whenever it lands inside the bracket.
fn solve_angle(target: f64, phi: f64) -> Result<f64> {
    // tail mass decreases from `total` at t = 0 to 0 at t = pi
    let (mut a, mut b) = (0.0_f64, PI);
    let (mut fa, mut fb) = (phi.min(1.0) - target, -target);
    for _ in 0..200 {
        let secant = b - fb * (b - a) / (fb - fa);
        let mid = 0.5 * (a + b);
        let t = if secant > a && secant < b && (b - a) < 0.5 { secant } else { mid };
        let ft = tail_mass_angle(t, phi)? - target;
        if ft == 0.0 {
            return Ok(t);
        }
        if (ft > 0.0) == (fa > 0.0) {
            a = t;
            fa = ft;
        } else {
            b = t;
            fb = ft;
        }
        // keep the bracket shrinking even when the secant hugs one end
        let m = 0.5 * (a + b);
        let fm = tail_mass_angle(m, phi)? - target;
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
        if b - a < 1e-15 {
            return Ok(0.5 * (a + b));
        }
    }
    Err(Error::Numerical(format!(
        "classical location bracket did not close: [{a}, {b}], residual {fa}"
    )))
}

/// Edge distance `kappa_a` and, for `a <= K/2`, the level spacing `Delta_a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeScales {
    pub kappa: f64,
    pub spacing: Option<f64>,
}

pub fn edge_distance(a: usize, k: usize) -> Result<f64> {
    if a == 0 || a > k {
        return Err(Error::domain(format!("index {a} outside [1, {k}]")));
    }
    let kf = k as f64;
    Ok(kf.powf(-2.0 / 3.0) * (a.min(k + 1 - a) as f64).powf(2.0 / 3.0))
}

pub fn eigenvalue_spacing(a: usize, k: usize) -> Result<f64> {
    if a == 0 || 2 * a > k {
        return Err(Error::domain(format!("spacing defined for 1 <= a <= K/2, got a={a}, K={k}")));
    }
    Ok((k as f64).powf(-2.0 / 3.0) * (a as f64).powf(-1.0 / 3.0))
}

pub fn edge_distance_and_spacing(a: usize, k: usize) -> Result<EdgeScales> {
    let kappa = edge_distance(a, k)?;
    let spacing = eigenvalue_spacing(a, k).ok();
    Ok(EdgeScales { kappa, spacing })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Bulk and edges, `K^{-1+omega} <= eta <= 1/omega`.
    S,
    /// Outside the bulk by at least `K^{-2/3+omega}`, any `eta > 0`.
    STilde,
    /// Outside the bulk by at least `K^{-2/3+omega}`, no upper limits.
    SHat,
}

/// A validated set of spectral parameters in one of the domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainGrid {
    pub regime: Regime,
    pub omega: f64,
    pub points: Vec<SpectralPoint>,
}

impl DomainGrid {
    pub fn contains(regime: Regime, p: &SpectralPoint, aspect: &Aspect, omega: f64) -> bool {
        let k = aspect.k as f64;
        let kappa = match p.kappa(aspect.phi) {
            Ok(v) => v,
            Err(_) => return false,
        };
        let outside = p.e < aspect.gamma_minus || p.e > aspect.gamma_plus;
        let modulus = p.z().norm();
        match regime {
            Regime::S => {
                kappa <= 1.0 / omega
                    && p.eta >= k.powf(-1.0 + omega)
                    && p.eta <= 1.0 / omega
                    && modulus >= omega
            }
            Regime::STilde => {
                outside
                    && kappa >= k.powf(-2.0 / 3.0 + omega)
                    && kappa <= 1.0 / omega
                    && modulus >= omega
                    && p.eta > 0.0
                    && p.eta <= 1.0 / omega
            }
            Regime::SHat => outside && kappa >= k.powf(-2.0 / 3.0 + omega) && p.eta > 0.0,
        }
    }

    pub fn new(regime: Regime, points: Vec<SpectralPoint>, aspect: &Aspect, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::domain(format!("omega must lie in (0, 1), got {omega}")));
        }
        for (i, p) in points.iter().enumerate() {
            if !Self::contains(regime, p, aspect, omega) {
                return Err(Error::domain(format!(
                    "grid point {i} ({} + {}i) is outside regime {regime:?}",
                    p.e, p.eta
                )));
            }
        }
        Ok(DomainGrid { regime, omega, points })
    }

    /// A tensor grid in `S`: energies spread over the bulk plus a margin,
    /// heights log-spaced between `K^{-1+omega}` and one.
    pub fn bulk(aspect: &Aspect, omega: f64, energies: usize, heights: usize) -> Result<Self> {
        let k = aspect.k as f64;
        let eta_lo = k.powf(-1.0 + omega) * (1.0 + 1e-9);
        let eta_hi = 1.0;
        let lo = (aspect.gamma_minus - 0.5).max(omega * 1.5);
        let hi = aspect.gamma_plus + 0.5;
        let mut points = Vec::with_capacity(energies * heights);
        for i in 0..energies {
            let e = if energies == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (energies - 1) as f64
            };
            for j in 0..heights {
                let eta = if heights == 1 {
                    eta_hi
                } else {
                    eta_lo * (eta_hi / eta_lo).powf(j as f64 / (heights - 1) as f64)
                };
                points.push(SpectralPoint { e, eta });
            }
        }
        Self::new(Regime::S, points, aspect, omega)
    }

    /// Points right of the bulk at distances log-spaced from
    /// `2 K^{-2/3+omega}` to one, all with the same small `eta`.
    pub fn outside_right(aspect: &Aspect, omega: f64, count: usize, eta: f64) -> Result<Self> {
        let k = aspect.k as f64;
        let lo = 2.0 * k.powf(-2.0 / 3.0 + omega);
        let hi = 1.0_f64.max(lo * 2.0);
        let points = (0..count)
            .map(|i| {
                let frac = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
                SpectralPoint {
                    e: aspect.gamma_plus + lo * (hi / lo).powf(frac),
                    eta,
                }
            })
            .collect();
        Self::new(Regime::STilde, points, aspect, omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn edges_examples() {
        assert_eq!(edges(1.0).unwrap(), (0.0, 4.0));
        let (a, b) = edges(4.0).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (b - 4.5).abs() < 1e-15);
        let (a, b) = edges(0.25).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (b - 4.5).abs() < 1e-15);
        assert!(edges(0.0).is_err());
        assert!(edges(-1.0).is_err());
    }

    #[test]
    fn density_examples() {
        assert!((mp_density(2.0, 1.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(mp_density(5.0, 1.0).unwrap(), 0.0);
        assert_eq!(mp_density(-1.0, 1.0).unwrap(), 0.0);
        assert_eq!(mp_atom(0.5).unwrap(), 0.5);
        assert!((mp_density_companion(2.0, 1.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(mp_atom_companion(4.0).unwrap(), 0.75);
    }

    #[test]
    fn stieltjes_examples() {
        let m = stieltjes_m(c(4.5, 0.0), 1.0).unwrap();
        assert!((m - c(-1.0 / 3.0, 0.0)).norm() < 1e-15);
        let w = stieltjes_w(c(4.5, 0.0), 1.0).unwrap();
        assert!((w - c(-0.5, 0.0)).norm() < 1e-15);
        for phi in [0.25, 1.0, 3.0] {
            let (lo, hi) = edges(phi).unwrap();
            let wp = stieltjes_w_boundary(hi, phi).unwrap();
            assert!((wp - c(-1.0, 0.0)).norm() < 1e-12);
            let wm = stieltjes_w_boundary(lo, phi).unwrap();
            assert!((wm - c(1.0, 0.0)).norm() < 1e-12);
        }
        assert!(stieltjes_m(c(2.0, 0.0), 1.0).is_err());
        assert!(stieltjes_m_boundary(2.0, 1.0).unwrap().im > 0.0);
    }

    #[test]
    fn theta_and_inverse_examples() {
        assert!((classical_location(2.0, 1.0).unwrap() - 4.5).abs() < 1e-15);
        assert!((classical_location(1.0, 2.0).unwrap() - edges(2.0).unwrap().1).abs() < 1e-15);
        assert!((classical_location(-1.0, 4.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(classical_location(0.0, 1.0).is_err());
        assert!((inverse_classical_location(4.5, 1.0, Side::Right).unwrap() - 2.0).abs() < 1e-14);
        let near = inverse_classical_location(4.0 + 1e-12, 1.0, Side::Right).unwrap();
        assert!((near - 1.0).abs() < 1e-5);
        assert!(matches!(
            inverse_classical_location(3.0, 1.0, Side::Right),
            Err(Error::NoOutlier(_))
        ));
        // phi = 1 has no admissible left spikes
        assert!(inverse_classical_location(-0.1, 1.0, Side::Left).is_err());
        let d = inverse_classical_location(classical_location(-0.3, 0.25).unwrap(), 0.25, Side::Left);
        assert!(d.is_err(), "-0.3 is not a left outlier strength");
        let d = inverse_classical_location(classical_location(-1.5, 0.25).unwrap(), 0.25, Side::Left).unwrap();
        assert!((d + 1.5).abs() < 1e-12);
    }

    #[test]
    fn cone_and_scale_examples() {
        assert!((cone_mass(2.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(cone_mass(1.0 + 1e-12, 1.0).unwrap() < 1e-10);
        assert!(cone_mass(1e9, 1.0).unwrap() > 1.0 - 1e-8);
        assert!(cone_mass(1.0, 1.0).is_err());
        // worked example for d = 10: (11 / 12.1) * 0.99
        assert!((cone_mass(10.0, 1.0).unwrap() - 11.0 / 12.1 * 0.99).abs() < 1e-15);
        assert!((fluctuation_scale(1.5, 1.0).unwrap() - 0.5_f64.sqrt()).abs() < 1e-15);
        assert!((fluctuation_scale(3.0, 1.0).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(fluctuation_scale(2.0, 1.0).unwrap(), 1.0);
        assert!(fluctuation_scale(0.5, 1.0).is_err());
        assert!(fluctuation_scale(-0.5, 1.0).is_err());
    }

    #[test]
    fn scale_branch_ratio_at_two() {
        for i in 0..50 {
            let phi = 0.01 * 1.25_f64.powi(i);
            let left = fluctuation_scale(2.0, phi).unwrap();
            let right = 1.0 + 2.0 / (1.0 + 1.0 / phi.sqrt());
            let ratio = right / left;
            assert!((1.0..=3.0).contains(&ratio), "phi={phi} ratio={ratio}");
        }
    }

    #[test]
    fn edge_scale_examples() {
        let s = edge_distance_and_spacing(1, 1000).unwrap();
        assert!((s.kappa - 0.01).abs() < 1e-15);
        assert!((s.spacing.unwrap() - 0.01).abs() < 1e-15);
        let k = 1000;
        assert!((edge_distance(k, k).unwrap() - edge_distance(1, k).unwrap()).abs() < 1e-18);
        assert!(edge_distance_and_spacing(k, k).unwrap().spacing.is_none());
        assert!(eigenvalue_spacing(501, 1000).is_err());
        assert!(edge_distance(0, 10).is_err());
        assert!(edge_distance(11, 10).is_err());
    }

    /// Closed form for phi = 1: with x = 4 sin^2 s the tail mass above x is
    /// `1 - (2/pi)(s + sin s cos s)`.
    fn tail_phi_one(x: f64) -> f64 {
        let s = (x / 4.0).sqrt().asin();
        1.0 - 2.0 / PI * (s + s.sin() * s.cos())
    }

    #[test]
    fn classical_median_matches_closed_form() {
        let aspect = Aspect::new(1000, 1000).unwrap();
        let g = classical_eigenvalue_locations(&aspect, &[500]).unwrap()[0];
        assert!((tail_phi_one(g) - 0.5).abs() < 1e-10);
        // brute-force bisection on the closed form
        let (mut a, mut b) = (0.0, 4.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if tail_phi_one(m) > 0.5 {
                a = m
            } else {
                b = m
            }
        }
        assert!((g - 0.5 * (a + b)).abs() < 1e-8);
    }

    #[test]
    fn classical_locations_endpoints_and_order() {
        let aspect = Aspect::new(300, 600).unwrap();
        let idx: Vec<usize> = (1..=aspect.k).collect();
        let g = classical_eigenvalue_locations(&aspect, &idx).unwrap();
        assert!(g.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(*g.last().unwrap(), aspect.gamma_minus);
        assert!(g[0] < aspect.gamma_plus);
        assert!(classical_eigenvalue_locations(&aspect, &[0]).is_err());
        assert!(classical_eigenvalue_locations(&aspect, &[301]).is_err());
    }

    #[test]
    fn grid_membership() {
        let aspect = Aspect::new(1000, 1000).unwrap();
        let grid = DomainGrid::bulk(&aspect, DEFAULT_OMEGA, 10, 5).unwrap();
        assert_eq!(grid.points.len(), 50);
        let out = DomainGrid::outside_right(&aspect, DEFAULT_OMEGA, 8, 1e-6).unwrap();
        assert!(out.points.iter().all(|p| p.e > aspect.gamma_plus));
        let bad = vec![SpectralPoint { e: 2.0, eta: 1e-9 }];
        assert!(DomainGrid::new(Regime::S, bad, &aspect, DEFAULT_OMEGA).is_err());
        let inside = vec![SpectralPoint { e: 2.0, eta: 0.1 }];
        assert!(DomainGrid::new(Regime::STilde, inside, &aspect, DEFAULT_OMEGA).is_err());
    }

    #[test]
    fn aspect_growth_bound() {
        assert!(Aspect::new(5, 100_000).is_err());
        assert!(Aspect::with_growth_exponent(5, 100_000, 10.0).is_ok());
        let a = Aspect::new(200, 100).unwrap();
        assert_eq!(a.k, 100);
        assert_eq!(a.phi, 2.0);
    }
}
