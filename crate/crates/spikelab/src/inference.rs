//! Estimating spikes from an observed spectrum, de-biasing outlier
//! eigenvectors, and detecting subcritical spikes through eigenvector bias.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::laws::{cone_mass, fluctuation_scale, inverse_classical_location, sigma_of, Aspect, Side};
use crate::spectral::linalg;
use crate::{Error, Result};

/// Default multiple of `K^{-2/3}` an eigenvalue must clear above `gamma_+`.
pub const DEFAULT_GAP_FACTOR: f64 = 10.0;

/// Default factor standing in for "much greater than".
pub const DEFAULT_DOMINANCE: f64 = 5.0;

/// Below this predicted overlap an outlier eigenvector carries little
/// information about its spike direction.
pub const UNINFORMATIVE_OVERLAP: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeEstimate {
    /// 1-based position in the nonincreasing spectrum.
    pub index: usize,
    pub eigenvalue: f64,
    pub d_hat: f64,
    pub sigma_hat: f64,
    pub stderr: f64,
    pub cone_correction: f64,
}

/// Inverts every eigenvalue above `gamma_+ + gap_factor K^{-2/3}`.
pub fn estimate_supercritical_spikes(spectrum: &[f64], aspect: &Aspect, gap_factor: f64) -> Result<Vec<SpikeEstimate>> {
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::domain("spectrum must be sorted nonincreasing"));
    }
    let k = aspect.k as f64;
    let cut = aspect.gamma_plus + gap_factor * k.powf(-2.0 / 3.0);
    let mut out = Vec::new();
    for (i, &mu) in spectrum.iter().enumerate() {
        if !(mu > cut) {
            break;
        }
        let d = inverse_classical_location(mu, aspect.phi, Side::Right)?;
        // d > 1 is guaranteed because mu > gamma_+
        out.push(SpikeEstimate {
            index: i + 1,
            eigenvalue: mu,
            d_hat: d,
            sigma_hat: sigma_of(d, aspect.phi),
            stderr: fluctuation_scale(d, aspect.phi)? * k.powf(-0.5),
            cone_correction: cone_mass(d, aspect.phi)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectedDirection {
    pub direction: Vec<f64>,
    /// Predicted `<v, xi>^2`, i.e. `u(d_hat)`.
    pub overlap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl CorrectedDirection {
    /// `<v, xi> / u(d_hat)^{1/2}`.
    pub fn debias(&self, v: &[f64]) -> f64 {
        linalg::dot(v, &self.direction) / self.overlap.sqrt()
    }
}

pub fn corrected_eigenvector_estimate(xi: &[f64], d_hat: f64, phi: f64) -> Result<CorrectedDirection> {
    if !(d_hat > 1.0) {
        return Err(Error::domain(format!("eigenvector correction needs d_hat > 1, got {d_hat}")));
    }
    let overlap = cone_mass(d_hat, phi)?;
    let warning = (overlap < UNINFORMATIVE_OVERLAP).then(|| {
        format!("predicted overlap {overlap:.3e} is tiny: the eigenvector says little about the spike direction")
    });
    Ok(CorrectedDirection {
        direction: xi.to_vec(),
        overlap,
        warning,
    })
}

/// Coordinates `k` with `|xi_k| >= threshold M^{-1/2}`, ascending.
pub fn recover_support(xi: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::config("threshold", "must be positive"));
    }
    let cut = threshold / (xi.len() as f64).sqrt();
    Ok(xi.iter().enumerate().filter(|(_, x)| x.abs() >= cut).map(|(k, _)| k).collect())
}

/// Jaccard similarity of two index sets; one for two empty sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasDetection {
    /// Mean of `M <w, xi_a>^2` over the index range; about one without bias.
    pub score: f64,
    /// `|d - 1|` solving `score = sigma / (d - 1)^2` with `sigma` frozen at
    /// its critical value `1 + phi^{1/2}`. The sign of `d - 1` is not
    /// identifiable from the score.
    pub implied_distance: f64,
    /// `sigma(d) / (d - 1)^2` for a hypothesized `d`, if one was given.
    pub predicted_scale: Option<f64>,
    pub fires: bool,
    pub factor: f64,
}

/// `vectors` holds `xi_a` for the 1-based indices `range`; `outliers` is the
/// number of leading eigenvalues treated as outliers.
pub fn detect_subcritical_bias(
    vectors: &[Vec<f64>],
    candidate: &[f64],
    range: (usize, usize),
    outliers: usize,
    phi: f64,
    factor: f64,
    hypothesis: Option<f64>,
) -> Result<BiasDetection> {
    let (lo, hi) = range;
    if lo == 0 || hi < lo {
        return Err(Error::config("range", format!("invalid index range [{lo}, {hi}]")));
    }
    if lo <= outliers {
        return Err(Error::config(
            "range",
            format!("range [{lo}, {hi}] touches the {outliers} outlier indices"),
        ));
    }
    if vectors.len() != hi - lo + 1 {
        return Err(Error::Shape(format!("{} vectors for range [{lo}, {hi}]", vectors.len())));
    }
    let m = candidate.len() as f64;
    let score = vectors
        .iter()
        .map(|x| {
            let c = linalg::dot(candidate, x);
            m * c * c
        })
        .sum::<f64>()
        / vectors.len() as f64;
    let sigma_crit = 1.0 + phi.sqrt();
    Ok(BiasDetection {
        score,
        implied_distance: (sigma_crit / score).sqrt(),
        predicted_scale: hypothesis.map(|d| sigma_of(d, phi) / (d - 1.0).powi(2)),
        fires: score > factor,
        factor,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub holds: bool,
    /// Left side over right side of the inequality.
    pub margin: f64,
}

impl Condition {
    fn new(margin: f64, factor: f64) -> Self {
        Condition {
            holds: margin >= factor,
            margin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityReport {
    /// `sigma - 1 >> |S| / N^{1/2}`
    pub naive_entrywise: Condition,
    /// `sigma - 1 >> phi^{1/2}`
    pub pca_supercritical: Condition,
    /// `|S| >> phi^{1/2}`
    pub size_feasible: Condition,
    /// `sigma / (d - 1)^2 >> 1` for a subcritical `d`.
    pub subcritical_bias: Condition,
    pub factor: f64,
}

pub fn detectability_report(sigma: f64, support: usize, aspect: &Aspect, factor: f64) -> Result<DetectabilityReport> {
    if !(sigma >= 1.0) || support == 0 {
        return Err(Error::domain(format!("need sigma >= 1 and |S| >= 1, got {sigma}, {support}")));
    }
    let s = aspect.sqrt_phi();
    let n = aspect.n as f64;
    let d = (sigma - 1.0) / s;
    let bias = if d > 0.0 && d < 1.0 { sigma / (d - 1.0).powi(2) } else { 0.0 };
    Ok(DetectabilityReport {
        naive_entrywise: Condition::new((sigma - 1.0) * n.sqrt() / support as f64, factor),
        pca_supercritical: Condition::new((sigma - 1.0) / s, factor),
        size_feasible: Condition::new(support as f64 / s, factor),
        subcritical_bias: Condition::new(bias, factor),
        factor,
    })
}

/// Mean-centered sample covariance of raw data (`M` rows, `N` columns, entries
/// of unit variance), scaled like `Q_dot`: `(N - 1)^{-1} (M/N)^{-1/2} Y (I - e e^T) Y^T`.
pub fn centered_covariance(data: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (m, n) = (data.nrows(), data.ncols());
    if m == 0 || n < 2 {
        return Err(Error::Shape(format!("data matrix is {m} x {n}")));
    }
    let mut c = data.to_owned();
    for i in 0..m {
        let mean = (0..n).map(|j| c[(i, j)]).sum::<f64>() / n as f64;
        for j in 0..n {
            c[(i, j)] -= mean;
        }
    }
    let scale = 1.0 / ((n as f64 - 1.0) * (m as f64 / n as f64).sqrt());
    let mut q = &c * c.transpose();
    for j in 0..m {
        for i in 0..m {
            q[(i, j)] *= scale;
        }
    }
    linalg::symmetrize(&mut q);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::classical_location;

    #[test]
    fn noiseless_inversion() {
        let a = Aspect::new(1000, 1000).unwrap();
        let mu = classical_location(3.0, 1.0).unwrap();
        let est = estimate_supercritical_spikes(&[mu, 3.9, 1.0], &a, 10.0).unwrap();
        assert_eq!(est.len(), 1);
        assert!((est[0].d_hat - 3.0).abs() < 1e-12);
        assert!(est[0].d_hat > 1.0);
        assert!(estimate_supercritical_spikes(&[3.9, 1.0], &a, 10.0).unwrap().is_empty());
        assert!(estimate_supercritical_spikes(&[1.0, 3.9], &a, 10.0).is_err());
    }

    #[test]
    fn correction_limits() {
        let c = corrected_eigenvector_estimate(&[1.0, 0.0], 1e6, 1.0).unwrap();
        assert!((c.overlap - 1.0).abs() < 1e-5 && c.warning.is_none());
        let c = corrected_eigenvector_estimate(&[1.0, 0.0], 1.0001, 1.0).unwrap();
        assert!(c.warning.is_some());
        assert!(corrected_eigenvector_estimate(&[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn support_threshold() {
        let xi = [0.5, 0.01, -0.5, 0.2];
        assert_eq!(recover_support(&xi, 1e-9).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(recover_support(&xi, 0.9).unwrap(), vec![0, 2]);
        assert_eq!(jaccard(&[0, 2], &[2, 3]), 1.0 / 3.0);
    }

    #[test]
    fn bias_range_rejects_outliers() {
        let v = vec![vec![1.0, 0.0]];
        assert!(detect_subcritical_bias(&v, &[1.0, 0.0], (1, 1), 1, 1.0, 5.0, None).unwrap_err().is_config());
        let b = detect_subcritical_bias(&v, &[1.0, 0.0], (2, 2), 1, 1.0, 5.0, Some(0.9)).unwrap();
        assert_eq!(b.score, 2.0);
        assert!(!b.fires);
        assert!((b.predicted_scale.unwrap() - 190.0).abs() < 1e-9);
    }

    #[test]
    fn detectability_examples() {
        let a = Aspect::new(1000, 1000).unwrap();
        let r = detectability_report(21.0, 3, &a, 5.0).unwrap();
        assert!(r.pca_supercritical.holds);
        let r = detectability_report(1.0, 3, &a, 5.0).unwrap();
        assert!(!r.naive_entrywise.holds && !r.pca_supercritical.holds && !r.subcritical_bias.holds);
    }

    #[test]
    fn centered_covariance_is_shift_invariant() {
        let data = Mat::from_fn(3, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let shifted = Mat::from_fn(3, 5, |i, j| data[(i, j)] + 10.0 * i as f64);
        let a = centered_covariance(data.as_ref()).unwrap();
        let b = centered_covariance(shifted.as_ref()).unwrap();
        assert!(linalg::max_abs((&a - &b).as_ref()) < 1e-12);
    }
}
