//! Populations, noise draws and the matrices built from them.
//!
//! The population covariance is `Sigma = I + phi^{1/2} sum_i d_i v_i v_i^T`.
//! A draw holds the noise `X` and assembles `H = Y Y^T`, its mean-centered
//! version, and the spiked matrices `Q = Sigma^{1/2} H Sigma^{1/2}` and
//! `Q_dot` on demand. `Sigma^{1/2}` is kept in low-rank form
//! `I + sum_i (sqrt(sigma_i) - 1) v_i v_i^T`, so conjugating by it costs
//! `O(M^2 r)` instead of two dense products.

use std::io::{Read, Write};
use std::sync::OnceLock;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::laws::{sigma_of, Aspect};
use crate::rng::{self, Stream};
use crate::spectral::{decompose, linalg};
use crate::{Error, Result};

/// Default cap on the number of spikes.
pub const DEFAULT_MAX_SPIKES: usize = 8;

const ORTHONORMAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    #[default]
    Gaussian,
    Rademacher,
    Uniform,
}

impl EntryLaw {
    /// One entry with mean zero and variance `scale^2`.
    fn sample<R: Rng>(self, rng: &mut R, scale: f64) -> f64 {
        match self {
            EntryLaw::Gaussian => {
                let g: f64 = StandardNormal.sample(rng);
                scale * g
            }
            EntryLaw::Rademacher => {
                if rng.gen::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
            EntryLaw::Uniform => scale * 3.0_f64.sqrt() * rng.gen_range(-1.0..1.0),
        }
    }
}

/// How a direction vector is specified in a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionSpec {
    /// Standard basis vector, 0-based.
    Coordinate(usize),
    /// Gaussian vector from a seeded stream, orthogonalised against the
    /// directions listed before it.
    Random { seed: u64 },
    /// Constant on the listed 0-based coordinates, zero elsewhere.
    Support(Vec<usize>),
    /// Explicit entries; normalised on construction.
    Vector(Vec<f64>),
    /// Direction of the spike with this 1-based rank. Only valid for probes.
    Spike(usize),
}

/// Resolves a list of directions in dimension `m`. Random entries are
/// orthogonalised against the earlier entries so that spike lists built
/// from them are orthonormal by construction.
pub fn resolve_directions(specs: &[DirectionSpec], m: usize, spikes: Option<&SpikeSpec>) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(specs.len());
    for (idx, spec) in specs.iter().enumerate() {
        let path = format!("directions[{idx}]");
        let mut v = match spec {
            DirectionSpec::Coordinate(k) => {
                if *k >= m {
                    return Err(Error::config(path, format!("coordinate {k} outside [0, {m})")));
                }
                let mut v = vec![0.0; m];
                v[*k] = 1.0;
                v
            }
            DirectionSpec::Random { seed } => {
                let mut r = rng::stream(*seed, idx as u64, Stream::Directions);
                let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut r)).collect();
                for u in &out {
                    let c = linalg::dot(u, &v);
                    linalg::axpy(-c, u, &mut v);
                }
                v
            }
            DirectionSpec::Support(s) => {
                if s.is_empty() || s.iter().any(|&k| k >= m) {
                    return Err(Error::config(path, "support must be nonempty and inside [0, M)"));
                }
                let mut v = vec![0.0; m];
                for &k in s {
                    v[k] = 1.0;
                }
                v
            }
            DirectionSpec::Vector(x) => {
                if x.len() != m {
                    return Err(Error::config(path, format!("vector has length {}, expected {m}", x.len())));
                }
                x.clone()
            }
            DirectionSpec::Spike(i) => match spikes {
                Some(spec) if *i >= 1 && *i <= spec.spikes.len() => spec.spikes[*i - 1].v.clone(),
                _ => return Err(Error::config(path, format!("spike {i} does not exist"))),
            },
        };
        let norm = linalg::norm(&v);
        if !(norm > 0.0) {
            return Err(Error::config(path, "direction has zero norm"));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    Ok(out)
}

/// One population spike `(d, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spike {
    pub d: f64,
    pub v: Vec<f64>,
}

/// Validated spike list, sorted by nonincreasing `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeSpec {
    pub spikes: Vec<Spike>,
    pub r: usize,
    phi: f64,
    m: usize,
}

impl SpikeSpec {
    pub fn new(aspect: &Aspect, mut spikes: Vec<Spike>, r: usize, max_spikes: usize) -> Result<Self> {
        if spikes.len() > max_spikes {
            return Err(Error::config(
                "spikes",
                format!("{} spikes exceed the configured bound {max_spikes}", spikes.len()),
            ));
        }
        if spikes.len() > aspect.m {
            return Err(Error::config("spikes", "more spikes than dimensions"));
        }
        let lower = -1.0 / aspect.sqrt_phi();
        for (i, s) in spikes.iter().enumerate() {
            let path = format!("spikes[{i}].d");
            if !s.d.is_finite() || s.d == 0.0 {
                return Err(Error::config(path, format!("spike strength must be finite and nonzero, got {}", s.d)));
            }
            if s.d <= lower {
                return Err(Error::config(
                    path,
                    format!("d = {} makes Sigma singular or indefinite (needs d > {lower})", s.d),
                ));
            }
            if s.v.len() != aspect.m {
                return Err(Error::config(
                    format!("spikes[{i}].direction"),
                    format!("length {} differs from M = {}", s.v.len(), aspect.m),
                ));
            }
        }
        for i in 0..spikes.len() {
            for j in 0..=i {
                let g = linalg::dot(&spikes[i].v, &spikes[j].v);
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - target).abs() > ORTHONORMAL_TOL {
                    return Err(Error::config(
                        format!("spikes[{i}].direction"),
                        format!("directions {j} and {i} are not orthonormal (inner product {g:e})"),
                    ));
                }
            }
        }
        spikes.sort_by(|a, b| b.d.total_cmp(&a.d));
        Ok(SpikeSpec {
            spikes,
            r,
            phi: aspect.phi,
            m: aspect.m,
        })
    }

    pub fn empty(aspect: &Aspect) -> Self {
        SpikeSpec {
            spikes: Vec::new(),
            r: 0,
            phi: aspect.phi,
            m: aspect.m,
        }
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn strengths(&self) -> Vec<f64> {
        self.spikes.iter().map(|s| s.d).collect()
    }

    pub fn sigma(&self, i: usize) -> f64 {
        sigma_of(self.spikes[i].d, self.phi)
    }

    /// `M x |R|` matrix whose columns are the spike directions.
    pub fn directions(&self) -> Mat<f64> {
        Mat::from_fn(self.m, self.spikes.len(), |i, j| self.spikes[j].v[i])
    }

    /// Components `w_i = <v_i, w>` and the squared norm of the remainder of
    /// `w` outside the spike span.
    pub fn components(&self, w: &[f64]) -> (Vec<f64>, f64) {
        let comps: Vec<f64> = self.spikes.iter().map(|s| linalg::dot(&s.v, w)).collect();
        let rest = (linalg::dot(w, w) - comps.iter().map(|c| c * c).sum::<f64>()).max(0.0);
        (comps, rest)
    }
}

/// Outlier indices and the distances that control sticking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierSet {
    /// 0-based positions in the sorted spike list.
    pub indices: Vec<usize>,
    pub s_plus: usize,
    pub s_minus: usize,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
}

/// Spikes with `|d| >= 1 + K^{-1/3}` and the distances `alpha_pm`, where the
/// minimum runs over all `M` values of `d` (unspiked directions count as 0).
pub fn outlier_index_set(spec: &SpikeSpec, k: usize) -> OutlierSet {
    let threshold = 1.0 + (k as f64).powf(-1.0 / 3.0);
    let mut indices = Vec::new();
    let (mut s_plus, mut s_minus) = (0, 0);
    for (i, s) in spec.spikes.iter().enumerate() {
        if s.d.abs() >= threshold {
            indices.push(i);
            if s.d > 0.0 {
                s_plus += 1;
            } else {
                s_minus += 1;
            }
        }
    }
    let unspiked = spec.len() < spec.m;
    let fold = |target: f64| {
        let init = if unspiked { 1.0 } else { f64::INFINITY };
        spec.spikes.iter().fold(init, |acc, s| acc.min((s.d - target).abs()))
    };
    OutlierSet {
        indices,
        s_plus,
        s_minus,
        alpha_plus: fold(1.0),
        alpha_minus: fold(-1.0),
    }
}

/// The orthogonal factor `O` when `r > 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Mixing {
    #[default]
    Identity,
    /// Haar-distributed rotation from a seeded stream.
    Haar { seed: u64 },
    #[serde(skip)]
    Explicit(Mat<f64>),
}

/// `Sigma`, `T` and `O` in structured form.
#[derive(Clone, Debug)]
pub struct Population {
    pub aspect: Aspect,
    pub spec: SpikeSpec,
    /// `M x |R|` spike directions.
    v: Mat<f64>,
    /// `sqrt(sigma_i) - 1` for each spike.
    sqrt_coeff: Vec<f64>,
    /// First `M` rows of `O`, i.e. `(I_M, 0) O`; `None` when that is `(I_M, 0)`.
    o_top: Option<Mat<f64>>,
    o_full: Option<Mat<f64>>,
}

impl Population {
    pub fn new(spec: SpikeSpec, aspect: &Aspect, mixing: &Mixing) -> Result<Self> {
        let width = aspect.m + spec.r;
        let o_full = match mixing {
            Mixing::Identity => None,
            Mixing::Haar { seed } => Some(linalg::haar_orthogonal(width, *seed)),
            Mixing::Explicit(o) => {
                if o.nrows() != width || o.ncols() != width {
                    return Err(Error::Shape(format!("O must be {width} x {width}")));
                }
                Some(o.clone())
            }
        };
        let o_top = o_full.as_ref().map(|o| o.as_ref().subrows(0, aspect.m).to_owned());
        let sqrt_coeff = (0..spec.len()).map(|i| spec.sigma(i).sqrt() - 1.0).collect();
        Ok(Population {
            aspect: *aspect,
            v: spec.directions(),
            spec,
            sqrt_coeff,
            o_top,
            o_full,
        })
    }

    /// Recovers `(Sigma, O)` from a general factor `T` (`M x (M + r)`):
    /// `Sigma = T T^T`, spikes are the eigenpairs of `Sigma` away from one,
    /// and `O` completes the rows of `Sigma^{-1/2} T` by Gram-Schmidt over
    /// the standard basis in order.
    pub fn from_factor(t: MatRef<'_, f64>, aspect: &Aspect, max_spikes: usize) -> Result<Self> {
        let m = aspect.m;
        if t.nrows() != m || t.ncols() < m {
            return Err(Error::Shape(format!("T must be {m} x (M + r), got {} x {}", t.nrows(), t.ncols())));
        }
        let r = t.ncols() - m;
        let sigma = t * t.transpose();
        let eig = decompose(sigma.as_ref())?;
        let vectors = eig.vectors.as_ref().expect("full decomposition");
        let mut spikes = Vec::new();
        for (i, &s) in eig.values.iter().enumerate() {
            if (s - 1.0).abs() > 1e-10 {
                let v = (0..m).map(|k| vectors[(k, i)]).collect();
                spikes.push(Spike {
                    d: (s - 1.0) / aspect.sqrt_phi(),
                    v,
                });
            }
        }
        let inv_sqrt = linalg::psd_power(&eig, -0.5);
        let top = &inv_sqrt * t;
        let o = linalg::complete_orthonormal_rows(top.as_ref())?;
        let spec = SpikeSpec::new(aspect, spikes, r, max_spikes)?;
        Population::new(spec, aspect, &Mixing::Explicit(o))
    }

    pub fn r(&self) -> usize {
        self.spec.r
    }

    pub fn spike_directions(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    /// Dense `Sigma`.
    pub fn sigma(&self) -> Mat<f64> {
        let m = self.aspect.m;
        let s = self.aspect.sqrt_phi();
        let mut out = Mat::<f64>::identity(m, m);
        for sp in &self.spec.spikes {
            for j in 0..m {
                for i in 0..m {
                    out[(i, j)] += s * sp.d * sp.v[i] * sp.v[j];
                }
            }
        }
        out
    }

    /// Dense `Sigma^{1/2}` by symmetric eigendecomposition with clamping.
    pub fn sqrt_sigma(&self) -> Result<Mat<f64>> {
        let eig = decompose(self.sigma().as_ref())?;
        Ok(linalg::psd_power(&eig, 0.5))
    }

    /// Dense `O` (`(M + r) x (M + r)`).
    pub fn o(&self) -> Mat<f64> {
        match &self.o_full {
            Some(o) => o.clone(),
            None => {
                let w = self.aspect.m + self.spec.r;
                Mat::identity(w, w)
            }
        }
    }

    /// Dense `T = Sigma^{1/2} (I_M, 0) O`.
    pub fn t(&self) -> Result<Mat<f64>> {
        let m = self.aspect.m;
        let w = m + self.spec.r;
        let top = match &self.o_top {
            Some(o) => o.clone(),
            None => Mat::from_fn(m, w, |i, j| if i == j { 1.0 } else { 0.0 }),
        };
        Ok(&self.sqrt_sigma()? * &top)
    }

    /// `x <- Sigma^{1/2} x` in low-rank form.
    pub fn apply_sqrt_sigma(&self, x: &mut [f64]) {
        let proj: Vec<f64> = (0..self.spec.len())
            .map(|a| self.sqrt_coeff[a] * linalg::dot(self.v.col_as_slice(a), x))
            .collect();
        for (a, p) in proj.iter().enumerate() {
            linalg::axpy(*p, self.v.col_as_slice(a), x);
        }
    }

    /// `Sigma^{1/2} A Sigma^{1/2}` for symmetric `A`, in low-rank form.
    pub fn conjugate(&self, a: &Mat<f64>) -> Mat<f64> {
        let k = self.spec.len();
        let mut out = a.clone();
        if k == 0 {
            return out;
        }
        let m = self.aspect.m;
        let c = &self.sqrt_coeff;
        let b = a * &self.v; // M x k
        // E = C V^T A V C
        let vtb = self.v.transpose() * &b;
        let mut e = Mat::<f64>::zeros(k, k);
        for x in 0..k {
            for y in 0..k {
                e[(x, y)] = c[x] * vtb[(x, y)] * c[y];
            }
        }
        for j in 0..m {
            for i in 0..m {
                let mut acc = 0.0;
                for x in 0..k {
                    acc += c[x] * (b[(i, x)] * self.v[(j, x)] + self.v[(i, x)] * b[(j, x)]);
                    let mut inner = 0.0;
                    for y in 0..k {
                        inner += e[(x, y)] * self.v[(j, y)];
                    }
                    acc += self.v[(i, x)] * inner;
                }
                out[(i, j)] += acc;
            }
        }
        linalg::symmetrize(&mut out);
        out
    }

    /// Noise `X` of shape `(M + r) x N` with entry variance `(NM)^{-1/2}`.
    pub fn sample_noise(&self, law: EntryLaw, seed: u64, trial: u64) -> Mat<f64> {
        sample_noise(law, self.aspect.m + self.spec.r, &self.aspect, seed, trial)
    }

    /// Draws the noise for `(seed, trial)` and wraps it in a [`SampleDraw`].
    pub fn draw(&self, law: EntryLaw, seed: u64, trial: u64) -> SampleDraw<'_> {
        let x = self.sample_noise(law, seed, trial);
        SampleDraw::assemble(self, x, rng::trial_seed(seed, trial))
    }
}

/// `rows x N` noise with entries of variance `(NM)^{-1/2}`, filled column by
/// column from the `(seed, trial)` noise stream.
pub fn sample_noise(law: EntryLaw, rows: usize, aspect: &Aspect, seed: u64, trial: u64) -> Mat<f64> {
    let scale = ((aspect.n * aspect.m) as f64).powf(-0.25);
    let mut r = rng::stream(seed, trial, Stream::Noise);
    let mut x = Mat::<f64>::zeros(rows, aspect.n);
    for j in 0..aspect.n {
        for v in x.col_as_slice_mut(j) {
            *v = law.sample(&mut r, scale);
        }
    }
    x
}

/// Which matrix of a draw to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `Q` against reference `H`.
    #[default]
    Plain,
    /// `Q_dot` against reference `H_dot`.
    MeanCentered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    H,
    HDot,
    Q,
    QDot,
}

impl Variant {
    pub fn spiked(self) -> MatrixKind {
        match self {
            Variant::Plain => MatrixKind::Q,
            Variant::MeanCentered => MatrixKind::QDot,
        }
    }

    pub fn reference(self) -> MatrixKind {
        match self {
            Variant::Plain => MatrixKind::H,
            Variant::MeanCentered => MatrixKind::HDot,
        }
    }
}

/// One noise draw together with lazily assembled matrices. The caches are
/// filled at most once, so a draw is logically immutable.
pub struct SampleDraw<'p> {
    pub population: &'p Population,
    pub x: Mat<f64>,
    y: Option<Mat<f64>>,
    /// `Y e` with `e = N^{-1/2} (1, ..., 1)`.
    ye: Vec<f64>,
    pub seed: u64,
    h: OnceLock<Mat<f64>>,
    hdot: OnceLock<Mat<f64>>,
    q: OnceLock<Mat<f64>>,
    qdot: OnceLock<Mat<f64>>,
}

impl<'p> SampleDraw<'p> {
    pub fn assemble(population: &'p Population, x: Mat<f64>, seed: u64) -> Self {
        let y = population.o_top.as_ref().map(|o| o * &x);
        let mut draw = SampleDraw {
            population,
            x,
            y,
            ye: Vec::new(),
            seed,
            h: OnceLock::new(),
            hdot: OnceLock::new(),
            q: OnceLock::new(),
            qdot: OnceLock::new(),
        };
        let n = population.aspect.n;
        let scale = 1.0 / (n as f64).sqrt();
        let m = population.aspect.m;
        let mut ye = vec![0.0; m];
        {
            let y = draw.y();
            for j in 0..n {
                let col = y.col(j);
                for i in 0..m {
                    ye[i] += col[i];
                }
            }
        }
        ye.iter_mut().for_each(|v| *v *= scale);
        draw.ye = ye;
        draw
    }

    /// `Y = (I_M, 0) O X`.
    pub fn y(&self) -> MatRef<'_, f64> {
        match &self.y {
            Some(y) => y.as_ref(),
            None => self.x.as_ref().subrows(0, self.population.aspect.m),
        }
    }

    pub fn h(&self) -> &Mat<f64> {
        self.h.get_or_init(|| {
            let y = self.y();
            let mut h = y * y.transpose();
            linalg::symmetrize(&mut h);
            h
        })
    }

    pub fn hdot(&self) -> &Mat<f64> {
        self.hdot.get_or_init(|| {
            let n = self.population.aspect.n as f64;
            let mut h = self.h().clone();
            let m = h.nrows();
            let f = n / (n - 1.0);
            for j in 0..m {
                for i in 0..m {
                    h[(i, j)] = f * (h[(i, j)] - self.ye[i] * self.ye[j]);
                }
            }
            h
        })
    }

    pub fn q(&self) -> &Mat<f64> {
        self.q.get_or_init(|| self.population.conjugate(self.h()))
    }

    pub fn qdot(&self) -> &Mat<f64> {
        self.qdot.get_or_init(|| self.population.conjugate(self.hdot()))
    }

    pub fn matrix(&self, kind: MatrixKind) -> &Mat<f64> {
        match kind {
            MatrixKind::H => self.h(),
            MatrixKind::HDot => self.hdot(),
            MatrixKind::Q => self.q(),
            MatrixKind::QDot => self.qdot(),
        }
    }

    /// `out = A x` for `A` of the given kind, without forming `A`.
    pub fn apply(&self, kind: MatrixKind, x: &[f64], out: &mut [f64]) {
        let spiked = matches!(kind, MatrixKind::Q | MatrixKind::QDot);
        let centered = matches!(kind, MatrixKind::HDot | MatrixKind::QDot);
        let mut u = x.to_vec();
        if spiked {
            self.population.apply_sqrt_sigma(&mut u);
        }
        let y = self.y();
        let n = y.ncols();
        let t: Vec<f64> = (0..n).map(|j| linalg::dot_col(y.col(j), &u)).collect();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &tj) in t.iter().enumerate() {
            linalg::axpy_col(tj, y.col(j), out);
        }
        if centered {
            let f = n as f64 / (n as f64 - 1.0);
            let c = linalg::dot(&self.ye, &u);
            for (o, e) in out.iter_mut().zip(&self.ye) {
                *o = f * (*o - c * e);
            }
        }
        if spiked {
            self.population.apply_sqrt_sigma(out);
        }
    }
}

/// One configured spike: a strength and how to build its direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeConfig {
    pub d: f64,
    /// Defaults to the coordinate vector with the spike's list position.
    #[serde(default)]
    pub direction: Option<DirectionSpec>,
}

fn default_max_spikes() -> usize {
    DEFAULT_MAX_SPIKES
}

/// Serializable description of a population and its noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub r: usize,
    #[serde(default)]
    pub spikes: Vec<SpikeConfig>,
    #[serde(default)]
    pub law: EntryLaw,
    #[serde(default)]
    pub mixing: Mixing,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_max_spikes")]
    pub max_spikes: usize,
}

impl EnsembleConfig {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            r: 0,
            spikes: Vec::new(),
            law: EntryLaw::Gaussian,
            mixing: Mixing::Identity,
            variant: Variant::Plain,
            max_spikes: DEFAULT_MAX_SPIKES,
        }
    }

    pub fn with_spikes(mut self, d: &[f64]) -> Self {
        self.spikes = d.iter().map(|&d| SpikeConfig { d, direction: None }).collect();
        self
    }

    pub fn with_law(mut self, law: EntryLaw) -> Self {
        self.law = law;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Same population recipe at another size.
    pub fn resized(&self, m: usize, n: usize) -> Self {
        Self { m, n, ..self.clone() }
    }

    pub fn build(&self) -> Result<Ensemble> {
        let aspect = Aspect::new(self.m, self.n).map_err(|e| Error::config("ensemble.m", e.to_string()))?;
        let specs: Vec<DirectionSpec> = self
            .spikes
            .iter()
            .enumerate()
            .map(|(i, s)| s.direction.clone().unwrap_or(DirectionSpec::Coordinate(i)))
            .collect();
        if specs.iter().any(|s| matches!(s, DirectionSpec::Spike(_))) {
            return Err(Error::config("ensemble.spikes", "a spike direction cannot refer to another spike"));
        }
        let dirs = resolve_directions(&specs, self.m, None).map_err(|e| prefix_path(e, "ensemble.spikes"))?;
        let spikes = self
            .spikes
            .iter()
            .zip(dirs)
            .map(|(s, v)| Spike { d: s.d, v })
            .collect();
        let spec = SpikeSpec::new(&aspect, spikes, self.r, self.max_spikes).map_err(|e| prefix_path(e, "ensemble"))?;
        let population = Population::new(spec, &aspect, &self.mixing).map_err(|e| prefix_path(e, "ensemble.mixing"))?;
        let outliers = outlier_index_set(&population.spec, aspect.k);
        Ok(Ensemble {
            config: self.clone(),
            aspect,
            population,
            outliers,
        })
    }
}

fn prefix_path(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { path, message } => Error::config(format!("{prefix}.{path}"), message),
        other => Error::config(prefix, other.to_string()),
    }
}

/// A built population with its outlier bookkeeping.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub config: EnsembleConfig,
    pub aspect: Aspect,
    pub population: Population,
    pub outliers: OutlierSet,
}

impl Ensemble {
    pub fn draw(&self, seed: u64, trial: u64) -> SampleDraw<'_> {
        self.population.draw(self.config.law, seed, trial)
    }

    pub fn spiked(&self) -> MatrixKind {
        self.config.variant.spiked()
    }

    pub fn reference(&self) -> MatrixKind {
        self.config.variant.reference()
    }

    pub fn strengths(&self) -> Vec<f64> {
        self.population.spec.strengths()
    }
}

const DUMP_MAGIC: &[u8; 8] = b"SPKLAB01";

/// Writes named matrices to the binary container:
/// the 8-byte magic `SPKLAB01`, a `u64` matrix count, then per matrix a
/// `u64` name length, the UTF-8 name, `u64` rows, `u64` cols and
/// `rows * cols` little-endian `f64` values in row-major order.
pub fn write_dump<W: Write>(mut w: W, matrices: &[(&str, MatRef<'_, f64>)]) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(matrices.len() as u64).to_le_bytes())?;
    for (name, m) in matrices {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.nrows() as u64).to_le_bytes())?;
        w.write_all(&(m.ncols() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(m.ncols() * 8);
        for i in 0..m.nrows() {
            buf.clear();
            for j in 0..m.ncols() {
                buf.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a container written by [`write_dump`].
pub fn read_dump<R: Read>(mut r: R) -> Result<Vec<(String, Mat<f64>)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Shape("not a spikelab matrix dump (bad magic)".into()));
    }
    let count = read_u64(&mut r)? as usize;
    let mut out = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = read_u64(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Shape("matrix name is not UTF-8".into()))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut m = Mat::<f64>::zeros(rows, cols);
        let mut b = [0u8; 8];
        for i in 0..rows {
            for j in 0..cols {
                r.read_exact(&mut b)?;
                m[(i, j)] = f64::from_le_bytes(b);
            }
        }
        out.push((name, m));
    }
    Ok(out)
}

impl SampleDraw<'_> {
    /// Dumps `X`, `H`, `H_dot`, `Q` and `Q_dot`.
    pub fn dump<W: Write>(&self, w: W) -> Result<()> {
        write_dump(
            w,
            &[
                ("X", self.x.as_ref()),
                ("H", self.h().as_ref()),
                ("Hdot", self.hdot().as_ref()),
                ("Q", self.q().as_ref()),
                ("Qdot", self.qdot().as_ref()),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_one(aspect: &Aspect, d: f64) -> SpikeSpec {
        let mut v = vec![0.0; aspect.m];
        v[0] = 1.0;
        SpikeSpec::new(aspect, vec![Spike { d, v }], 0, DEFAULT_MAX_SPIKES).unwrap()
    }

    #[test]
    fn sigma_example() {
        let aspect = Aspect::new(6, 6).unwrap();
        let pop = Population::new(spec_one(&aspect, 2.0), &aspect, &Mixing::Identity).unwrap();
        let s = pop.sigma();
        assert_eq!(s[(0, 0)], 3.0);
        for i in 1..6 {
            assert_eq!(s[(i, i)], 1.0);
        }
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn spec_validation() {
        let aspect = Aspect::new(4, 4).unwrap();
        let e = |k: usize| {
            let mut v = vec![0.0; 4];
            v[k] = 1.0;
            v
        };
        assert!(SpikeSpec::new(&aspect, vec![Spike { d: 0.0, v: e(0) }], 0, 8).is_err());
        assert!(SpikeSpec::new(&aspect, vec![Spike { d: -1.0, v: e(0) }], 0, 8).is_err());
        let dup = vec![Spike { d: 1.0, v: e(0) }, Spike { d: 2.0, v: e(0) }];
        assert!(SpikeSpec::new(&aspect, dup, 0, 8).is_err());
        let many = (0..3).map(|k| Spike { d: 1.0, v: e(k) }).collect();
        assert!(SpikeSpec::new(&aspect, many, 0, 2).is_err());
        let unsorted = vec![Spike { d: 0.5, v: e(0) }, Spike { d: 2.0, v: e(1) }];
        let s = SpikeSpec::new(&aspect, unsorted, 0, 8).unwrap();
        assert_eq!(s.strengths(), vec![2.0, 0.5]);
    }

    #[test]
    fn outlier_set_examples() {
        let aspect = Aspect::new(10, 10).unwrap();
        let empty = SpikeSpec::empty(&aspect);
        let o = outlier_index_set(&empty, 1000);
        assert!(o.indices.is_empty());
        assert_eq!((o.s_plus, o.s_minus), (0, 0));
        assert_eq!(o.alpha_plus, 1.0);

        let e = |k: usize| {
            let mut v = vec![0.0; 10];
            v[k] = 1.0;
            v
        };
        let spec = SpikeSpec::new(&aspect, vec![Spike { d: 2.0, v: e(0) }, Spike { d: 1.0005, v: e(1) }], 0, 8).unwrap();
        let o = outlier_index_set(&spec, 1_000_000);
        assert_eq!(o.indices, vec![0]);
        let spec = SpikeSpec::new(&aspect, vec![Spike { d: 1.2, v: e(0) }], 0, 8).unwrap();
        let o = outlier_index_set(&spec, 1_000_000_000);
        assert!((o.alpha_plus - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rademacher_support_and_determinism() {
        let aspect = Aspect::new(7, 9).unwrap();
        let a = sample_noise(EntryLaw::Rademacher, 7, &aspect, 3, 1);
        let b = sample_noise(EntryLaw::Rademacher, 7, &aspect, 3, 1);
        let scale = 63f64.powf(-0.25);
        for j in 0..9 {
            for i in 0..7 {
                assert_eq!(a[(i, j)].abs(), scale);
                assert_eq!(a[(i, j)].to_bits(), b[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let m = Mat::from_fn(3, 2, |i, j| i as f64 - 0.25 * j as f64);
        let mut buf = Vec::new();
        write_dump(&mut buf, &[("A", m.as_ref())]).unwrap();
        assert_eq!(&buf[..8], b"SPKLAB01");
        let back = read_dump(buf.as_slice()).unwrap();
        assert_eq!(back[0].0, "A");
        assert_eq!(back[0].1, m);
        // row-major layout: second value is A[0][1]
        let second = f64::from_le_bytes(buf[8 + 8 + 8 + 1 + 16 + 8..8 + 8 + 8 + 1 + 16 + 16].try_into().unwrap());
        assert_eq!(second, -0.25);
        assert!(read_dump(&b"NOTMAGIC"[..]).is_err());
    }
}
