//! Local operator bases and dense coefficient tables over n-site multi-indices.
//!
//! A multi-index is a vector of per-site label indices. Its flat position is
//! `Σ_s a_s (K²)^{n−1−s}`, so site 0 is the most significant digit, matching the
//! order of Kronecker factors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::{op_norm, ComplexMatrix, MAX_DIM};
use crate::{gm, hw};

/// Magnitude below which a coefficient is treated as zero when reading off degrees.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gm,
    Hw,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gm => "gm",
            Family::Hw => "hw",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gm" => Ok(Family::Gm),
            "hw" => Ok(Family::Hw),
            other => Err(Error::Input(format!("unknown basis family '{other}'"))),
        }
    }
}

/// The K² single-site basis matrices of one family, indexed by label index.
#[derive(Clone, Debug)]
pub struct SiteBasis {
    family: Family,
    k: usize,
    mats: Vec<ComplexMatrix>,
}

impl SiteBasis {
    pub fn new(family: Family, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Input(format!("local dimension {k} < 2")));
        }
        let mats = match family {
            Family::Gm => (0..k * k)
                .map(|a| gm::gm_matrix(k, gm::GmLabel::from_index(k, a)?))
                .collect::<Result<Vec<_>>>()?,
            Family::Hw => (0..k * k)
                .map(|a| hw::hw_matrix(k, hw::HwLabel::from_index(k, a)))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self { family, k, mats })
    }

    pub fn gm(k: usize) -> Result<Self> {
        Self::new(Family::Gm, k)
    }

    pub fn hw(k: usize) -> Result<Self> {
        Self::new(Family::Hw, k)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self, a: usize) -> &ComplexMatrix {
        &self.mats[a]
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.mats
    }

    /// tr[B_a ρ] for every label a.
    pub fn site_traces(&self, rho: &ComplexMatrix) -> Result<Vec<Complex64>> {
        if rho.rows() != self.k || rho.cols() != self.k {
            return shape(format!("site state must be {0}x{0}", self.k));
        }
        Ok(self
            .mats
            .iter()
            .map(|b| {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..self.k {
                    for j in 0..self.k {
                        acc += b[(i, j)] * rho[(j, i)];
                    }
                }
                acc
            })
            .collect())
    }

    /// Â(α) = K^{−n} Σ_ij conj(B_α)_ij A_ij, computed one site axis at a time.
    pub fn expand(&self, a: &ComplexMatrix, n: usize) -> Result<FourierCoeffs> {
        let dim = checked_dim(self.k, n)?;
        if a.rows() != dim || a.cols() != dim {
            return shape(format!(
                "expected a {dim}x{dim} operator for K={} n={n}, got {}x{}",
                self.k,
                a.rows(),
                a.cols()
            ));
        }
        let l = self.k * self.k;
        let (ri, cj) = interleave_offsets(self.k, n);
        let mut data = vec![Complex64::new(0.0, 0.0); l.pow(n as u32)];
        for i in 0..dim {
            for j in 0..dim {
                data[ri[i] + cj[j]] = a[(i, j)];
            }
        }
        let mut g = vec![Complex64::new(0.0, 0.0); l * l];
        for (idx, m) in self.mats.iter().enumerate() {
            for i in 0..self.k {
                for j in 0..self.k {
                    g[idx * l + i * self.k + j] = m[(i, j)].conj();
                }
            }
        }
        for s in 0..n {
            apply_axis(&mut data, l, n, s, &g);
        }
        let norm = 1.0 / (dim as f64);
        for z in &mut data {
            *z *= norm;
        }
        FourierCoeffs::from_values(self.family, self.k, n, data)
    }

    /// Σ_α Â(α) B_{α_1} ⊗ … ⊗ B_{α_n}.
    pub fn reconstruct(&self, c: &FourierCoeffs) -> Result<ComplexMatrix> {
        if c.family != self.family || c.k != self.k {
            return shape("coefficient table does not match this basis");
        }
        let n = c.n;
        let dim = checked_dim(self.k, n)?;
        let l = self.k * self.k;
        let mut data = c.values.clone();
        let mut g = vec![Complex64::new(0.0, 0.0); l * l];
        for (idx, m) in self.mats.iter().enumerate() {
            for i in 0..self.k {
                for j in 0..self.k {
                    g[(i * self.k + j) * l + idx] = m[(i, j)];
                }
            }
        }
        for s in 0..n {
            apply_axis(&mut data, l, n, s, &g);
        }
        let (ri, cj) = interleave_offsets(self.k, n);
        let mut out = ComplexMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                out[(i, j)] = data[ri[i] + cj[j]];
            }
        }
        Ok(out)
    }
}

fn checked_dim(k: usize, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::Input("number of sites must be positive".into()));
    }
    match k.checked_pow(n as u32) {
        Some(d) if d <= MAX_DIM => Ok(d),
        _ => Err(Error::Capacity(format!(
            "K^n = {k}^{n} exceeds the {MAX_DIM} dimension cap"
        ))),
    }
}

/// Row and column offsets into the interleaved (i_1 j_1 i_2 j_2 …) tensor.
fn interleave_offsets(k: usize, n: usize) -> (Vec<usize>, Vec<usize>) {
    let dim = k.pow(n as u32);
    let l = k * k;
    let mut ri = vec![0usize; dim];
    let mut cj = vec![0usize; dim];
    for idx in 0..dim {
        let mut rem = idx;
        let mut weight = 1usize;
        let (mut r, mut c) = (0usize, 0usize);
        for _ in 0..n {
            let digit = rem % k;
            rem /= k;
            r += digit * k * weight;
            c += digit * weight;
            weight *= l;
        }
        ri[idx] = r;
        cj[idx] = c;
    }
    (ri, cj)
}

/// Applies the l×l matrix `g` (row-major, output index first) along axis `s`
/// of an n-axis tensor with every axis of length l; axis 0 is most significant.
fn apply_axis(data: &mut [Complex64], l: usize, n: usize, s: usize, g: &[Complex64]) {
    let stride = l.pow((n - 1 - s) as u32);
    let block = stride * l;
    let mut line = vec![Complex64::new(0.0, 0.0); l];
    let mut out = vec![Complex64::new(0.0, 0.0); l];
    for base in (0..data.len()).step_by(block) {
        for off in 0..stride {
            for q in 0..l {
                line[q] = data[base + off + q * stride];
            }
            for (a, o) in out.iter_mut().enumerate() {
                let row = &g[a * l..(a + 1) * l];
                *o = row.iter().zip(&line).map(|(x, y)| x * y).sum();
            }
            for q in 0..l {
                data[base + off + q * stride] = out[q];
            }
        }
    }
}

/// Dense coefficient table over all K^{2n} multi-indices of one basis family.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoeffs {
    family: Family,
    k: usize,
    n: usize,
    values: Vec<Complex64>,
}

impl FourierCoeffs {
    pub fn zeros(family: Family, k: usize, n: usize) -> Result<Self> {
        checked_dim(k, n)?;
        Ok(Self {
            family,
            k,
            n,
            values: vec![Complex64::new(0.0, 0.0); (k * k).pow(n as u32)],
        })
    }

    pub fn from_values(family: Family, k: usize, n: usize, values: Vec<Complex64>) -> Result<Self> {
        checked_dim(k, n)?;
        if values.len() != (k * k).pow(n as u32) {
            return shape(format!(
                "{} coefficients supplied, {} expected",
                values.len(),
                (k * k).pow(n as u32)
            ));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite coefficient".into()));
        }
        Ok(Self { family, k, n, values })
    }

    /// Coefficient table of a single basis product with coefficient `value`.
    pub fn single(family: Family, k: usize, labels: &[usize], value: Complex64) -> Result<Self> {
        let mut c = Self::zeros(family, k, labels.len())?;
        c.set(labels, value)?;
        Ok(c)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn flat_index(&self, labels: &[usize]) -> Result<usize> {
        if labels.len() != self.n {
            return shape(format!("{} labels for {} sites", labels.len(), self.n));
        }
        let l = self.k * self.k;
        labels.iter().try_fold(0usize, |acc, &a| {
            if a >= l {
                Err(Error::Label(format!("label index {a} out of range for K={}", self.k)))
            } else {
                Ok(acc * l + a)
            }
        })
    }

    pub fn labels_of(&self, flat: usize) -> Vec<usize> {
        let l = self.k * self.k;
        let mut out = vec![0; self.n];
        let mut rem = flat;
        for s in (0..self.n).rev() {
            out[s] = rem % l;
            rem /= l;
        }
        out
    }

    pub fn get(&self, labels: &[usize]) -> Result<Complex64> {
        Ok(self.values[self.flat_index(labels)?])
    }

    pub fn set(&mut self, labels: &[usize], value: Complex64) -> Result<()> {
        let idx = self.flat_index(labels)?;
        self.values[idx] = value;
        Ok(())
    }

    /// Degree contribution of a single-site label in this family.
    pub fn label_weight(&self, a: usize) -> usize {
        match self.family {
            Family::Gm => usize::from(a != 0),
            Family::Hw => a / self.k + a % self.k,
        }
    }

    /// Number of non-identity sites.
    pub fn site_count(&self, labels: &[usize]) -> usize {
        labels.iter().filter(|&&a| a != 0).count()
    }

    /// Family-native degree of a multi-index: site count for GM, Σ(ℓ+m) for HW.
    pub fn index_degree(&self, labels: &[usize]) -> usize {
        labels.iter().map(|&a| self.label_weight(a)).sum()
    }

    /// Family-native degree of the operator, ignoring coefficients at or below [`ZERO_TOL`].
    pub fn degree(&self) -> usize {
        self.degree_by(|c, labels| c.index_degree(labels))
    }

    /// Largest number of non-identity sites over the significant support.
    pub fn site_degree(&self) -> usize {
        self.degree_by(|c, labels| c.site_count(labels))
    }

    fn degree_by(&self, f: impl Fn(&Self, &[usize]) -> usize) -> usize {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > ZERO_TOL)
            .map(|(i, _)| f(self, &self.labels_of(i)))
            .max()
            .unwrap_or(0)
    }

    /// Entries with nonzero coefficient, in flat order.
    pub fn support(&self) -> Support {
        let entries = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, z)| z.re != 0.0 || z.im != 0.0)
            .map(|(i, &z)| (self.labels_of(i), z))
            .collect();
        Support { n: self.n, entries }
    }

    /// ‖A‖₂² in the normalized trace norm, by Parseval.
    pub fn l2_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            ..self.clone()
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|z| z * s).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.family != other.family || self.k != other.k || self.n != other.n {
            return shape("coefficient tables have different basis, K or n");
        }
        Ok(())
    }

    /// Keeps the coefficients whose multi-index has at most `d` non-identity sites.
    pub fn truncate(&self, d: usize) -> Self {
        self.filter(|c, labels| c.site_count(labels) <= d)
    }

    /// Keeps the coefficients whose family-native degree is at most `d`.
    pub fn truncate_native(&self, d: usize) -> Self {
        self.filter(|c, labels| c.index_degree(labels) <= d)
    }

    fn filter(&self, keep: impl Fn(&Self, &[usize]) -> bool) -> Self {
        let mut out = self.clone();
        for (i, z) in out.values.iter_mut().enumerate() {
            if !keep(self, &self.labels_of(i)) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    pub fn basis(&self) -> Result<SiteBasis> {
        SiteBasis::new(self.family, self.k)
    }

    pub fn reconstruct(&self) -> Result<ComplexMatrix> {
        self.basis()?.reconstruct(self)
    }

    pub fn label_name(&self, a: usize) -> String {
        match self.family {
            Family::Gm => gm::GmLabel::from_index(self.k, a)
                .map(|l| l.to_string())
                .unwrap_or_else(|_| format!("?{a}")),
            Family::Hw => hw::HwLabel::from_index(self.k, a).to_string(),
        }
    }

    pub fn parse_label(&self, s: &str) -> Result<usize> {
        match self.family {
            Family::Gm => Ok(s.parse::<gm::GmLabel>()?.index(self.k)?),
            Family::Hw => {
                let l: hw::HwLabel = s.parse()?;
                if l.ell >= self.k || l.m >= self.k {
                    return Err(Error::Label(format!("{s} out of range for K={}", self.k)));
                }
                Ok(l.index(self.k))
            }
        }
    }

    pub fn multi_index_name(&self, labels: &[usize]) -> String {
        labels
            .iter()
            .map(|&a| self.label_name(a))
            .collect::<Vec<_>>()
            .join("⊗")
    }

    pub fn to_document(&self) -> CoeffsDocument {
        let entries = self
            .support()
            .entries
            .into_iter()
            .map(|(labels, z)| CoeffEntry {
                labels: labels.iter().map(|&a| self.label_name(a)).collect(),
                re: z.re,
                im: z.im,
            })
            .collect();
        CoeffsDocument {
            basis: self.family,
            k: self.k,
            n: self.n,
            entries,
        }
    }

    pub fn from_document(doc: &CoeffsDocument) -> Result<Self> {
        let mut c = Self::zeros(doc.basis, doc.k, doc.n)?;
        for e in &doc.entries {
            let labels = e
                .labels
                .iter()
                .map(|s| c.parse_label(s))
                .collect::<Result<Vec<_>>>()?;
            let idx = c.flat_index(&labels)?;
            c.values[idx] += Complex64::new(e.re, e.im);
        }
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub labels: Vec<String>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffsDocument {
    pub basis: Family,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub entries: Vec<CoeffEntry>,
}

/// Nonzero entries of a coefficient table, for fast evaluation against product states.
#[derive(Clone, Debug)]
pub struct Support {
    pub n: usize,
    pub entries: Vec<(Vec<usize>, Complex64)>,
}

impl Support {
    /// Σ_α Â(α) Π_s t_s[α_s], i.e. tr[Aρ] for ρ = ⊗ρ_s when t_s[a] = tr[B_a ρ_s].
    pub fn evaluate(&self, site_traces: &[&[Complex64]]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (labels, c) in &self.entries {
            let mut term = *c;
            for (s, &a) in labels.iter().enumerate() {
                term *= site_traces[s][a];
            }
            acc += term;
        }
        acc
    }
}

/// Random observable with i.i.d. complex Gaussian coefficients on the multi-indices of
/// native degree at most `d` (each kept with probability `keep`), rescaled to unit
/// operator norm. GM observables are made Hermitian by keeping the real parts, which
/// is (A + A†)/2 in this basis; HW observables are left as they are.
pub fn random_observable(
    basis: &SiteBasis,
    n: usize,
    d: usize,
    keep: f64,
    rng: &mut Rng,
) -> Result<FourierCoeffs> {
    let mut c = FourierCoeffs::zeros(basis.family(), basis.k(), n)?;
    let eligible: Vec<usize> = (0..c.len())
        .filter(|&i| c.index_degree(&c.labels_of(i)) <= d)
        .collect();
    loop {
        for &i in &eligible {
            let z = rng::complex_gaussian(rng);
            let kept = keep >= 1.0 || rng::uniform(rng) < keep;
            c.values[i] = match (kept, basis.family()) {
                (false, _) => Complex64::new(0.0, 0.0),
                (true, Family::Gm) => Complex64::new(z.re, 0.0),
                (true, Family::Hw) => z,
            };
        }
        if c.values.iter().any(|z| z.norm() > ZERO_TOL) {
            break;
        }
    }
    let norm = op_norm(&basis.reconstruct(&c)?)?;
    if norm == 0.0 {
        return Err(Error::Numeric("random observable has zero norm".into()));
    }
    Ok(c.scale(1.0 / norm))
}
