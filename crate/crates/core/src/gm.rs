//! Generalized Gell-Mann basis, GM expansions, and the sign-vector density matrices
//! that turn a GM observable into a polynomial on the Boolean cube.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::coeffs::{FourierCoeffs, SiteBasis};
use crate::error::{shape, Error, Result};
use crate::tensor::ComplexMatrix;

/// Single-site GM label. Indices j, k, m are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GmLabel {
    Identity,
    Sym(usize, usize),
    Antisym(usize, usize),
    Diag(usize),
}

/// C(K,2).
pub fn pairs(k: usize) -> usize {
    k * (k - 1) / 2
}

/// The (j,k) pairs with j < k in lexicographic order, 1-based.
pub fn pair_list(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pairs(k));
    for j in 1..=k {
        for l in j + 1..=k {
            out.push((j, l));
        }
    }
    out
}

impl GmLabel {
    /// Label index in 0..K²: identity, then Sym, Antisym (both lexicographic in (j,k)), then Diag.
    pub fn index(self, k: usize) -> Result<usize> {
        self.validate(k)?;
        let p = pairs(k);
        let pos = |j: usize, l: usize| (j - 1) * (2 * k - j) / 2 + (l - j - 1);
        Ok(match self {
            GmLabel::Identity => 0,
            GmLabel::Sym(j, l) => 1 + pos(j, l),
            GmLabel::Antisym(j, l) => 1 + p + pos(j, l),
            GmLabel::Diag(m) => 2 * p + m,
        })
    }

    pub fn from_index(k: usize, idx: usize) -> Result<Self> {
        let p = pairs(k);
        if idx >= k * k {
            return Err(Error::Label(format!("GM label index {idx} out of range for K={k}")));
        }
        Ok(match idx {
            0 => GmLabel::Identity,
            i if i <= p => {
                let (j, l) = pair_list(k)[i - 1];
                GmLabel::Sym(j, l)
            }
            i if i <= 2 * p => {
                let (j, l) = pair_list(k)[i - 1 - p];
                GmLabel::Antisym(j, l)
            }
            i => GmLabel::Diag(i - 2 * p),
        })
    }

    pub fn validate(self, k: usize) -> Result<()> {
        let ok = match self {
            GmLabel::Identity => true,
            GmLabel::Sym(j, l) | GmLabel::Antisym(j, l) => 1 <= j && j < l && l <= k,
            GmLabel::Diag(m) => 1 <= m && m < k,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Label(format!("{self} is not a valid label for K={k}")))
        }
    }

    pub fn is_identity(self) -> bool {
        self == GmLabel::Identity
    }
}

impl fmt::Display for GmLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GmLabel::Identity => write!(f, "I"),
            GmLabel::Sym(j, k) => write!(f, "Sym({j},{k})"),
            GmLabel::Antisym(j, k) => write!(f, "Antisym({j},{k})"),
            GmLabel::Diag(m) => write!(f, "Diag({m})"),
        }
    }
}

impl FromStr for GmLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Label(format!("cannot parse GM label '{s}'"));
        if s == "I" {
            return Ok(GmLabel::Identity);
        }
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let nums = inner
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        match (&s[..open], nums.as_slice()) {
            ("Sym", [j, k]) => Ok(GmLabel::Sym(*j, *k)),
            ("Antisym", [j, k]) => Ok(GmLabel::Antisym(*j, *k)),
            ("Diag", [m]) => Ok(GmLabel::Diag(*m)),
            _ => Err(bad()),
        }
    }
}

/// Γ_m = √(K/(m²+m)).
pub fn gamma(k: usize, m: usize) -> f64 {
    (k as f64 / ((m * m + m) as f64)).sqrt()
}

pub fn gm_matrix(k: usize, label: GmLabel) -> Result<ComplexMatrix> {
    if k < 2 {
        return Err(Error::Label(format!("local dimension {k} < 2")));
    }
    label.validate(k)?;
    let mut m = ComplexMatrix::zeros(k, k);
    let r = (k as f64 / 2.0).sqrt();
    match label {
        GmLabel::Identity => return Ok(ComplexMatrix::identity(k)),
        GmLabel::Sym(j, l) => {
            m[(j - 1, l - 1)] = Complex64::new(r, 0.0);
            m[(l - 1, j - 1)] = Complex64::new(r, 0.0);
        }
        GmLabel::Antisym(j, l) => {
            m[(j - 1, l - 1)] = Complex64::new(0.0, -r);
            m[(l - 1, j - 1)] = Complex64::new(0.0, r);
        }
        GmLabel::Diag(d) => {
            let g = gamma(k, d);
            for i in 0..d {
                m[(i, i)] = Complex64::new(g, 0.0);
            }
            m[(d, d)] = Complex64::new(-(d as f64) * g, 0.0);
        }
    }
    Ok(m)
}

pub fn gm_expand(a: &ComplexMatrix, k: usize, n: usize) -> Result<FourierCoeffs> {
    SiteBasis::gm(k)?.expand(a, n)
}

pub fn gm_reconstruct(c: &FourierCoeffs) -> Result<ComplexMatrix> {
    c.reconstruct()
}

/// Largest number of non-identity sites over coefficients above the zero threshold.
pub fn gm_degree(c: &FourierCoeffs) -> usize {
    c.site_degree()
}

/// c = √(K/2)/(3·C(K,2)), the per-site scale between operator and cube coefficients.
pub fn cube_scale(k: usize) -> f64 {
    (k as f64 / 2.0).sqrt() / (3.0 * pairs(k) as f64)
}

/// Cube coordinates contributed by one site: 2·C(K,2) + K − 1 = K² − 1.
pub fn site_arity(k: usize) -> usize {
    k * k - 1
}

/// Cube coordinate of a non-identity label `a` at site `s`.
pub fn cube_coordinate(k: usize, s: usize, a: usize) -> usize {
    s * site_arity(k) + a - 1
}

/// Point of {−1,+1}^{n(K²−1)}; site s owns the block [s(K²−1), (s+1)(K²−1)),
/// ordered (x_jk), (y_jk), (z_m).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubePoint {
    k: usize,
    n: usize,
    bits: Vec<i8>,
}

impl CubePoint {
    pub fn new(k: usize, n: usize, bits: Vec<i8>) -> Result<Self> {
        if bits.len() != n * site_arity(k) {
            return shape(format!(
                "cube point of length {} for K={k} n={n} (expected {})",
                bits.len(),
                n * site_arity(k)
            ));
        }
        if bits.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::Input("cube coordinates must be ±1".into()));
        }
        Ok(Self { k, n, bits })
    }

    /// Point whose site s has coordinate r equal to −1 exactly when bit r of `patterns[s]` is set.
    pub fn from_patterns(k: usize, patterns: &[u64]) -> Self {
        let a = site_arity(k);
        let bits = patterns
            .iter()
            .flat_map(|&p| (0..a).map(move |r| if (p >> r) & 1 == 1 { -1 } else { 1 }))
            .collect();
        Self { k, n: patterns.len(), bits }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn site(&self, s: usize) -> &[i8] {
        let a = site_arity(self.k);
        &self.bits[s * a..(s + 1) * a]
    }

    pub fn site_pattern(&self, s: usize) -> u64 {
        pattern_of(self.site(s))
    }

    pub fn patterns(&self) -> Vec<u64> {
        (0..self.n).map(|s| self.site_pattern(s)).collect()
    }
}

fn pattern_of(bits: &[i8]) -> u64 {
    bits.iter()
        .enumerate()
        .fold(0u64, |acc, (r, &b)| if b == -1 { acc | (1 << r) } else { acc })
}

/// ρ(x,y,z) = (1/(3C(K,2)))(Σ A^{(x_jk)}_jk + Σ B^{(y_jk)}_jk + Σ_m z_m/√(2K) C_m + (K−1)/2 I),
/// where A^{(b)}, B^{(b)} project onto (e_j + b e_k)/√2 and (e_j + b i e_k)/√2.
pub fn lemma_action_state(k: usize, x: &[i8], y: &[i8], z: &[i8]) -> Result<ComplexMatrix> {
    let p = pairs(k);
    if x.len() != p || y.len() != p || z.len() != k - 1 {
        return shape(format!(
            "slices of lengths ({}, {}, {}) for K={k}, expected ({p}, {p}, {})",
            x.len(),
            y.len(),
            z.len(),
            k - 1
        ));
    }
    let mut rho = ComplexMatrix::zeros(k, k);
    for (idx, (j, l)) in pair_list(k).into_iter().enumerate() {
        let (j, l) = (j - 1, l - 1);
        let bx = x[idx] as f64;
        let by = y[idx] as f64;
        rho[(j, j)] += Complex64::new(1.0, 0.0);
        rho[(l, l)] += Complex64::new(1.0, 0.0);
        rho[(j, l)] += Complex64::new(bx / 2.0, -by / 2.0);
        rho[(l, j)] += Complex64::new(bx / 2.0, by / 2.0);
    }
    let w = 1.0 / (2.0 * k as f64).sqrt();
    for (m, &zm) in z.iter().enumerate() {
        let c = gm_matrix(k, GmLabel::Diag(m + 1))?;
        for i in 0..k {
            rho[(i, i)] += c[(i, i)] * (zm as f64 * w);
        }
    }
    let half = (k as f64 - 1.0) / 2.0;
    for i in 0..k {
        rho[(i, i)] += Complex64::new(half, 0.0);
    }
    Ok(rho.scale(Complex64::new(1.0 / (3.0 * p as f64), 0.0)))
}

/// Lemma state for a whole site block given as ±1 values.
pub fn site_state(k: usize, block: &[i8]) -> Result<ComplexMatrix> {
    let p = pairs(k);
    if block.len() != site_arity(k) {
        return shape("site block length differs from K² − 1");
    }
    lemma_action_state(k, &block[..p], &block[p..2 * p], &block[2 * p..])
}

/// Lemma state for the site pattern `pattern` (bit r set ⇔ coordinate r is −1).
pub fn site_state_from_pattern(k: usize, pattern: u64) -> Result<ComplexMatrix> {
    let block: Vec<i8> = (0..site_arity(k))
        .map(|r| if (pattern >> r) & 1 == 1 { -1 } else { 1 })
        .collect();
    site_state(k, &block)
}

/// f_A(p) = tr[A ρ(p)] with ρ(p) the tensor product of the per-site lemma states.
pub fn gm_reduction_fn(a: &FourierCoeffs, p: &CubePoint) -> Result<Complex64> {
    if a.family() != crate::coeffs::Family::Gm {
        return Err(Error::Input("GM reduction needs GM coefficients".into()));
    }
    if p.k != a.k() || p.n != a.n() {
        return shape("cube point does not match the observable's K and n");
    }
    let basis = a.basis()?;
    let traces = (0..p.n)
        .map(|s| basis.site_traces(&site_state(p.k, p.site(s))?))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[Complex64]> = traces.iter().map(|t| t.as_slice()).collect();
    Ok(a.support().evaluate(&refs))
}

/// Per-site traces tr[M_a ρ(pattern)], tabulated over all patterns when that is small.
#[derive(Clone, Debug)]
pub struct GmReducer {
    k: usize,
    basis: SiteBasis,
    table: Option<Vec<Vec<Complex64>>>,
}

const TABLE_MAX_ARITY: usize = 16;

impl GmReducer {
    pub fn new(k: usize) -> Result<Self> {
        let basis = SiteBasis::gm(k)?;
        let table = if site_arity(k) <= TABLE_MAX_ARITY {
            Some(
                (0..1u64 << site_arity(k))
                    .map(|pat| basis.site_traces(&site_state_from_pattern(k, pat)?))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self { k, basis, table })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn site_traces(&self, pattern: u64) -> Result<std::borrow::Cow<'_, [Complex64]>> {
        match &self.table {
            Some(t) => Ok(std::borrow::Cow::Borrowed(&t[pattern as usize])),
            None => Ok(std::borrow::Cow::Owned(
                self.basis.site_traces(&site_state_from_pattern(self.k, pattern)?)?,
            )),
        }
    }
}
