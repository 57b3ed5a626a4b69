//! Heisenberg–Weyl basis {X^ℓ Z^m}, generator sets Σ_K, closed-form eigenvectors
//! and the eigenprojection ensembles used to reduce HW observables to functions on
//! products of cyclic groups.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeffs::{Family, FourierCoeffs, SiteBasis};
use crate::error::{shape, Error, Result};
use crate::tensor::ComplexMatrix;

/// Residual tolerance for the closed-form eigenpairs.
pub const EIGEN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HwLabel {
    pub ell: usize,
    pub m: usize,
}

impl HwLabel {
    pub fn new(ell: usize, m: usize) -> Self {
        Self { ell, m }
    }

    pub fn index(self, k: usize) -> usize {
        self.ell * k + self.m
    }

    pub fn from_index(k: usize, idx: usize) -> Self {
        Self { ell: idx / k, m: idx % k }
    }

    pub fn degree(self) -> usize {
        self.ell + self.m
    }

    /// k·(ℓ,m) reduced mod K.
    pub fn times(self, k: usize, modulus: usize) -> Self {
        Self {
            ell: (k * self.ell) % modulus,
            m: (k * self.m) % modulus,
        }
    }
}

impl fmt::Display for HwLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.ell, self.m)
    }
}

impl FromStr for HwLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Label(format!("cannot parse HW label '{s}'"));
        let inner = s
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        Ok(Self {
            ell: a.trim().parse().map_err(|_| bad())?,
            m: b.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// e^{2πi·num/den}, exact at multiples of a quarter turn.
pub fn root_of_unity(num: i64, den: usize) -> Complex64 {
    let den_i = den as i64;
    let r = num.rem_euclid(den_i);
    if (4 * r) % den_i == 0 {
        return match 4 * r / den_i {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * r as f64 / den as f64)
}

/// ω^e with ω = e^{2πi/K}.
pub fn omega(k: usize, e: i64) -> Complex64 {
    root_of_unity(e, k)
}

/// Shift X|j⟩ = |j+1⟩ and clock Z|j⟩ = ω^j|j⟩.
pub fn clock_shift(k: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if k < 2 {
        return Err(Error::Input(format!("local dimension {k} < 2")));
    }
    let mut x = ComplexMatrix::zeros(k, k);
    for j in 0..k {
        x[((j + 1) % k, j)] = Complex64::new(1.0, 0.0);
    }
    let z = ComplexMatrix::from_diag(&(0..k).map(|j| omega(k, j as i64)).collect::<Vec<_>>());
    Ok((x, z))
}

/// X^ℓ Z^m, built entrywise: column j carries ω^{mj} in row j+ℓ.
pub fn hw_matrix(k: usize, label: HwLabel) -> Result<ComplexMatrix> {
    if k < 2 {
        return Err(Error::Input(format!("local dimension {k} < 2")));
    }
    if label.ell >= k || label.m >= k {
        return Err(Error::Label(format!("{label} out of range for K={k}")));
    }
    let mut w = ComplexMatrix::zeros(k, k);
    for j in 0..k {
        w[((j + label.ell) % k, j)] = omega(k, (label.m * j) as i64);
    }
    Ok(w)
}

pub fn hw_expand(a: &ComplexMatrix, k: usize, n: usize) -> Result<FourierCoeffs> {
    SiteBasis::hw(k)?.expand(a, n)
}

pub fn hw_reconstruct(c: &FourierCoeffs) -> Result<ComplexMatrix> {
    c.reconstruct()
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// gcd with 0 read as K in both arguments.
pub fn gcd_star(k: usize, a: usize, b: usize) -> usize {
    let lift = |x: usize| if x == 0 { k } else { x };
    gcd(lift(a), lift(b))
}

pub fn is_prime(k: usize) -> bool {
    k >= 2 && (2..k).take_while(|d| d * d <= k).all(|d| k % d != 0)
}

/// ⟨g⟩ = {k·g mod K}.
pub fn subgroup(k: usize, g: HwLabel) -> BTreeSet<HwLabel> {
    (0..k).map(|t| g.times(t, k)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumClass {
    /// Spectrum Ω_K.
    Plus,
    /// Spectrum Ω_{2K} ∖ Ω_K.
    Minus,
}

/// Spectrum class of X^ℓ Z^m for gcd*(ℓ,m) = 1, read off K₁ = K/gcd(K,ℓ) and ℓm.
pub fn classify(k: usize, g: HwLabel) -> SpectrumClass {
    let k1 = k / gcd(k, g.ell);
    if k1 % 2 == 1 || (g.ell * g.m) % 2 == 0 {
        SpectrumClass::Plus
    } else {
        SpectrumClass::Minus
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSet {
    #[serde(rename = "K")]
    pub k: usize,
    pub members: Vec<HwLabel>,
    pub classification: Vec<SpectrumClass>,
}

impl GeneratorSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn class_of(&self, g: usize) -> SpectrumClass {
        self.classification[g]
    }
}

/// Prime K: {(1,0),(1,1),…,(1,K−1),(0,1)}. Otherwise every (ℓ,m) with gcd*(ℓ,m) = 1,
/// in lexicographic order.
pub fn generator_set(k: usize) -> Result<GeneratorSet> {
    if k < 2 {
        return Err(Error::Input(format!("local dimension {k} < 2")));
    }
    let members: Vec<HwLabel> = if is_prime(k) {
        (0..k)
            .map(|m| HwLabel::new(1, m))
            .chain(std::iter::once(HwLabel::new(0, 1)))
            .collect()
    } else {
        (0..k)
            .flat_map(|l| (0..k).map(move |m| HwLabel::new(l, m)))
            .filter(|g| gcd_star(k, g.ell, g.m) == 1)
            .collect()
    };
    let classification = members.iter().map(|&g| classify(k, g)).collect();
    Ok(GeneratorSet { k, members, classification })
}

#[derive(Clone, Debug, Serialize)]
pub struct HwEigensystem {
    #[serde(rename = "K")]
    pub k: usize,
    pub label: HwLabel,
    pub class: SpectrumClass,
    /// Eigenvalue i is e^{πi·e_i/K}.
    pub exponents_2k: Vec<usize>,
    #[serde(serialize_with = "ser_complex_vec")]
    pub eigenvalues: Vec<Complex64>,
    #[serde(skip)]
    pub eigenvectors: ComplexMatrix,
    pub residuals: Vec<f64>,
}

fn ser_complex_vec<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

impl HwEigensystem {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Column whose eigenvalue is e^{πi·e/K}.
    pub fn column_for_exponent(&self, e: usize) -> Option<usize> {
        let e = e % (2 * self.k);
        self.exponents_2k.iter().position(|&x| x == e)
    }

    /// Eigenvector for ω^p (Plus) or ω^{1/2}ω^p (Minus).
    pub fn vector_for_phase(&self, p: usize) -> Result<Vec<Complex64>> {
        let e = match self.class {
            SpectrumClass::Plus => 2 * p,
            SpectrumClass::Minus => 2 * p + 1,
        };
        let col = self.column_for_exponent(e).ok_or_else(|| {
            Error::Numeric(format!("no eigenvector of {} for phase exponent {p}", self.label))
        })?;
        Ok(self.eigenvectors.column(col))
    }
}

/// Closed-form eigenbasis of X^ℓ Z^m for gcd*(ℓ,m) = 1. With d = gcd(K,ℓ), K₁ = K/d and
/// (s,t) ∈ Z_d × Z_{K₁}, the vectors are Σ_j ω^{φ(j)} e_{s+jℓ}/√K₁ with
/// φ(j) = ½j(j−1)ℓm − jdt for odd K₁ (eigenvalue ω^{dt+ms}) and
/// φ(j) = ½j(j−2)ℓm − jdt for even K₁ (eigenvalue ω^{½ℓm+dt+ms}).
/// All phases are handled as integer exponents of e^{πi/K}.
pub fn hw_eigensystem(k: usize, label: HwLabel) -> Result<HwEigensystem> {
    if label.ell >= k || label.m >= k {
        return Err(Error::Label(format!("{label} out of range for K={k}")));
    }
    if gcd_star(k, label.ell, label.m) != 1 {
        return Err(Error::Precondition(format!(
            "gcd*({},{}) ≠ 1 at K={k}: no closed-form eigenbasis",
            label.ell, label.m
        )));
    }
    let (l, m) = (label.ell as i64, label.m as i64);
    let d = gcd(k, label.ell);
    let k1 = k / d;
    let two_k = 2 * k as i64;
    let odd = k1 % 2 == 1;
    let norm = 1.0 / (k1 as f64).sqrt();
    let w = hw_matrix(k, label)?;

    let mut vectors = ComplexMatrix::zeros(k, k);
    let mut exponents = Vec::with_capacity(k);
    let mut col = 0;
    for s in 0..d as i64 {
        for t in 0..k1 as i64 {
            for j in 0..k1 as i64 {
                let quad = if odd { j * (j - 1) } else { j * (j - 2) };
                let e = quad * l * m - 2 * j * d as i64 * t;
                let row = ((s + j * l) as usize) % k;
                vectors[(row, col)] = root_of_unity(e, 2 * k) * norm;
            }
            let base = 2 * (d as i64 * t + m * s);
            let e = if odd { base } else { l * m + base };
            exponents.push(e.rem_euclid(two_k) as usize);
            col += 1;
        }
    }
    let eigenvalues: Vec<Complex64> = exponents
        .iter()
        .map(|&e| root_of_unity(e as i64, 2 * k))
        .collect();
    let residuals = (0..k)
        .map(|c| {
            let v = vectors.column(c);
            let wv = w.matvec(&v)?;
            Ok(wv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - eigenvalues[c] * b).norm_sqr())
                .sum::<f64>()
                .sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let sys = HwEigensystem {
        k,
        label,
        class: classify(k, label),
        exponents_2k: exponents,
        eigenvalues,
        eigenvectors: vectors,
        residuals,
    };
    if sys.max_residual() > EIGEN_TOL {
        return Err(Error::Numeric(format!(
            "eigenpair residual {:e} for {label} at K={k}",
            sys.max_residual()
        )));
    }
    Ok(sys)
}

/// ζ_k = Σ_j ω^{½j(j−1)ℓm − jk} e_{jℓ}, normalized; eigenvalue ω^k. Odd prime K, ℓ ≠ 0.
pub fn zeta_vector(k: usize, label: HwLabel, t: usize) -> Result<Vec<Complex64>> {
    if !is_prime(k) || k == 2 {
        return Err(Error::Precondition(format!("K={k} is not an odd prime")));
    }
    if label.ell == 0 || label.ell >= k || label.m >= k {
        return Err(Error::Precondition(format!("{label} needs 1 ≤ ℓ < K")));
    }
    let (l, m) = (label.ell as i64, label.m as i64);
    let norm = 1.0 / (k as f64).sqrt();
    let mut v = vec![Complex64::new(0.0, 0.0); k];
    for j in 0..k as i64 {
        let e = j * (j - 1) * l * m - 2 * j * t as i64;
        v[((j * l) as usize) % k] = root_of_unity(e, 2 * k) * norm;
    }
    Ok(v)
}

/// Maps a K-th root of unity to its exponent.
pub fn phase_exponent(k: usize, z: Complex64) -> Result<usize> {
    let angle = z.arg().rem_euclid(2.0 * std::f64::consts::PI);
    let p = (angle * k as f64 / (2.0 * std::f64::consts::PI)).round() as usize % k;
    if (z - omega(k, p as i64)).norm() > 1e-9 {
        return Err(Error::Input(format!("{z} is not a {k}-th root of unity")));
    }
    Ok(p)
}

/// Eigensystems of every generator plus the rank-one projectors P_{g,p}.
#[derive(Clone, Debug)]
pub struct HwEnsemble {
    pub gens: GeneratorSet,
    pub systems: Vec<HwEigensystem>,
    projectors: Vec<Vec<ComplexMatrix>>,
}

impl HwEnsemble {
    pub fn new(k: usize) -> Result<Self> {
        Self::from_generators(generator_set(k)?)
    }

    pub fn from_generators(gens: GeneratorSet) -> Result<Self> {
        let k = gens.k;
        let systems = gens
            .members
            .iter()
            .map(|&g| hw_eigensystem(k, g))
            .collect::<Result<Vec<_>>>()?;
        let projectors = systems
            .iter()
            .map(|sys| {
                (0..k)
                    .map(|p| Ok(ComplexMatrix::outer(&sys.vector_for_phase(p)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { gens, systems, projectors })
    }

    pub fn k(&self) -> usize {
        self.gens.k
    }

    pub fn projector(&self, g: usize, p: usize) -> &ComplexMatrix {
        &self.projectors[g][p]
    }

    /// (1/|Σ|) Σ_g P_{g, p_g} with phase exponents p_g ∈ Z_K.
    pub fn state(&self, phases: &[usize]) -> Result<ComplexMatrix> {
        let k = self.k();
        if phases.len() != self.gens.len() {
            return shape(format!(
                "{} phases for {} generators",
                phases.len(),
                self.gens.len()
            ));
        }
        let mut rho = ComplexMatrix::zeros(k, k);
        for (g, &p) in phases.iter().enumerate() {
            if p >= k {
                return Err(Error::Input(format!("phase exponent {p} outside Z_{k}")));
            }
            rho = rho.add(&self.projectors[g][p])?;
        }
        Ok(rho.scale(Complex64::new(1.0 / self.gens.len() as f64, 0.0)))
    }
}

/// Ensemble state from explicit Ω_K phases, one per generator.
pub fn hw_ensemble_state(k: usize, gens: &GeneratorSet, site_phases: &[Complex64]) -> Result<ComplexMatrix> {
    if gens.k != k {
        return shape("generator set built for a different K");
    }
    let exps = site_phases
        .iter()
        .map(|&z| phase_exponent(k, z))
        .collect::<Result<Vec<_>>>()?;
    HwEnsemble::from_generators(gens.clone())?.state(&exps)
}

/// f_A(ω⃗) = tr[A ρ(ω⃗)], phases given as exponents per site and generator.
pub fn hw_reduction_fn(a: &FourierCoeffs, ens: &HwEnsemble, phases: &[Vec<usize>]) -> Result<Complex64> {
    if a.family() != Family::Hw {
        return Err(Error::Input("HW reduction needs HW coefficients".into()));
    }
    if a.k() != ens.k() || phases.len() != a.n() {
        return shape("phase table does not match the observable's K and n");
    }
    let basis = a.basis()?;
    let traces = phases
        .iter()
        .map(|ph| basis.site_traces(&ens.state(ph)?))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[Complex64]> = traces.iter().map(|t| t.as_slice()).collect();
    Ok(a.support().evaluate(&refs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k2_clock_shift_is_pauli() {
        let (x, z) = clock_shift(2).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        assert_eq!(x.data(), &[zero, one, one, zero]);
        assert_eq!(z.data(), &[one, zero, zero, -one]);
    }

    #[test]
    fn shift_power_is_identity() {
        for k in 2..=8 {
            let (x, _) = clock_shift(k).unwrap();
            assert_eq!(x.pow(k).unwrap(), ComplexMatrix::identity(k));
        }
    }

    #[test]
    fn k3_zx_commutation() {
        let (x, z) = clock_shift(3).unwrap();
        let zx = z.matmul(&x).unwrap();
        let xz = x.matmul(&z).unwrap().scale(omega(3, 1));
        assert!(zx.max_abs_diff(&xz) <= 1e-15);
    }

    #[test]
    fn gcd_convention() {
        assert_eq!(gcd_star(6, 0, 2), 2);
        assert_eq!(gcd_star(6, 0, 1), 1);
        assert_eq!(gcd_star(4, 0, 0), 4);
    }

    #[test]
    fn k3_generators() {
        let g = generator_set(3).unwrap();
        let want: Vec<HwLabel> = [(1, 0), (1, 1), (1, 2), (0, 1)]
            .iter()
            .map(|&(l, m)| HwLabel::new(l, m))
            .collect();
        assert_eq!(g.members, want);
        assert!(g.classification.iter().all(|&c| c == SpectrumClass::Plus));
    }

    #[test]
    fn k6_subgroup_intersection() {
        let a = subgroup(6, HwLabel::new(1, 0));
        let b = subgroup(6, HwLabel::new(2, 3));
        let both: Vec<HwLabel> = a.intersection(&b).copied().collect();
        assert_eq!(both, vec![HwLabel::new(0, 0), HwLabel::new(2, 0), HwLabel::new(4, 0)]);
    }

    #[test]
    fn refuses_non_coprime() {
        assert!(matches!(
            hw_eigensystem(4, HwLabel::new(2, 2)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn k4_one_one_is_minus() {
        let sys = hw_eigensystem(4, HwLabel::new(1, 1)).unwrap();
        assert_eq!(sys.class, SpectrumClass::Minus);
        assert!(sys.exponents_2k.iter().all(|e| e % 2 == 1));
        let sys = hw_eigensystem(4, HwLabel::new(2, 1)).unwrap();
        assert_eq!(sys.class, SpectrumClass::Plus);
        assert!(sys.exponents_2k.iter().all(|e| e % 2 == 0));
    }

    #[test]
    fn phase_guard() {
        assert_eq!(phase_exponent(3, omega(3, 2)).unwrap(), 2);
        assert!(matches!(
            phase_exponent(3, Complex64::new(0.0, 1.0)),
            Err(Error::Input(_))
        ));
    }
}
