//! Exhaustive identity checks for the GM and HW constructions, each reported as a
//! named pass/fail record with its worst observed error.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gm::{self, GmLabel};
use crate::hw::{
    self, classify, gcd_star, generator_set, hw_eigensystem, hw_matrix, is_prime, root_of_unity,
    subgroup, zeta_vector, HwEnsemble, HwLabel, SpectrumClass,
};
use crate::rng;
use crate::tensor::{hermitian_eigs, trace_product, ComplexMatrix};

pub const IDENTITY_TOL: f64 = 1e-12;
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
/// Cube points checked by the lemma-state suite when exhaustive enumeration is too large.
pub const SAMPLED_POINTS: usize = 10_000;
/// Cube arities up to this bound are enumerated exhaustively.
pub const EXHAUSTIVE_ARITY: usize = 8;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    #[serde(rename = "K")]
    pub k: usize,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

/// Accumulates the worst error over many cases plus the first failing case.
struct Tally {
    cases: usize,
    max_error: f64,
    first_failure: Option<String>,
    tol: f64,
}

impl Tally {
    fn new(tol: f64) -> Self {
        Self { cases: 0, max_error: 0.0, first_failure: None, tol }
    }

    fn record(&mut self, err: f64, what: impl FnOnce() -> String) {
        self.cases += 1;
        // NaN counts as a failure.
        if !(err <= self.max_error) {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
        }
        if !(err <= self.tol) && self.first_failure.is_none() {
            self.first_failure = Some(what());
        }
    }

    fn flag(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.record(if ok { 0.0 } else { f64::INFINITY }, what);
    }

    fn finish(self, suite: &'static str, name: &'static str, k: usize) -> CheckResult {
        let passed = self.first_failure.is_none() && self.cases > 0;
        CheckResult {
            suite,
            name,
            k,
            cases: self.cases,
            max_error: self.max_error,
            tolerance: self.tol,
            passed,
            detail: self.first_failure.unwrap_or_default(),
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Input(format!("local dimension {k} < 2")));
    }
    Ok(())
}

fn gm_mats(k: usize) -> Result<Vec<(GmLabel, ComplexMatrix)>> {
    (0..k * k)
        .map(|i| {
            let l = GmLabel::from_index(k, i)?;
            Ok((l, gm::gm_matrix(k, l)?))
        })
        .collect()
}

/// Orthonormality, hermiticity, the A/B anticommutation and diagonal-part identities,
/// and the trace action of the lemma states on the cube (exhaustive when the site
/// arity is at most [`EXHAUSTIVE_ARITY`], otherwise `samples` seeded points).
pub fn gm_suite(k: usize, samples: usize, seed: u64) -> Result<Vec<CheckResult>> {
    check_k(k)?;
    let mats = gm_mats(k)?;
    let kf = k as f64;
    let mut out = Vec::new();

    let mut t = Tally::new(IDENTITY_TOL);
    for (la, a) in &mats {
        for (lb, b) in &mats {
            let want = if la == lb { 1.0 } else { 0.0 };
            let err = (trace_product(a, b)? / kf - want).norm();
            t.record(err, || format!("(1/K)tr[{la}·{lb}] off by {err:e}"));
        }
    }
    out.push(t.finish("gm", "orthonormality", k));

    let mut t = Tally::new(IDENTITY_TOL);
    for (l, m) in &mats {
        t.record(m.hermitian_defect(), || format!("{l} is not Hermitian"));
        if !l.is_identity() {
            let tr = m.trace()?.norm();
            t.record(tr, || format!("{l} has trace {tr:e}"));
        }
    }
    out.push(t.finish("gm", "hermitian_traceless", k));

    let mut t = Tally::new(IDENTITY_TOL);
    for (j, l) in gm::pair_list(k) {
        let a = gm::gm_matrix(k, GmLabel::Sym(j, l))?;
        let b = gm::gm_matrix(k, GmLabel::Antisym(j, l))?;
        let err = a.matmul(&b)?.add(&b.matmul(&a)?)?.max_abs();
        t.record(err, || format!("A_{j}{l}B_{j}{l} + B_{j}{l}A_{j}{l} has entry {err:e}"));
    }
    if gm::pairs(k) == 0 {
        t.flag(true, String::new);
    }
    out.push(t.finish("gm", "anticommutation", k));

    out.push(diagonal_parts(k, seed)?);
    out.extend(lemma_action(k, samples, seed)?);

    if k == 2 {
        out.push(pauli_check()?);
    }
    Ok(out)
}

fn pair_projector(k: usize, j: usize, l: usize, phase: Complex64) -> ComplexMatrix {
    let mut v = vec![Complex64::new(0.0, 0.0); k];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    v[j] = Complex64::new(s, 0.0);
    v[l] = phase * s;
    ComplexMatrix::outer(&v)
}

/// diag(Σ A^{(x)}_{jk}) = diag(Σ B^{(y)}_{jk}) = (K−1)/2 · I for sign patterns x, y.
fn diagonal_parts(k: usize, seed: u64) -> Result<CheckResult> {
    let p = gm::pairs(k);
    let patterns: Vec<u64> = if p <= 10 {
        (0..1u64 << p).collect()
    } else {
        let mut r = rng::derived(seed, 0xd1a6);
        (0..1024).map(|_| rng::bits(&mut r) & ((1u64 << p) - 1)).collect()
    };
    let half = (k as f64 - 1.0) / 2.0;
    let mut t = Tally::new(IDENTITY_TOL);
    for &pat in &patterns {
        for imag in [false, true] {
            let mut sum = ComplexMatrix::zeros(k, k);
            for (idx, (j, l)) in gm::pair_list(k).into_iter().enumerate() {
                let b = if (pat >> idx) & 1 == 1 { -1.0 } else { 1.0 };
                let phase = if imag { Complex64::new(0.0, b) } else { Complex64::new(b, 0.0) };
                sum = sum.add(&pair_projector(k, j - 1, l - 1, phase))?;
            }
            let err = (0..k).map(|i| (sum[(i, i)] - half).norm()).fold(0.0, f64::max);
            t.record(err, || format!("pattern {pat:#b} ({}) off by {err:e}", if imag { "B" } else { "A" }));
        }
    }
    Ok(t.finish("gm", "diagonal_parts", k))
}

/// tr[M_a ρ(x,y,z)] = c·sign_a for every non-identity label, tr ρ = 1 and ρ ⪰ 0.
fn lemma_action(k: usize, samples: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let arity = gm::site_arity(k);
    let points: Vec<u64> = if arity <= EXHAUSTIVE_ARITY {
        (0..1u64 << arity).collect()
    } else {
        let mut r = rng::derived(seed, 0x1e44a);
        let mask = if arity >= 64 { u64::MAX } else { (1u64 << arity) - 1 };
        (0..samples).map(|_| rng::bits(&mut r) & mask).collect()
    };
    let mats = gm_mats(k)?;
    let c = gm::cube_scale(k);
    let mut traces = Tally::new(IDENTITY_TOL);
    let mut unit = Tally::new(IDENTITY_TOL);
    let mut psd = Tally::new(IDENTITY_TOL);
    for &pat in &points {
        let rho = gm::site_state_from_pattern(k, pat)?;
        for (a, (l, m)) in mats.iter().enumerate().skip(1) {
            let sign = if (pat >> (a - 1)) & 1 == 1 { -1.0 } else { 1.0 };
            let err = (trace_product(m, &rho)? - c * sign).norm();
            traces.record(err, || format!("tr[{l}·ρ] at pattern {pat:#x} off by {err:e}"));
        }
        let tr_err = (rho.trace()? - 1.0).norm();
        unit.record(tr_err, || format!("tr ρ − 1 = {tr_err:e} at pattern {pat:#x}"));
        let min = hermitian_eigs(&rho)?.values[0];
        psd.record((-min).max(0.0), || format!("min eigenvalue {min:e} at pattern {pat:#x}"));
    }
    Ok(vec![
        traces.finish("gm", "lemma_trace_action", k),
        unit.finish("gm", "lemma_unit_trace", k),
        psd.finish("gm", "lemma_psd", k),
    ])
}

/// GM(2) is (I, σ1, σ2, σ3) entry for entry.
fn pauli_check() -> Result<CheckResult> {
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let want = [
        [one, o, o, one],
        [o, one, one, o],
        [o, -i, i, o],
        [one, o, o, -one],
    ];
    let mut t = Tally::new(0.0);
    for (idx, w) in want.iter().enumerate() {
        let m = gm::gm_matrix(2, GmLabel::from_index(2, idx)?)?;
        let err = m.data().iter().zip(w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        t.record(err, || format!("label {idx} differs from its Pauli matrix by {err:e}"));
    }
    Ok(t.finish("gm", "pauli_recovery", 2))
}

fn all_labels(k: usize) -> impl Iterator<Item = HwLabel> {
    (0..k).flat_map(move |l| (0..k).map(move |m| HwLabel::new(l, m)))
}

/// Basis completeness, power law, commutation phases, the non-commutation phase off a
/// subgroup, and spectrum classification via power sums.
pub fn hw_suite(k: usize) -> Result<Vec<CheckResult>> {
    check_k(k)?;
    let labels: Vec<HwLabel> = all_labels(k).collect();
    let mats = labels.iter().map(|&g| hw_matrix(k, g)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let kf = k as f64;

    let (x, z) = hw::clock_shift(k)?;
    let mut t = Tally::new(IDENTITY_TOL);
    let id = ComplexMatrix::identity(k);
    t.record(x.pow(k)?.max_abs_diff(&id), || "X^K ≠ I".into());
    t.record(z.pow(k)?.max_abs_diff(&id), || "Z^K ≠ I".into());
    let zx = z.matmul(&x)?;
    let xz = x.matmul(&z)?.scale(hw::omega(k, 1));
    t.record(zx.max_abs_diff(&xz), || "ZX ≠ ωXZ".into());
    out.push(t.finish("hw", "clock_shift", k));

    // Gram matrix of the basis under (1/K)tr[A†B]; identity Gram ⇒ rank K².
    let n = k * k;
    let mut gram = ComplexMatrix::zeros(n, n);
    let mut t = Tally::new(IDENTITY_TOL);
    for a in 0..n {
        let adj = mats[a].adjoint();
        for b in 0..n {
            gram[(a, b)] = trace_product(&adj, &mats[b])? / kf;
            let want = if a == b { 1.0 } else { 0.0 };
            let err = (gram[(a, b)] - want).norm();
            t.record(err, || format!("⟨{},{}⟩ off by {err:e}", labels[a], labels[b]));
        }
    }
    let min = hermitian_eigs(&gram)?.values[0];
    t.record((1.0 - min).abs(), || format!("Gram matrix has eigenvalue {min}"));
    out.push(t.finish("hw", "basis_completeness", k));

    let mut t = Tally::new(IDENTITY_TOL);
    for (g, w) in labels.iter().zip(&mats) {
        for p in 1..=k {
            let lhs = w.pow(p)?;
            let phase = root_of_unity((p * (p - 1) * g.ell * g.m) as i64, 2 * k);
            let rhs = hw_matrix(k, g.times(p, k))?.scale(phase);
            let err = lhs.max_abs_diff(&rhs);
            t.record(err, || format!("({g})^{p} off by {err:e}"));
        }
    }
    out.push(t.finish("hw", "power_law", k));

    let mut t = Tally::new(IDENTITY_TOL);
    for (g1, w1) in labels.iter().zip(&mats) {
        for (g2, w2) in labels.iter().zip(&mats) {
            let e = (g2.ell * g1.m) as i64 - (g1.ell * g2.m) as i64;
            let lhs = w1.matmul(w2)?;
            let rhs = w2.matmul(w1)?.scale(hw::omega(k, e));
            let err = lhs.max_abs_diff(&rhs);
            t.record(err, || format!("{g1}·{g2} commutation off by {err:e}"));
        }
    }
    out.push(t.finish("hw", "commutation_phase", k));

    let mut t = Tally::new(IDENTITY_TOL);
    for g1 in labels.iter().filter(|g| gcd_star(k, g.ell, g.m) == 1) {
        let sub = subgroup(k, *g1);
        for g in labels.iter().filter(|g| !sub.contains(g)) {
            let e = (g.ell * g1.m) as i64 - (g1.ell * g.m) as i64;
            t.flag(e.rem_euclid(k as i64) != 0, || format!("{g} ∉ ⟨{g1}⟩ yet the phase is 1"));
        }
    }
    if t.cases == 0 {
        t.flag(true, String::new);
    }
    out.push(t.finish("hw", "noncommuting_off_subgroup", k));

    // Power sums tr[W^j] fix the spectrum: Ω_K gives 0 for j < K and K at j = K;
    // ω^{1/2}Ω_K gives 0 for j < K and −K at j = K.
    let mut t = Tally::new(IDENTITY_TOL);
    for (g, w) in labels.iter().zip(&mats) {
        if gcd_star(k, g.ell, g.m) != 1 {
            continue;
        }
        let top = match classify(k, *g) {
            SpectrumClass::Plus => kf,
            SpectrumClass::Minus => -kf,
        };
        let mut pw = ComplexMatrix::identity(k);
        for j in 1..=k {
            pw = pw.matmul(w)?;
            let want = if j == k { top } else { 0.0 };
            let err = (pw.trace()? - want).norm();
            t.record(err, || format!("tr[({g})^{j}] off by {err:e} for class {:?}", classify(k, *g)));
        }
    }
    out.push(t.finish("hw", "spectrum_classification", k));

    out.extend(generator_checks(k)?);
    out.push(orthogonality_lemma(k)?);
    out.push(ensemble_checks(k)?);
    Ok(out)
}

fn generator_checks(k: usize) -> Result<Vec<CheckResult>> {
    let gens = generator_set(k)?;
    let mut out = Vec::new();

    let mut t = Tally::new(0.0);
    let mut covered = std::collections::BTreeSet::new();
    for &g in &gens.members {
        t.flag(gcd_star(k, g.ell, g.m) == 1, || format!("generator {g} has gcd* ≠ 1"));
        covered.extend(subgroup(k, g));
    }
    for g in all_labels(k) {
        t.flag(covered.contains(&g), || format!("{g} not covered"));
    }
    out.push(t.finish("hw", "generator_coverage", k));

    if is_prime(k) {
        let mut t = Tally::new(0.0);
        t.flag(gens.len() == k + 1, || format!("|Σ_K| = {} ≠ K+1", gens.len()));
        for (i, &a) in gens.members.iter().enumerate() {
            for &b in &gens.members[i + 1..] {
                let inter: Vec<_> = subgroup(k, a).intersection(&subgroup(k, b)).copied().collect();
                t.flag(inter == [HwLabel::new(0, 0)], || format!("⟨{a}⟩ ∩ ⟨{b}⟩ = {inter:?}"));
            }
        }
        out.push(t.finish("hw", "prime_intersections", k));
    }

    if k == 6 {
        let mut t = Tally::new(0.0);
        t.flag(gcd_star(6, 0, 2) == 2, || "gcd*(0,2) ≠ 2 at K=6".into());
        t.flag(gcd_star(6, 0, 1) == 1, || "gcd*(0,1) ≠ 1 at K=6".into());
        t.flag(gcd_star(6, 0, 0) == 6, || "gcd*(0,0) ≠ 6 at K=6".into());
        let inter: Vec<_> = subgroup(6, HwLabel::new(1, 0))
            .intersection(&subgroup(6, HwLabel::new(2, 3)))
            .copied()
            .collect();
        let want = [HwLabel::new(0, 0), HwLabel::new(2, 0), HwLabel::new(4, 0)];
        t.flag(inter == want, || format!("⟨(1,0)⟩ ∩ ⟨(2,3)⟩ = {inter:?}"));
        out.push(t.finish("hw", "gcd_convention", k));
    }
    Ok(out)
}

/// ⟨v, X^ℓZ^m v⟩ = 0 for every eigenvector v of a gcd*-coprime X^{ℓ₁}Z^{m₁} and every
/// (ℓ,m) outside ⟨(ℓ₁,m₁)⟩.
fn orthogonality_lemma(k: usize) -> Result<CheckResult> {
    let mut t = Tally::new(EIGEN_RESIDUAL_TOL);
    for g1 in all_labels(k).filter(|g| gcd_star(k, g.ell, g.m) == 1) {
        let sys = hw_eigensystem(k, g1)?;
        let sub = subgroup(k, g1);
        for g in all_labels(k).filter(|g| !sub.contains(g)) {
            let w = hw_matrix(k, g)?;
            for c in 0..k {
                let v = sys.eigenvectors.column(c);
                let wv = w.matvec(&v)?;
                let ip: Complex64 = v.iter().zip(&wv).map(|(a, b)| a.conj() * b).sum();
                t.record(ip.norm(), || format!("⟨v,({g})v⟩ = {ip} for eigenvector {c} of {g1}"));
            }
        }
    }
    if t.cases == 0 {
        t.flag(true, String::new);
    }
    Ok(t.finish("hw", "orthogonality_lemma", k))
}

/// Ensemble states are density matrices; for prime K the trace identity
/// tr[X^{kℓ}Z^{km}ρ] = ω^{−½k(k−1)ℓm} z^k / (K+1) holds, z the selected eigenvalue,
/// and cross terms vanish.
fn ensemble_checks(k: usize) -> Result<CheckResult> {
    let ens = HwEnsemble::new(k)?;
    let gsz = ens.gens.len();
    let mut t = Tally::new(IDENTITY_TOL);
    let mut r = rng::derived(k as u64, 0xe45e);
    for trial in 0..64 {
        let phases: Vec<usize> = if trial == 0 {
            vec![0; gsz]
        } else {
            (0..gsz).map(|_| rng::below(&mut r, k)).collect()
        };
        let rho = ens.state(&phases)?;
        let tr_err = (rho.trace()? - 1.0).norm();
        t.record(tr_err, || format!("tr ρ off by {tr_err:e} at {phases:?}"));
        let min = hermitian_eigs(&rho)?.values[0];
        t.record((-min).max(0.0), || format!("min eigenvalue {min:e} at {phases:?}"));
        if is_prime(k) {
            for (gi, &g) in ens.gens.members.iter().enumerate() {
                let half = (ens.gens.class_of(gi) == SpectrumClass::Minus) as usize;
                for p in 1..k {
                    let w = hw_matrix(k, g.times(p, k))?;
                    let got = trace_product(&w, &rho)?;
                    let want = root_of_unity(
                        -((p * (p - 1) * g.ell * g.m) as i64) + (p * (2 * phases[gi] + half)) as i64,
                        2 * k,
                    ) / (k as f64 + 1.0);
                    let err = (got - want).norm();
                    t.record(err, || format!("tr[({g})·{p} ρ] off by {err:e} at {phases:?}"));
                }
            }
        }
    }
    if is_prime(k) {
        for (gi, &g) in ens.gens.members.iter().enumerate() {
            for (hi, &h) in ens.gens.members.iter().enumerate() {
                if gi == hi {
                    continue;
                }
                for p in 1..k {
                    let w = hw_matrix(k, g.times(p, k))?;
                    for q in 0..k {
                        let err = trace_product(&w, ens.projector(hi, q))?.norm();
                        t.record(err, || format!("cross term ({g})·{p} against {h} is {err:e}"));
                    }
                }
            }
        }
    }
    Ok(t.finish("hw", "ensemble_identities", k))
}

/// Closed-form eigenpairs for every gcd*-coprime label: residuals, orthonormality,
/// and eigenvalue sets equal to Ω_K or Ω_{2K} ∖ Ω_K as classified. Odd prime K also
/// checks the ζ vectors.
pub fn eigen_suite(k: usize) -> Result<Vec<CheckResult>> {
    check_k(k)?;
    let mut res = Tally::new(EIGEN_RESIDUAL_TOL);
    let mut orth = Tally::new(EIGEN_RESIDUAL_TOL);
    let mut sets = Tally::new(0.0);
    for g in all_labels(k).filter(|g| gcd_star(k, g.ell, g.m) == 1) {
        let sys = hw_eigensystem(k, g)?;
        res.record(sys.max_residual(), || format!("{g}: residual {:e}", sys.max_residual()));
        let gram = sys.eigenvectors.adjoint().matmul(&sys.eigenvectors)?;
        let err = gram.max_abs_diff(&ComplexMatrix::identity(k));
        orth.record(err, || format!("{g}: eigenvectors not orthonormal ({err:e})"));
        let mut exps = sys.exponents_2k.clone();
        exps.sort_unstable();
        let parity = match classify(k, g) {
            SpectrumClass::Plus => 0,
            SpectrumClass::Minus => 1,
        };
        let want: Vec<usize> = (0..k).map(|p| 2 * p + parity).collect();
        sets.flag(exps == want, || format!("{g}: exponents {exps:?}, expected {want:?}"));
    }
    let mut out = vec![
        res.finish("eigen", "eigenpair_residuals", k),
        orth.finish("eigen", "eigenvector_orthonormality", k),
        sets.finish("eigen", "eigenvalue_sets", k),
    ];
    if is_prime(k) && k > 2 {
        let mut t = Tally::new(EIGEN_RESIDUAL_TOL);
        for g in all_labels(k).filter(|g| g.ell != 0) {
            let w = hw_matrix(k, g)?;
            for s in 0..k {
                let v = zeta_vector(k, g, s)?;
                let wv = w.matvec(&v)?;
                let lam = hw::omega(k, s as i64);
                let err = wv.iter().zip(&v).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>().sqrt();
                t.record(err, || format!("ζ_{s} for {g}: residual {err:e}"));
            }
        }
        out.push(t.finish("eigen", "zeta_vectors", k));
    }
    Ok(out)
}

/// Every suite for one local dimension.
pub fn verify_all(k: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = gm_suite(k, SAMPLED_POINTS, seed)?;
    out.extend(hw_suite(k)?);
    out.extend(eigen_suite(k)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_pass(v: &[CheckResult]) {
        for c in v {
            assert!(c.passed, "{} {} K={}: {}", c.suite, c.name, c.k, c.detail);
        }
    }

    #[test]
    fn k2_and_k3_pass() {
        all_pass(&verify_all(2, 1).unwrap());
        all_pass(&verify_all(3, 1).unwrap());
    }

    #[test]
    fn k6_has_gcd_convention() {
        let v = hw_suite(6).unwrap();
        assert!(v.iter().any(|c| c.name == "gcd_convention" && c.passed));
    }

    #[test]
    fn tally_catches_nan() {
        let mut t = Tally::new(1.0);
        t.record(f64::NAN, || "nan".into());
        assert!(!t.finish("x", "y", 2).passed);
    }
}
