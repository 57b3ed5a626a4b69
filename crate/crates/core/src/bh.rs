//! BH ratios, reduction verification against exact classical Fourier transforms,
//! and seeded ratio campaigns.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{
    cube_fourier_owned, cyclic_fourier_owned, lp_norm, Alphabet, ClassicalFn, MAX_TABLE,
};
use crate::coeffs::{random_observable, Family, FourierCoeffs, SiteBasis};
use crate::error::{Error, Result};
use crate::gm::{self, CubePoint, GmReducer};
use crate::hw::{self, is_prime, root_of_unity, HwEnsemble, HwLabel, SpectrumClass};
use crate::rng;
use crate::tensor::op_norm;

/// Largest cube arity handled by the GM reduction check.
pub const GM_REDUCTION_MAX_ARITY: usize = 20;
/// Tolerance for classical coefficients against their predicted values.
pub const CORRESPONDENCE_TOL: f64 = 1e-10;
/// Slack on sup|f_A| ≤ ‖A‖_op.
pub const SUP_TOL: f64 = 1e-9;

/// Classical BH constants: BH_{±1}^{≤d} = base^{√(d ln d)} and
/// BH_{Ω_K}^{≤d} = (factor · ln K)^d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BhConstants {
    pub cube_base: f64,
    pub cyclic_factor: f64,
}

impl Default for BhConstants {
    fn default() -> Self {
        Self { cube_base: 2.0, cyclic_factor: 10.0 }
    }
}

impl BhConstants {
    pub fn boolean(&self, d: usize) -> f64 {
        let d = d.max(1) as f64;
        self.cube_base.powf((d * d.ln()).sqrt())
    }

    /// Ω_2 is the Boolean cube, so K = 2 falls back to the cube constant.
    pub fn cyclic(&self, k: usize, d: usize) -> f64 {
        if k == 2 {
            return self.boolean(d);
        }
        (self.cyclic_factor * (k as f64).ln()).powi(d.max(1) as i32)
    }
}

/// Operator-to-classical constant and the classical BH constant for one setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundParts {
    pub reduction_constant: f64,
    pub classical_constant: f64,
    pub bound: f64,
    /// Non-prime HW only: the classical constant evaluated at degree (K+1)d instead of (K−1)d.
    pub alternative_bound: Option<f64>,
}

pub fn generator_count(k: usize) -> Result<usize> {
    Ok(hw::generator_set(k)?.len())
}

pub fn bound_parts(family: Family, k: usize, d: usize, consts: &BhConstants) -> Result<BoundParts> {
    let d = d.max(1);
    let di = d as i32;
    Ok(match family {
        Family::Gm => {
            let r = (1.5 * (k * k - k) as f64).powi(di);
            let c = consts.boolean(d);
            BoundParts { reduction_constant: r, classical_constant: c, bound: r * c, alternative_bound: None }
        }
        Family::Hw if is_prime(k) => {
            let r = ((k + 1) as f64).powi(di);
            let c = consts.cyclic(k, d);
            BoundParts { reduction_constant: r, classical_constant: c, bound: r * c, alternative_bound: None }
        }
        Family::Hw => {
            let r = (generator_count(k)? as f64).powi(di);
            let c = consts.cyclic(k, (k - 1) * d);
            BoundParts {
                reduction_constant: r,
                classical_constant: c,
                bound: r * c,
                alternative_bound: Some(r * consts.cyclic(k, (k + 1) * d)),
            }
        }
    })
}

/// Norm exponent 2d/(d+1), or 2(K−1)d/((K−1)d+1) for non-prime HW.
pub fn ratio_exponent(family: Family, k: usize, d: usize) -> f64 {
    let d = d.max(1) as f64;
    match family {
        Family::Hw if !is_prime(k) => {
            let e = (k as f64 - 1.0) * d;
            2.0 * e / (e + 1.0)
        }
        _ => 2.0 * d / (d + 1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BhRatio {
    pub degree: usize,
    pub exponent: f64,
    pub coeff_norm: f64,
    pub op_norm: f64,
    pub ratio: f64,
}

/// ‖Â‖_p / ‖A‖_op with d read off the support (GM: non-identity sites, HW: Σ(ℓ+m)).
pub fn bh_ratio(a: &FourierCoeffs) -> Result<BhRatio> {
    if a.values().iter().all(|z| z.norm() == 0.0) {
        return Err(Error::Input("zero operator has no BH ratio".into()));
    }
    let degree = a.degree();
    let exponent = ratio_exponent(a.family(), a.k(), degree);
    let coeff_norm = lp_norm(a.values(), exponent)?;
    let op = op_norm(&a.reconstruct()?)?;
    if op == 0.0 {
        return Err(Error::Input("zero operator has no BH ratio".into()));
    }
    Ok(BhRatio { degree, exponent, coeff_norm, op_norm: op, ratio: coeff_norm / op })
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceRow {
    pub operator_index: String,
    pub operator_degree: usize,
    pub operator_coeff: [f64; 2],
    pub monomial: String,
    pub classical_degree: usize,
    pub expected: [f64; 2],
    pub observed: [f64; 2],
    pub expected_modulus_ratio: f64,
    pub observed_modulus_ratio: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    pub basis: Family,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub operator_degree: usize,
    pub arity: usize,
    pub points: usize,
    pub mapped_max_error: f64,
    pub unmapped_max: f64,
    pub monomial_collisions: usize,
    pub norm_exponent: f64,
    pub operator_norm_p: f64,
    pub classical_norm_p: f64,
    pub reduction_constant: f64,
    pub norm_inequality_holds: bool,
    pub sup_abs_f: f64,
    pub op_norm: f64,
    pub sup_holds: bool,
    pub classical_degree: usize,
    pub degree_cap: usize,
    pub reference_max_error: f64,
    pub parseval_gap: f64,
    pub rows: Vec<CorrespondenceRow>,
    pub passed: bool,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn verify_reduction(a: &FourierCoeffs) -> Result<ReductionReport> {
    match a.family() {
        Family::Gm => verify_gm_reduction(a),
        Family::Hw => verify_hw_reduction(a),
    }
}

fn verify_gm_reduction(a: &FourierCoeffs) -> Result<ReductionReport> {
    let (k, n) = (a.k(), a.n());
    let site = gm::site_arity(k);
    let m = n * site;
    if m > GM_REDUCTION_MAX_ARITY {
        return Err(Error::Capacity(format!(
            "cube arity {m} exceeds {GM_REDUCTION_MAX_ARITY} for exhaustive verification"
        )));
    }
    let reducer = GmReducer::new(k)?;
    let support = a.support();
    let mask = (1u64 << site) - 1;
    let evaluate = |u: usize| -> Result<Complex64> {
        let traces = (0..n)
            .map(|s| reducer.site_traces((u as u64 >> (s * site)) & mask))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[Complex64]> = traces.iter().map(|t| t.as_ref()).collect();
        Ok(support.evaluate(&refs))
    };
    let values = (0..1usize << m)
        .into_par_iter()
        .map(evaluate)
        .collect::<Result<Vec<_>>>()?;

    let reference_max_error = reference_points(values.len())
        .into_iter()
        .map(|u| {
            let patterns: Vec<u64> = (0..n).map(|s| (u as u64 >> (s * site)) & mask).collect();
            let f = gm::gm_reduction_fn(a, &CubePoint::from_patterns(k, &patterns))?;
            Ok((f - values[u]).norm())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let f = ClassicalFn::new(m, Alphabet::PlusMinusOne, values)?;
    let sup = f.sup_norm();
    let mean_sq = f.mean_sq();
    let spec = cube_fourier_owned(f)?;

    let c = gm::cube_scale(k);
    let mut mapped = vec![false; spec.coeffs.len()];
    let mut mapped_max: f64 = 0.0;
    let mut rows = Vec::new();
    for (flat, &coef) in a.values().iter().enumerate() {
        let labels = a.labels_of(flat);
        let mut set = 0usize;
        for (s, &lab) in labels.iter().enumerate() {
            if lab != 0 {
                set |= 1 << gm::cube_coordinate(k, s, lab);
            }
        }
        let kappa = a.site_count(&labels);
        let expected = coef * c.powi(kappa as i32);
        let observed = spec.coeffs[set];
        let err = (observed - expected).norm();
        mapped[set] = true;
        mapped_max = mapped_max.max(err);
        if coef.norm() > 0.0 {
            rows.push(CorrespondenceRow {
                operator_index: a.multi_index_name(&labels),
                operator_degree: kappa,
                operator_coeff: pair(coef),
                monomial: cube_monomial_name(set, m),
                classical_degree: set.count_ones() as usize,
                expected: pair(expected),
                observed: pair(observed),
                expected_modulus_ratio: c.powi(kappa as i32),
                observed_modulus_ratio: observed.norm() / coef.norm(),
                abs_error: err,
            });
        }
    }
    let unmapped_max = spec
        .coeffs
        .iter()
        .zip(&mapped)
        .filter(|(_, &m)| !m)
        .map(|(z, _)| z.norm())
        .fold(0.0, f64::max);

    let d = a.site_degree();
    let p = ratio_exponent(Family::Gm, k, d);
    let op_norm_p = lp_norm(a.values(), p)?;
    let cl_norm_p = lp_norm(&spec.coeffs, p)?;
    let r = (1.5 * (k * k - k) as f64).powi(d.max(1) as i32);
    let holds = op_norm_p <= r * cl_norm_p * (1.0 + 1e-12) + 1e-12;
    let op = op_norm(&a.reconstruct()?)?;
    let classical_degree = spec.degree(CORRESPONDENCE_TOL);
    finish(ReductionReport {
        basis: Family::Gm,
        k,
        n,
        operator_degree: d,
        arity: m,
        points: spec.coeffs.len(),
        mapped_max_error: mapped_max,
        unmapped_max,
        monomial_collisions: 0,
        norm_exponent: p,
        operator_norm_p: op_norm_p,
        classical_norm_p: cl_norm_p,
        reduction_constant: r,
        norm_inequality_holds: holds,
        sup_abs_f: sup,
        op_norm: op,
        sup_holds: sup <= op + SUP_TOL,
        classical_degree,
        degree_cap: d,
        reference_max_error,
        parseval_gap: (spec.l2_sq() - mean_sq).abs(),
        rows,
        passed: false,
    })
}

fn finish(mut r: ReductionReport) -> Result<ReductionReport> {
    r.passed = r.mapped_max_error <= CORRESPONDENCE_TOL
        && r.unmapped_max <= CORRESPONDENCE_TOL
        && r.monomial_collisions == 0
        && r.norm_inequality_holds
        && r.sup_holds
        && r.classical_degree <= r.degree_cap
        && r.reference_max_error <= 1e-12;
    Ok(r)
}

/// A fixed spread of point indices used to cross-check fast evaluation paths.
fn reference_points(len: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = (0..32u64)
        .map(|i| (rng::mix(0x5eed, i) % len as u64) as usize)
        .collect();
    pts.push(0);
    pts.push(len - 1);
    pts
}

fn cube_monomial_name(set: usize, m: usize) -> String {
    let vars: Vec<String> = (0..m).filter(|b| set >> b & 1 == 1).map(|b| format!("x{b}")).collect();
    if vars.is_empty() {
        "1".into()
    } else {
        vars.join("·")
    }
}

/// Classical point tables for the HW ensemble: f(ω⃗) = tr[A ρ(ω⃗)] on the whole grid.
fn hw_grid_values(a: &FourierCoeffs, ens: &HwEnsemble) -> Result<Vec<Complex64>> {
    let (k, n) = (a.k(), a.n());
    let g_count = ens.gens.len();
    let basis = a.basis()?;
    // traces[g][p][label] = tr[W_label P_{g,p}]
    let traces = (0..g_count)
        .map(|g| {
            (0..k)
                .map(|p| basis.site_traces(ens.projector(g, p)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let support = a.support();
    let arity = n * g_count;
    let len = k.pow(arity as u32);
    let inv = 1.0 / g_count as f64;

    // F[g⃗][q⃗] = tr[A ⊗_s P_{g_s,q_s}], g⃗ and q⃗ both with site 0 least significant.
    let gn = g_count.pow(n as u32);
    let kn = k.pow(n as u32);
    let mut table = vec![Complex64::new(0.0, 0.0); gn * kn];
    for gi in 0..gn {
        for qi in 0..kn {
            let (mut gr, mut qr) = (gi, qi);
            let site_refs: Vec<&[Complex64]> = (0..n)
                .map(|_| {
                    let (g, q) = (gr % g_count, qr % k);
                    gr /= g_count;
                    qr /= k;
                    traces[g][q].as_slice()
                })
                .collect();
            table[gi * kn + qi] = support.evaluate(&site_refs);
        }
    }
    let scale = inv.powi(n as i32);

    if n == 1 {
        // f = (1/|Σ|) Σ_g F[g][p_g], split into low and high variable groups.
        let low_vars = g_count / 2;
        let low_len = k.pow(low_vars as u32);
        let high_len = len / low_len;
        let partial = |vars: std::ops::Range<usize>, count: usize| -> Vec<Complex64> {
            (0..count)
                .map(|idx| {
                    let mut rem = idx;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for g in vars.clone() {
                        acc += table[g * kn + rem % k];
                        rem /= k;
                    }
                    acc
                })
                .collect()
        };
        let low = partial(0..low_vars, low_len);
        let high = partial(low_vars..g_count, high_len);
        let mut values = vec![Complex64::new(0.0, 0.0); len];
        values
            .par_chunks_mut(low_len)
            .enumerate()
            .for_each(|(h, chunk)| {
                let hv = high[h];
                for (v, l) in chunk.iter_mut().zip(&low) {
                    *v = (l + hv) * scale;
                }
            });
        return Ok(values);
    }

    Ok((0..len)
        .into_par_iter()
        .map(|u| {
            let mut digits = vec![0usize; arity];
            let mut rem = u;
            for dgt in digits.iter_mut() {
                *dgt = rem % k;
                rem /= k;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for gi in 0..gn {
                let mut gr = gi;
                let mut qi = 0usize;
                let mut w = 1usize;
                for s in 0..n {
                    let g = gr % g_count;
                    gr /= g_count;
                    qi += digits[s * g_count + g] * w;
                    w *= k;
                }
                acc += table[gi * kn + qi];
            }
            acc * scale
        })
        .collect())
}

/// One classical term produced by a single site label: variable g raised to power k with a phase.
#[derive(Clone, Copy, Debug)]
struct SiteTerm {
    g: usize,
    power: usize,
    phase: Complex64,
}

/// Terms of tr[X^ℓ Z^m ρ_s] as a polynomial in the site's generator variables.
fn site_terms(k: usize, ens: &HwEnsemble, label: HwLabel) -> Vec<SiteTerm> {
    let g_count = ens.gens.len() as f64;
    let mut out = Vec::new();
    for (g, &gen) in ens.gens.members.iter().enumerate() {
        for power in 1..k {
            if gen.times(power, k) == label {
                let minus = ens.gens.class_of(g) == SpectrumClass::Minus;
                let e = -((power * (power - 1) * gen.ell * gen.m) as i64) + if minus { power as i64 } else { 0 };
                out.push(SiteTerm { g, power, phase: root_of_unity(e, 2 * k) / g_count });
            }
        }
    }
    out
}

fn verify_hw_reduction(a: &FourierCoeffs) -> Result<ReductionReport> {
    let (k, n) = (a.k(), a.n());
    let ens = HwEnsemble::new(k)?;
    let g_count = ens.gens.len();
    let arity = n * g_count;
    match k.checked_pow(arity as u32) {
        Some(len) if len <= MAX_TABLE => {}
        _ => {
            return Err(Error::Capacity(format!(
                "cyclic table {k}^{arity} exceeds 2^24 for exhaustive verification"
            )))
        }
    }
    let values = hw_grid_values(a, &ens)?;

    let reference_max_error = reference_points(values.len())
        .into_iter()
        .map(|u| {
            let mut rem = u;
            let phases: Vec<Vec<usize>> = (0..n)
                .map(|_| {
                    (0..g_count)
                        .map(|_| {
                            let p = rem % k;
                            rem /= k;
                            p
                        })
                        .collect()
                })
                .collect();
            let f = hw::hw_reduction_fn(a, &ens, &phases)?;
            Ok((f - values[u]).norm())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let f = ClassicalFn::new(arity, Alphabet::OmegaK(k), values)?;
    let sup = f.sup_norm();
    let mean_sq = f.mean_sq();
    let spec = cyclic_fourier_owned(f)?;

    let per_label: Vec<Vec<SiteTerm>> = (0..k * k)
        .map(|idx| site_terms(k, &ens, HwLabel::from_index(k, idx)))
        .collect();

    // Predicted classical coefficients, accumulated per monomial.
    let mut predicted: BTreeMap<usize, Complex64> = BTreeMap::new();
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    let mut collisions = 0usize;
    let mut rows = Vec::new();
    for (flat, &coef) in a.values().iter().enumerate() {
        let labels = a.labels_of(flat);
        let kappa = a.site_count(&labels);
        let op_degree = a.index_degree(&labels);
        // cartesian product over sites of the admissible terms
        let mut combos: Vec<(usize, Complex64, Vec<(usize, usize, usize)>)> = vec![(0, coef, Vec::new())];
        for (s, &lab) in labels.iter().enumerate() {
            if lab == 0 {
                continue;
            }
            let mut next = Vec::new();
            for (idx, c, desc) in &combos {
                for t in &per_label[lab] {
                    let var = s * g_count + t.g;
                    let mut d = desc.clone();
                    d.push((s, t.g, t.power));
                    next.push((idx + t.power * k.pow(var as u32), c * t.phase, d));
                }
            }
            combos = next;
        }
        for (idx, expected, desc) in combos {
            if let Some(&prev) = owner.get(&idx) {
                if prev != flat {
                    collisions += 1;
                }
            }
            owner.insert(idx, flat);
            *predicted.entry(idx).or_insert(Complex64::new(0.0, 0.0)) += expected;
            if coef.norm() > 0.0 {
                let observed = spec.coeffs[idx];
                let ratio = (g_count as f64).powi(-(kappa as i32));
                rows.push(CorrespondenceRow {
                    operator_index: a.multi_index_name(&labels),
                    operator_degree: op_degree,
                    operator_coeff: pair(coef),
                    monomial: cyclic_monomial_name(&desc, &ens),
                    classical_degree: spec.monomial_degree(idx),
                    expected: pair(expected),
                    observed: pair(observed),
                    expected_modulus_ratio: ratio,
                    observed_modulus_ratio: observed.norm() / coef.norm(),
                    abs_error: (observed - expected).norm(),
                });
            }
        }
    }
    let mut mapped_max: f64 = 0.0;
    for (&idx, &z) in &predicted {
        mapped_max = mapped_max.max((spec.coeffs[idx] - z).norm());
    }
    let unmapped_max = spec
        .coeffs
        .iter()
        .enumerate()
        .filter(|(i, _)| !predicted.contains_key(i))
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);

    let d = a.degree();
    let p = ratio_exponent(Family::Hw, k, d);
    let op_norm_p = lp_norm(a.values(), p)?;
    let cl_norm_p = lp_norm(&spec.coeffs, p)?;
    let r = if is_prime(k) {
        ((k + 1) as f64).powi(d.max(1) as i32)
    } else {
        (g_count as f64).powi(d.max(1) as i32)
    };
    let holds = op_norm_p <= r * cl_norm_p * (1.0 + 1e-12) + 1e-12;
    let op = op_norm(&a.reconstruct()?)?;
    let degree_cap = if is_prime(k) { d } else { (k - 1) * d };
    finish(ReductionReport {
        basis: Family::Hw,
        k,
        n,
        operator_degree: d,
        arity,
        points: spec.coeffs.len(),
        mapped_max_error: mapped_max,
        unmapped_max,
        monomial_collisions: collisions,
        norm_exponent: p,
        operator_norm_p: op_norm_p,
        classical_norm_p: cl_norm_p,
        reduction_constant: r,
        norm_inequality_holds: holds,
        sup_abs_f: sup,
        op_norm: op,
        sup_holds: sup <= op + SUP_TOL,
        classical_degree: spec.degree(CORRESPONDENCE_TOL),
        degree_cap,
        reference_max_error,
        parseval_gap: (spec.l2_sq() - mean_sq).abs(),
        rows,
        passed: false,
    })
}

fn cyclic_monomial_name(desc: &[(usize, usize, usize)], ens: &HwEnsemble) -> String {
    if desc.is_empty() {
        return "1".into();
    }
    desc.iter()
        .map(|&(s, g, p)| format!("z[{s},{}]^{p}", ens.gens.members[g]))
        .collect::<Vec<_>>()
        .join("·")
}

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub basis: Family,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub constants: BhConstants,
    /// Number of leading trials whose reduction is verified exhaustively.
    pub verify_reductions: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub d: usize,
    pub exponent: f64,
    pub ratio: f64,
    pub coeff_norm: f64,
    pub op_norm: f64,
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionSummary {
    pub trial: usize,
    pub passed: bool,
    pub mapped_max_error: f64,
    pub unmapped_max: f64,
    pub sup_abs_f: f64,
    pub op_norm: f64,
    pub operator_degree: usize,
    pub classical_degree: usize,
    pub degree_cap: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BhReport {
    pub schema: u32,
    pub basis: Family,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub constants: BhConstants,
    pub reduction_constant: f64,
    pub classical_constant: f64,
    pub bound_used: f64,
    pub alternative_bound: Option<f64>,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub flagged: Vec<usize>,
    pub reductions: Vec<ReductionSummary>,
    pub correspondence: Vec<CorrespondenceRow>,
    pub passed: bool,
    pub records: Vec<TrialRecord>,
}

/// Seed of trial `t` in a campaign seeded with `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    rng::mix(seed, t as u64)
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<BhReport> {
    if cfg.trials == 0 {
        return Err(Error::Input("campaign needs at least one trial".into()));
    }
    let basis = SiteBasis::new(cfg.basis, cfg.k)?;
    let parts = bound_parts(cfg.basis, cfg.k, cfg.d, &cfg.constants)?;
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<(TrialRecord, Option<ReductionReport>)> {
            let seed = trial_seed(cfg.seed, t);
            let mut r = rng::seeded(seed);
            let keep = if t % 2 == 0 { 1.0 } else { 0.5 };
            let a = random_observable(&basis, cfg.n, cfg.d, keep, &mut r)?;
            let ratio = bh_ratio(&a)?;
            let bound = bound_parts(cfg.basis, cfg.k, ratio.degree, &cfg.constants)?.bound;
            let red = if t < cfg.verify_reductions {
                Some(verify_reduction(&a)?)
            } else {
                None
            };
            Ok((
                TrialRecord {
                    trial: t,
                    seed,
                    d: ratio.degree,
                    exponent: ratio.exponent,
                    ratio: ratio.ratio,
                    coeff_norm: ratio.coeff_norm,
                    op_norm: ratio.op_norm,
                    bound,
                    within_bound: ratio.ratio <= bound,
                },
                red,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(outcomes.len());
    let mut reductions = Vec::new();
    let mut correspondence = Vec::new();
    for (rec, red) in outcomes {
        if let Some(red) = red {
            if correspondence.is_empty() {
                correspondence = red.rows.clone();
            }
            reductions.push(ReductionSummary {
                trial: rec.trial,
                passed: red.passed,
                mapped_max_error: red.mapped_max_error,
                unmapped_max: red.unmapped_max,
                sup_abs_f: red.sup_abs_f,
                op_norm: red.op_norm,
                operator_degree: red.operator_degree,
                classical_degree: red.classical_degree,
                degree_cap: red.degree_cap,
            });
        }
        records.push(rec);
    }
    let flagged: Vec<usize> = records.iter().filter(|r| !r.within_bound).map(|r| r.trial).collect();
    let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mean_ratio = records.iter().map(|r| r.ratio).sum::<f64>() / records.len() as f64;
    let passed = flagged.is_empty() && reductions.iter().all(|r| r.passed);
    Ok(BhReport {
        schema: 1,
        basis: cfg.basis,
        k: cfg.k,
        n: cfg.n,
        d: cfg.d,
        trials: cfg.trials,
        seed: cfg.seed,
        constants: cfg.constants,
        reduction_constant: parts.reduction_constant,
        classical_constant: parts.classical_constant,
        bound_used: parts.bound,
        alternative_bound: parts.alternative_bound,
        max_ratio,
        mean_ratio,
        flagged,
        reductions,
        correspondence,
        passed,
        records,
    })
}

/// Default number of trials to verify exhaustively: all of them when the classical
/// table is small, otherwise a handful.
pub fn default_reduction_checks(family: Family, k: usize, n: usize, trials: usize) -> usize {
    let size = match family {
        Family::Gm => {
            let m = n * gm::site_arity(k);
            if m > GM_REDUCTION_MAX_ARITY {
                return 0;
            }
            1usize << m
        }
        Family::Hw => {
            let g = match hw::generator_set(k) {
                Ok(g) => g.len(),
                Err(_) => return 0,
            };
            match k.checked_pow((n * g) as u32) {
                Some(s) if s <= MAX_TABLE => s,
                _ => return 0,
            }
        }
    };
    if size <= 1 << 16 {
        trials
    } else {
        trials.min(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn single_element_ratio() {
        let a = FourierCoeffs::single(Family::Gm, 3, &[4], one()).unwrap();
        let m = gm::gm_matrix(3, gm::GmLabel::from_index(3, 4).unwrap()).unwrap();
        let r = bh_ratio(&a).unwrap();
        assert!((r.ratio - 1.0 / op_norm(&m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_ratio() {
        let mut a = FourierCoeffs::zeros(Family::Gm, 2, 2).unwrap();
        for l in 1..4 {
            a.set(&[l, l], one()).unwrap();
        }
        let r = bh_ratio(&a).unwrap();
        assert!((r.coeff_norm - 3f64.powf(0.75)).abs() < 1e-12);
        assert!((r.op_norm - 3.0).abs() < 1e-12);
        assert!((r.ratio - 3f64.powf(-0.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_operator_rejected() {
        let a = FourierCoeffs::zeros(Family::Gm, 2, 1).unwrap();
        assert!(matches!(bh_ratio(&a), Err(Error::Input(_))));
    }

    #[test]
    fn sigma3_reduction() {
        let a = FourierCoeffs::single(Family::Gm, 2, &[3], Complex64::new(0.7, 0.0)).unwrap();
        let rep = verify_reduction(&a).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.rows.len(), 1);
        assert!((rep.rows[0].observed[0] - 0.7 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn shift_reduction_at_three() {
        let a = FourierCoeffs::single(Family::Hw, 3, &[HwLabel::new(1, 0).index(3)], one()).unwrap();
        let rep = verify_reduction(&a).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.rows.len(), 1);
        assert!((rep.rows[0].observed_modulus_ratio - 0.25).abs() < 1e-12);
    }
}
