//! Coefficient thresholding and the sampled low-degree learner for GM observables.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bh::BhConstants;
use crate::coeffs::{Family, FourierCoeffs};
use crate::error::{Error, Result};
use crate::gm::{self, GmReducer};
use crate::noise::{self, Ensemble, Estimate};
use crate::rng;
use crate::tensor::op_norm;

/// Samples per derived RNG stream.
pub const SAMPLE_CHUNK: usize = 65_536;
/// Default ceiling on the number of samples actually drawn.
pub const DEFAULT_MAX_SAMPLES: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EiParams {
    pub d: usize,
    pub eta: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl EiParams {
    /// η(1 + √(d+1)).
    pub fn threshold(&self) -> f64 {
        self.eta * (1.0 + ((self.d + 1) as f64).sqrt())
    }

    /// (e⁵ η² d B^{2d})^{1/(d+1)}.
    pub fn error_bound(&self) -> f64 {
        let d = self.d as f64;
        (5f64.exp() * self.eta * self.eta * d * self.b.powf(2.0 * d)).powf(1.0 / (d + 1.0))
    }
}

/// Zeroes every entry with modulus below the threshold η(1 + √(d+1)).
pub fn ei_threshold(w: &[Complex64], p: &EiParams) -> Vec<Complex64> {
    let t = p.threshold();
    w.iter()
        .map(|&z| if z.norm() >= t { z } else { Complex64::new(0.0, 0.0) })
        .collect()
}

/// (3/2 (K²−K))^d · BH_{±1}^{≤d}.
pub fn default_gm_bh(k: usize, d: usize) -> f64 {
    (1.5 * (k * k - k) as f64).powi(d as i32) * BhConstants::default().boolean(d)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LearningConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Bound t on ‖A‖_op.
    pub op_norm_bound: f64,
    pub bh_constant: f64,
    /// Fixed sample count; overrides both the formula and the cap.
    pub samples: Option<u64>,
    pub max_samples: u64,
    pub seed: u64,
}

impl LearningConfig {
    pub fn new(k: usize, n: usize, d: usize, epsilon: f64, delta: f64, seed: u64) -> Self {
        Self {
            k,
            n,
            d,
            epsilon,
            delta,
            op_norm_bound: 1.0,
            bh_constant: default_gm_bh(k, d.max(1)),
            samples: None,
            max_samples: DEFAULT_MAX_SAMPLES,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if self.k < 2 || self.n == 0 {
            return Err(Error::Input(format!("K={} n={} out of range", self.k, self.n)));
        }
        if self.d == 0 {
            return Err(Error::Input("degree must be at least 1".into()));
        }
        if !open_unit(self.epsilon) || !open_unit(self.delta) {
            return Err(Error::Input(format!(
                "epsilon={} and delta={} must lie in (0,1)",
                self.epsilon, self.delta
            )));
        }
        if !(self.op_norm_bound > 0.0) || !(self.bh_constant > 0.0) {
            return Err(Error::Input("norm bound and BH constant must be positive".into()));
        }
        if self.samples == Some(0) || self.max_samples == 0 {
            return Err(Error::Input("sample count must be positive".into()));
        }
        Ok(())
    }
}

/// e⁶ d² (18K³·BH·t)^{2d} ln(2en/δ) ε^{−d−1}, before rounding.
pub fn sample_count_value(cfg: &LearningConfig) -> Result<f64> {
    cfg.validate()?;
    let d = cfg.d as f64;
    let k = cfg.k as f64;
    Ok(6f64.exp()
        * d
        * d
        * (18.0 * k.powi(3) * cfg.bh_constant * cfg.op_norm_bound).powf(2.0 * d)
        * (2.0 * std::f64::consts::E * cfg.n as f64 / cfg.delta).ln()
        * cfg.epsilon.powf(-d - 1.0))
}

/// Ceiling of [`sample_count_value`], saturating at u128::MAX.
pub fn sample_count(cfg: &LearningConfig) -> Result<u128> {
    Ok(sample_count_value(cfg)?.ceil() as u128)
}

/// η with η² = ε^{d+1} e^{−5} d^{−1} (BH·t)^{−2d}.
pub fn proof_eta(cfg: &LearningConfig) -> f64 {
    let d = cfg.d as f64;
    (cfg.epsilon.powf(d + 1.0) * (-5f64).exp() / d * (cfg.bh_constant * cfg.op_norm_bound).powf(-2.0 * d)).sqrt()
}

/// Radius η_s with P(max_α |W(α) − Â(α)| > η_s) ≤ δ by Hoeffding and a union bound over
/// `count` coefficients, each sample term lying in [−c^{−d}t, c^{−d}t].
pub fn hoeffding_radius(cfg: &LearningConfig, count: usize, samples: u64) -> f64 {
    let range = gm::cube_scale(cfg.k).powi(-(cfg.d as i32)) * cfg.op_norm_bound;
    range * (2.0 * (2.0 * count as f64 / cfg.delta).ln() / samples as f64).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoeffError {
    pub index: String,
    pub err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoeffRecord {
    pub index: String,
    pub degree: usize,
    pub target: [f64; 2],
    pub empirical: [f64; 2],
    pub thresholded: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleCheck {
    pub ensemble: Ensemble,
    /// Exact E|tr[(Ã − A)ρ]|² for this ensemble.
    pub value: f64,
    /// Σ (K/(K²−1))^{|α|}|Â − Ã|².
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LearningReport {
    pub config: LearningConfig,
    /// Samples drawn.
    pub s: u64,
    /// Unrounded sample-count formula.
    pub s_required: f64,
    pub capped: bool,
    pub eta: f64,
    /// Thresholding level η(1 + √(d+1)).
    pub t: f64,
    /// Hoeffding radius certified by the samples actually drawn.
    pub eta_certified: f64,
    pub guarantee_certified: bool,
    pub l2_sq_error: f64,
    pub l2_sq_error_trace: f64,
    pub coeff_errors: Vec<CoeffError>,
    pub coefficients: Vec<CoeffRecord>,
    pub ensemble_checks: Vec<EnsembleCheck>,
    #[serde(skip)]
    pub learned: FourierCoeffs,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
}

/// Multi-indices with at most `d` non-identity sites, in flat order, with their
/// cube coordinates (site, coordinate within the site block).
fn low_degree_indices(c: &FourierCoeffs, d: usize) -> Vec<(usize, Vec<(usize, usize)>)> {
    (0..c.len())
        .filter_map(|i| {
            let labels = c.labels_of(i);
            if c.site_count(&labels) > d {
                return None;
            }
            let coords = labels
                .iter()
                .enumerate()
                .filter(|(_, &a)| a != 0)
                .map(|(s, &a)| (s, a - 1))
                .collect();
            Some((i, coords))
        })
        .collect()
}

/// Flattened per-sample work: f(x) from the tabulated site traces, then f(x)·χ_α(x) for
/// every estimated multi-index α.
struct Kernel<'a> {
    n: usize,
    q: usize,
    reducer: &'a GmReducer,
    support_labels: Vec<u8>,
    support_coeffs: Vec<Complex64>,
    index_labels: Vec<u8>,
}

impl<'a> Kernel<'a> {
    fn new(source: &FourierCoeffs, reducer: &'a GmReducer, indices: &[(usize, Vec<(usize, usize)>)]) -> Self {
        let support = source.support();
        let mut support_labels = Vec::with_capacity(support.entries.len() * source.n());
        let mut support_coeffs = Vec::with_capacity(support.entries.len());
        for (labels, c) in &support.entries {
            support_labels.extend(labels.iter().map(|&a| a as u8));
            support_coeffs.push(*c);
        }
        let index_labels = indices
            .iter()
            .flat_map(|(i, _)| source.labels_of(*i).into_iter().map(|a| a as u8))
            .collect();
        Self {
            n: source.n(),
            q: source.k() * source.k(),
            reducer,
            support_labels,
            support_coeffs,
            index_labels,
        }
    }

    fn scratch(&self) -> (Vec<Complex64>, Vec<f64>) {
        (vec![Complex64::new(0.0, 0.0); self.n * self.q], vec![0.0; self.n * self.q])
    }

    fn accumulate(&self, patterns: &[u64], tr: &mut [Complex64], sign: &mut [f64], acc: &mut [Complex64]) -> Result<()> {
        let q = self.q;
        for (s, &p) in patterns.iter().enumerate() {
            tr[s * q..(s + 1) * q].copy_from_slice(&self.reducer.site_traces(p)?);
            let sg = &mut sign[s * q..(s + 1) * q];
            sg[0] = 1.0;
            for (a, x) in sg.iter_mut().enumerate().skip(1) {
                *x = if (p >> (a - 1)) & 1 == 1 { -1.0 } else { 1.0 };
            }
        }
        let mut f = Complex64::new(0.0, 0.0);
        for (labels, c) in self.support_labels.chunks_exact(self.n).zip(&self.support_coeffs) {
            let mut term = *c;
            for (s, &a) in labels.iter().enumerate() {
                term *= tr[s * q + a as usize];
            }
            f += term;
        }
        for (labels, slot) in self.index_labels.chunks_exact(self.n).zip(acc.iter_mut()) {
            let mut sgn = 1.0;
            for (s, &a) in labels.iter().enumerate() {
                sgn *= sign[s * q + a as usize];
            }
            *slot += f * sgn;
        }
        Ok(())
    }
}

/// Learns a GM observable of degree ≤ d from uniformly random cube-state samples.
pub fn learn_low_degree(target: &FourierCoeffs, cfg: &LearningConfig) -> Result<LearningReport> {
    cfg.validate()?;
    check_target(target, cfg)?;
    if target.site_degree() > cfg.d {
        return Err(Error::Precondition(format!(
            "target has degree {} > {}",
            target.site_degree(),
            cfg.d
        )));
    }
    let norm = op_norm(&target.reconstruct()?)?;
    if norm > cfg.op_norm_bound + 1e-9 {
        return Err(Error::Precondition(format!(
            "target operator norm {norm} exceeds the bound {}",
            cfg.op_norm_bound
        )));
    }
    learn_from_samples(target, target, cfg)
}

fn check_target(target: &FourierCoeffs, cfg: &LearningConfig) -> Result<()> {
    if target.family() != Family::Gm {
        return Err(Error::Input("the learner works with GM coefficients".into()));
    }
    if target.k() != cfg.k || target.n() != cfg.n {
        return Err(Error::Input(format!(
            "target is K={} n={}, configuration says K={} n={}",
            target.k(),
            target.n(),
            cfg.k,
            cfg.n
        )));
    }
    Ok(())
}

/// Samples f = tr[source·ρ(x)], estimates every coefficient of degree ≤ d, thresholds,
/// and scores the result against `reference`.
fn learn_from_samples(source: &FourierCoeffs, reference: &FourierCoeffs, cfg: &LearningConfig) -> Result<LearningReport> {
    let start = Instant::now();
    let (k, n) = (cfg.k, cfg.n);
    let s_required = sample_count_value(cfg)?;
    let (s, capped) = match cfg.samples {
        Some(s) => (s, false),
        None if s_required > cfg.max_samples as f64 => (cfg.max_samples, true),
        None => (s_required.ceil() as u64, false),
    };

    let reducer = GmReducer::new(k)?;
    let indices = low_degree_indices(source, cfg.d);
    let kernel = Kernel::new(source, &reducer, &indices);
    let site = gm::site_arity(k);
    let mask = if site >= 64 { u64::MAX } else { (1u64 << site) - 1 };

    let chunks = (s as usize).div_ceil(SAMPLE_CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|ch| -> Result<Vec<Complex64>> {
            let mut r = rng::derived(cfg.seed, ch as u64);
            let count = SAMPLE_CHUNK.min(s as usize - ch * SAMPLE_CHUNK);
            let mut acc = vec![Complex64::new(0.0, 0.0); indices.len()];
            let (mut tr, mut sign) = kernel.scratch();
            let mut patterns = vec![0u64; n];
            for _ in 0..count {
                for p in patterns.iter_mut() {
                    *p = rng::bits(&mut r) & mask;
                }
                kernel.accumulate(&patterns, &mut tr, &mut sign, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![Complex64::new(0.0, 0.0); indices.len()];
    for part in &sums {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    let c = gm::cube_scale(k);
    let w: Vec<Complex64> = total
        .iter()
        .zip(&indices)
        .map(|(z, (_, coords))| z / s as f64 * c.powi(-(coords.len() as i32)))
        .collect();

    let eta = proof_eta(cfg);
    let params = EiParams { d: cfg.d, eta, b: cfg.bh_constant * cfg.op_norm_bound };
    let w_tilde = ei_threshold(&w, &params);

    let mut learned = FourierCoeffs::zeros(Family::Gm, k, n)?;
    for ((idx, _), z) in indices.iter().zip(&w_tilde) {
        learned.values_mut()[*idx] = *z;
    }
    let diff = learned.sub(reference)?;
    let l2_sq_error = diff.l2_sq();
    let l2_sq_error_trace = normalized_trace_norm_sq(&diff)?;

    let mut coeff_errors = Vec::with_capacity(indices.len());
    let mut coefficients = Vec::with_capacity(indices.len());
    for (((idx, coords), wz), wt) in indices.iter().zip(&w).zip(&w_tilde) {
        let labels = reference.labels_of(*idx);
        let name = reference.multi_index_name(&labels);
        let tz = reference.values()[*idx];
        coeff_errors.push(CoeffError { index: name.clone(), err: (wt - tz).norm() });
        coefficients.push(CoeffRecord {
            index: name,
            degree: coords.len(),
            target: [tz.re, tz.im],
            empirical: [wz.re, wz.im],
            thresholded: [wt.re, wt.im],
        });
    }

    let bound = noise::noise_stability_bound(&diff)?;
    let ensemble_checks = vec![
        {
            let v = noise::haar_product_second_moment(&diff);
            EnsembleCheck { ensemble: Ensemble::HaarProductPure, value: v, bound, holds: v <= bound + 1e-12 }
        },
        {
            let v = noise::gm_cube_second_moment(&diff)?;
            EnsembleCheck { ensemble: Ensemble::GmCubeEnsemble, value: v, bound, holds: v <= bound + 1e-12 }
        },
    ];

    let eta_certified = hoeffding_radius(cfg, indices.len(), s);
    Ok(LearningReport {
        config: cfg.clone(),
        s,
        s_required,
        capped,
        eta,
        t: params.threshold(),
        eta_certified,
        guarantee_certified: (s as f64) >= s_required,
        l2_sq_error,
        l2_sq_error_trace,
        coeff_errors,
        coefficients,
        ensemble_checks,
        learned,
        wall_time: start.elapsed(),
    })
}

/// K^{−n} tr[D†D] from the reconstructed matrix.
pub fn normalized_trace_norm_sq(c: &FourierCoeffs) -> Result<f64> {
    let m = c.reconstruct()?;
    let dim = m.rows() as f64;
    Ok(m.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / dim)
}

/// Exact W(α) = c^{−|α|} · 2^{−m} Σ_x f_A(x) χ_{S(α)}(x) for |α| ≤ d, averaging over the
/// whole cube instead of sampling.
pub fn exhaustive_coefficients(target: &FourierCoeffs, d: usize) -> Result<FourierCoeffs> {
    let (k, n) = (target.k(), target.n());
    let site = gm::site_arity(k);
    let m = n * site;
    if m > crate::bh::GM_REDUCTION_MAX_ARITY {
        return Err(Error::Capacity(format!("cube arity {m} too large for exhaustive averaging")));
    }
    let reducer = GmReducer::new(k)?;
    let indices = low_degree_indices(target, d);
    let kernel = Kernel::new(target, &reducer, &indices);
    let mask = (1u64 << site) - 1;
    let mut acc = vec![Complex64::new(0.0, 0.0); indices.len()];
    let (mut tr, mut sign) = kernel.scratch();
    let mut patterns = vec![0u64; n];
    for u in 0..1u64 << m {
        for (s, p) in patterns.iter_mut().enumerate() {
            *p = (u >> (s * site)) & mask;
        }
        kernel.accumulate(&patterns, &mut tr, &mut sign, &mut acc)?;
    }
    let c = gm::cube_scale(k);
    let mut out = FourierCoeffs::zeros(Family::Gm, k, n)?;
    for ((idx, coords), z) in indices.iter().zip(acc) {
        out.values_mut()[*idx] = z / (1u64 << m) as f64 * c.powi(-(coords.len() as i32));
    }
    Ok(out)
}

/// ceil(ln(4/ε)/ln(K²−1)), clamped to [1, n].
pub fn arbitrary_degree(k: usize, n: usize, epsilon: f64) -> usize {
    let x = (4.0 / epsilon).ln() / ((k * k - 1) as f64).ln();
    (x.ceil().max(1.0) as usize).min(n)
}

#[derive(Clone, Debug, Serialize)]
pub struct ArbitraryOptions {
    pub samples: Option<u64>,
    pub max_samples: u64,
    /// Monte Carlo draws for the HaarProductPure cross-check; 0 skips it.
    pub mc_samples: usize,
}

impl Default for ArbitraryOptions {
    fn default() -> Self {
        Self { samples: None, max_samples: DEFAULT_MAX_SAMPLES, mc_samples: 2000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArbitraryReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub d: usize,
    /// ‖A^{≤d}‖_op, measured on the truncated target.
    pub truncated_op_norm: f64,
    /// (K/(K²−1))^d ‖A‖₂².
    pub truncation_bound: f64,
    /// 2(1/(K²−1))^d, the form appearing in the triangle-inequality step.
    pub truncation_bound_alt: f64,
    /// Exact HaarProductPure value of E|tr[(A − A^{≤d})ρ]|².
    pub truncation_haar: f64,
    pub low_degree: LearningReport,
    /// 2·truncation_haar + 2‖Ã − A^{≤d}‖₂².
    pub guarantee: f64,
    /// Exact HaarProductPure value of E|tr[(Ã − A)ρ]|².
    pub final_haar: f64,
    pub final_haar_mc: Option<Estimate>,
    pub final_noise_bound: f64,
    pub passed: bool,
}

/// Truncates at d = ceil(log_{K²−1}(4/ε)), learns the truncation to ε/4 from samples of
/// the full observable, and scores the result on Haar-random product states.
pub fn learn_arbitrary(
    target: &FourierCoeffs,
    epsilon: f64,
    delta: f64,
    seed: u64,
    opts: &ArbitraryOptions,
) -> Result<ArbitraryReport> {
    if target.family() != Family::Gm {
        return Err(Error::Input("the learner works with GM coefficients".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Input("epsilon and delta must lie in (0,1)".into()));
    }
    let norm = op_norm(&target.reconstruct()?)?;
    if norm > 1.0 + 1e-9 {
        return Err(Error::Precondition(format!("target operator norm {norm} exceeds 1")));
    }
    let (k, n) = (target.k(), target.n());
    let d = arbitrary_degree(k, n, epsilon);
    let truncated = target.truncate(d);
    let t_norm = op_norm(&truncated.reconstruct()?)?;
    let mut cfg = LearningConfig::new(k, n, d, epsilon / 4.0, delta, seed);
    cfg.op_norm_bound = t_norm.max(f64::MIN_POSITIVE);
    cfg.bh_constant = default_gm_bh(k, d);
    cfg.samples = opts.samples;
    cfg.max_samples = opts.max_samples;
    let low = learn_from_samples(target, &truncated, &cfg)?;

    let kk = k as f64;
    let tail = target.sub(&truncated)?;
    let truncation_haar = noise::haar_product_second_moment(&tail);
    let final_diff = low.learned.sub(target)?;
    let final_haar = noise::haar_product_second_moment(&final_diff);
    let final_haar_mc = if opts.mc_samples >= 2 {
        Some(noise::l2di_expectation(&final_diff, Ensemble::HaarProductPure, opts.mc_samples, rng::mix(seed, 0x4d43))?)
    } else {
        None
    };
    Ok(ArbitraryReport {
        k,
        n,
        epsilon,
        delta,
        seed,
        d,
        truncated_op_norm: t_norm,
        truncation_bound: (kk / (kk * kk - 1.0)).powi(d as i32) * target.l2_sq(),
        truncation_bound_alt: 2.0 * (1.0 / (kk * kk - 1.0)).powi(d as i32),
        truncation_haar,
        guarantee: 2.0 * truncation_haar + 2.0 * low.l2_sq_error,
        final_haar,
        final_haar_mc,
        final_noise_bound: noise::noise_stability_bound(&final_diff)?,
        passed: final_haar <= epsilon,
        low_degree: low,
    })
}
