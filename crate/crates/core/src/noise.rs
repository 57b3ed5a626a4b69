//! Haar second moments, product-state ensembles and second-moment (noise stability)
//! estimates E|tr[Aρ]|².

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{Family, FourierCoeffs, SiteBasis};
use crate::error::{shape, Error, Result};
use crate::gm;
use crate::hw::HwEnsemble;
use crate::rng::{self, Rng};
use crate::tensor::{kron, ComplexMatrix};

const TRACE_TOL: f64 = 1e-12;
const CHUNK: usize = 4096;

/// F = Σ_{j,k} |jk⟩⟨kj| on C^K ⊗ C^K.
pub fn swap_operator(k: usize) -> ComplexMatrix {
    let mut f = ComplexMatrix::zeros(k * k, k * k);
    for j in 0..k {
        for l in 0..k {
            f[(j * k + l, l * k + j)] = Complex64::new(1.0, 0.0);
        }
    }
    f
}

#[derive(Clone, Debug)]
pub struct MomentChannelResult {
    pub k: usize,
    pub ma: ComplexMatrix,
    pub mb: ComplexMatrix,
    /// E_U[U†MaU ⊗ U†MbU].
    pub output: ComplexMatrix,
}

/// Haar average of U†MaU ⊗ U†MbU for traceless inputs, tr[F·Ma⊗Mb]/(K²−1)·(F − I/K),
/// and I⊗I for the identity pair.
pub fn haar_moment_channel(k: usize, ma: &ComplexMatrix, mb: &ComplexMatrix) -> Result<MomentChannelResult> {
    for m in [ma, mb] {
        if m.rows() != k || m.cols() != k {
            return shape(format!("moment channel inputs must be {k}x{k}"));
        }
    }
    let id = ComplexMatrix::identity(k);
    let both_identity = ma.max_abs_diff(&id) <= TRACE_TOL && mb.max_abs_diff(&id) <= TRACE_TOL;
    let output = if both_identity {
        ComplexMatrix::identity(k * k)
    } else {
        let (ta, tb) = (ma.trace()?, mb.trace()?);
        if ta.norm() > TRACE_TOL || tb.norm() > TRACE_TOL {
            return Err(Error::Contract(format!(
                "inputs must both be traceless or both the identity (traces {ta}, {tb})"
            )));
        }
        let f = swap_operator(k);
        let t = crate::tensor::trace_product(&f, &kron(ma, mb)?)?;
        let kk = k as f64;
        let shifted = f.sub(&ComplexMatrix::identity(k * k).scale(Complex64::new(1.0 / kk, 0.0)))?;
        shifted.scale(t / (kk * kk - 1.0))
    };
    Ok(MomentChannelResult { k, ma: ma.clone(), mb: mb.clone(), output })
}

/// Haar-random unitary: modified Gram–Schmidt on a complex Gaussian matrix, which
/// leaves a positive diagonal in R.
pub fn haar_unitary(k: usize, rng: &mut Rng) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = (0..k)
        .map(|_| (0..k).map(|_| rng::complex_gaussian(rng)).collect())
        .collect();
    for j in 0..k {
        for i in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let q = &done[i];
            let proj: Complex64 = q.iter().zip(rest[0].iter()).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in rest[0].iter_mut().zip(q) {
                *x -= proj * y;
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    let mut u = ComplexMatrix::zeros(k, k);
    for (j, col) in cols.iter().enumerate() {
        for (i, &z) in col.iter().enumerate() {
            u[(i, j)] = z;
        }
    }
    u
}

/// Haar-random pure state as a normalized complex Gaussian vector.
pub fn haar_state(k: usize, rng: &mut Rng) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..k).map(|_| rng::complex_gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Ensemble {
    HaarProductPure,
    GmCubeEnsemble,
    HwPhaseEnsemble,
}

impl Ensemble {
    pub const ALL: [Ensemble; 3] = [
        Ensemble::HaarProductPure,
        Ensemble::GmCubeEnsemble,
        Ensemble::HwPhaseEnsemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ensemble::HaarProductPure => "HaarProductPure",
            Ensemble::GmCubeEnsemble => "GmCubeEnsemble",
            Ensemble::HwPhaseEnsemble => "HwPhaseEnsemble",
        }
    }
}

impl std::str::FromStr for Ensemble {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ensemble::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Input(format!("unknown ensemble '{s}'")))
    }
}

/// Draws single-site states from one ensemble.
pub struct SiteSampler {
    k: usize,
    ensemble: Ensemble,
    hw: Option<HwEnsemble>,
}

impl SiteSampler {
    pub fn new(k: usize, ensemble: Ensemble) -> Result<Self> {
        let hw = match ensemble {
            Ensemble::HwPhaseEnsemble => Some(HwEnsemble::new(k)?),
            _ => None,
        };
        Ok(Self { k, ensemble, hw })
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<ComplexMatrix> {
        match self.ensemble {
            Ensemble::HaarProductPure => Ok(ComplexMatrix::outer(&haar_state(self.k, rng))),
            Ensemble::GmCubeEnsemble => {
                let a = gm::site_arity(self.k);
                let pat = rng::bits(rng) & ((1u64 << a) - 1);
                gm::site_state_from_pattern(self.k, pat)
            }
            Ensemble::HwPhaseEnsemble => {
                let ens = self.hw.as_ref().expect("built for this ensemble");
                let phases: Vec<usize> = (0..ens.gens.len()).map(|_| rng::below(rng, self.k)).collect();
                ens.state(&phases)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of E|tr[Aρ]|² over product states ρ = ⊗ρ_s from `ensemble`.
pub fn l2di_expectation(a: &FourierCoeffs, ensemble: Ensemble, samples: usize, seed: u64) -> Result<Estimate> {
    let sq = |z: Complex64| z.norm_sqr();
    monte_carlo(a, ensemble, samples, seed, sq)
}

/// Monte Carlo mean of `stat(tr[Aρ])` with per-chunk derived streams merged in order.
pub fn monte_carlo(
    a: &FourierCoeffs,
    ensemble: Ensemble,
    samples: usize,
    seed: u64,
    stat: impl Fn(Complex64) -> f64 + Sync,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let basis = SiteBasis::new(a.family(), a.k())?;
    let sampler = SiteSampler::new(a.k(), ensemble)?;
    let support = a.support();
    let n = a.n();
    let chunks = samples.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64)> {
            let mut r = rng::derived(seed, c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let traces = (0..n)
                    .map(|_| basis.site_traces(&sampler.sample(&mut r)?))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[Complex64]> = traces.iter().map(|t| t.as_slice()).collect();
                let x = stat(support.evaluate(&refs));
                s1 += x;
                s2 += x * x;
            }
            Ok((s1, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    let (s1, s2) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let m = samples as f64;
    let mean = s1 / m;
    let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(Estimate { mean, stderr: (var / m).sqrt(), samples })
}

/// Σ_α (K/(K²−1))^{|α|}|Â(α)|² with |α| the number of non-identity sites.
pub fn noise_stability_bound(a: &FourierCoeffs) -> Result<f64> {
    if a.family() != Family::Gm {
        return Err(Error::Input("noise stability bound is stated for GM coefficients".into()));
    }
    let k = a.k() as f64;
    Ok(weighted_l2(a, k / (k * k - 1.0)))
}

/// Exact E|tr[Aρ]|² for Haar-random pure product states: Σ_α (K+1)^{−|α|}|Â(α)|².
pub fn haar_product_second_moment(a: &FourierCoeffs) -> f64 {
    weighted_l2(a, 1.0 / (a.k() as f64 + 1.0))
}

/// Exact E|tr[Aρ]|² over the uniform GM cube ensemble: Σ_α c^{2|α|}|Â(α)|².
pub fn gm_cube_second_moment(a: &FourierCoeffs) -> Result<f64> {
    if a.family() != Family::Gm {
        return Err(Error::Input("cube ensemble moment needs GM coefficients".into()));
    }
    let c = gm::cube_scale(a.k());
    Ok(weighted_l2(a, c * c))
}

/// Σ_α w^{|α|}|Â(α)|².
pub fn weighted_l2(a: &FourierCoeffs, w: f64) -> f64 {
    a.values()
        .iter()
        .enumerate()
        .map(|(i, z)| w.powi(a.site_count(&a.labels_of(i)) as i32) * z.norm_sqr())
        .sum()
}

/// Entrywise Monte Carlo comparison of E_U[U†MaU ⊗ U†MbU] with the closed form.
#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    #[serde(rename = "K")]
    pub k: usize,
    pub a: String,
    pub b: String,
    pub samples: usize,
    pub max_abs_dev: f64,
    /// Largest |empirical − closed form| / stderr over real and imaginary parts.
    pub max_z: f64,
    pub passed: bool,
}

pub const MOMENT_Z_TOL: f64 = 5.0;

/// Returns the largest absolute deviation and the largest z-score.
pub fn moment_channel_mc(
    k: usize,
    ma: &ComplexMatrix,
    mb: &ComplexMatrix,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let closed = haar_moment_channel(k, ma, mb)?.output;
    let len = k * k * k * k;
    let chunks = samples.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(Vec<Complex64>, Vec<Complex64>)> {
            let mut r = rng::derived(seed, c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut s1 = vec![Complex64::new(0.0, 0.0); len];
            // Second moments of real and imaginary parts, packed as re/im.
            let mut s2 = vec![Complex64::new(0.0, 0.0); len];
            for _ in 0..count {
                let u = haar_unitary(k, &mut r);
                let ud = u.adjoint();
                let a = ud.matmul(ma)?.matmul(&u)?;
                let b = ud.matmul(mb)?.matmul(&u)?;
                let t = kron(&a, &b)?;
                for ((x1, x2), z) in s1.iter_mut().zip(s2.iter_mut()).zip(t.data()) {
                    *x1 += z;
                    *x2 += Complex64::new(z.re * z.re, z.im * z.im);
                }
            }
            Ok((s1, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s1 = vec![Complex64::new(0.0, 0.0); len];
    let mut s2 = vec![Complex64::new(0.0, 0.0); len];
    for (p1, p2) in &partial {
        for i in 0..len {
            s1[i] += p1[i];
            s2[i] += p2[i];
        }
    }
    let m = samples as f64;
    let (mut max_dev, mut max_z) = (0.0f64, 0.0f64);
    for i in 0..len {
        let mean = s1[i] / m;
        let want = closed.data()[i];
        for (mu, sq, w) in [(mean.re, s2[i].re, want.re), (mean.im, s2[i].im, want.im)] {
            let var = ((sq - m * mu * mu) / (m - 1.0)).max(0.0);
            let se = (var / m).sqrt();
            let dev = (mu - w).abs();
            max_dev = max_dev.max(dev);
            let z = if dev <= 1e-12 { 0.0 } else { dev / se.max(1e-300) };
            max_z = max_z.max(z);
        }
    }
    Ok((max_dev, max_z))
}

#[derive(Clone, Debug)]
pub struct NoiseConfig {
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub observables: usize,
    pub samples: usize,
    pub moment_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseRow {
    pub observable: usize,
    pub seed: u64,
    pub ensemble: Ensemble,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
    pub within_bound: bool,
    /// Exact second moment where the ensemble has a closed form.
    pub exact: Option<f64>,
    pub exact_z: Option<f64>,
    pub truncation_degree: usize,
    pub truncation_mean: f64,
    pub truncation_stderr: f64,
    pub truncation_bound: f64,
    pub truncation_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseReport {
    pub schema: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub observables: usize,
    pub samples: usize,
    pub seed: u64,
    pub moment_checks: Vec<MomentCheck>,
    pub max_exact_z: f64,
    pub passed: bool,
    pub rows: Vec<NoiseRow>,
}

/// Monte Carlo estimates are allowed this many standard errors above a bound.
pub const BOUND_SLACK_SE: f64 = 3.0;

/// Moment-channel checks on every pair of non-identity GM labels (a sample of pairs for
/// K > 3), then per random observable and ensemble: E|tr[Aρ]|² against the noise
/// stability bound and closed forms, and the truncation tail at degree d − 1.
pub fn noise_campaign(cfg: &NoiseConfig) -> Result<NoiseReport> {
    if cfg.k < 2 || cfg.n == 0 || cfg.d == 0 || cfg.d > cfg.n || cfg.observables == 0 {
        return Err(Error::Input("noise campaign needs K ≥ 2 and 1 ≤ d ≤ n".into()));
    }
    let k = cfg.k;
    let kk = k as f64;
    let labels: Vec<gm::GmLabel> = (1..k * k)
        .map(|i| gm::GmLabel::from_index(k, i))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for (i, a) in labels.iter().enumerate() {
        for (j, b) in labels.iter().enumerate() {
            if k <= 3 || i == j || j == (i + 1) % labels.len() {
                pairs.push((*a, *b));
            }
        }
    }
    let moment_checks = if cfg.moment_samples >= 2 {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let (ma, mb) = (gm::gm_matrix(k, a)?, gm::gm_matrix(k, b)?);
                let (dev, z) = moment_channel_mc(k, &ma, &mb, cfg.moment_samples, rng::mix(cfg.seed, 0x6d00 + i as u64))?;
                Ok(MomentCheck {
                    k,
                    a: a.to_string(),
                    b: b.to_string(),
                    samples: cfg.moment_samples,
                    max_abs_dev: dev,
                    max_z: z,
                    passed: z <= MOMENT_Z_TOL,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let basis = SiteBasis::gm(k)?;
    let t_deg = cfg.d - 1;
    let per_obs = (0..cfg.observables)
        .into_par_iter()
        .map(|o| -> Result<Vec<NoiseRow>> {
            let seed = rng::mix(cfg.seed, o as u64);
            let mut r = rng::seeded(seed);
            let a = crate::coeffs::random_observable(&basis, cfg.n, cfg.d, 1.0, &mut r)?;
            let bound = noise_stability_bound(&a)?;
            let tail = a.sub(&a.truncate(t_deg))?;
            let t_bound = (kk / (kk * kk - 1.0)).powi(t_deg as i32) * a.l2_sq();
            Ensemble::ALL
                .iter()
                .enumerate()
                .map(|(ei, &ens)| {
                    let est = l2di_expectation(&a, ens, cfg.samples, rng::mix(seed, 1 + ei as u64))?;
                    let tail_est = l2di_expectation(&tail, ens, cfg.samples, rng::mix(seed, 101 + ei as u64))?;
                    let exact = match ens {
                        Ensemble::HaarProductPure => Some(haar_product_second_moment(&a)),
                        Ensemble::GmCubeEnsemble => Some(gm_cube_second_moment(&a)?),
                        Ensemble::HwPhaseEnsemble => None,
                    };
                    let exact_z = exact.map(|x| {
                        let dev = (est.mean - x).abs();
                        if dev <= 1e-12 { 0.0 } else { dev / est.stderr.max(1e-300) }
                    });
                    Ok(NoiseRow {
                        observable: o,
                        seed,
                        ensemble: ens,
                        mean: est.mean,
                        stderr: est.stderr,
                        bound,
                        within_bound: est.mean <= bound + BOUND_SLACK_SE * est.stderr,
                        exact,
                        exact_z,
                        truncation_degree: t_deg,
                        truncation_mean: tail_est.mean,
                        truncation_stderr: tail_est.stderr,
                        truncation_bound: t_bound,
                        truncation_holds: tail_est.mean <= t_bound + BOUND_SLACK_SE * tail_est.stderr,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<NoiseRow> = per_obs.into_iter().flatten().collect();
    let max_exact_z = rows.iter().filter_map(|r| r.exact_z).fold(0.0, f64::max);
    let passed = moment_checks.iter().all(|m| m.passed)
        && rows.iter().all(|r| r.within_bound && r.truncation_holds)
        && max_exact_z <= MOMENT_Z_TOL;
    Ok(NoiseReport {
        schema: 1,
        k,
        n: cfg.n,
        d: cfg.d,
        observables: cfg.observables,
        samples: cfg.samples,
        seed: cfg.seed,
        moment_checks,
        max_exact_z,
        passed,
        rows,
    })
}
