//! Worked examples checked against literal values or an independent computation.

use num_complex::Complex64;
use qudit_bh::bh::{bh_ratio, verify_reduction};
use qudit_bh::classical::{cyclic_fourier, Alphabet, ClassicalFn};
use qudit_bh::coeffs::{random_observable, Family, FourierCoeffs, SiteBasis};
use qudit_bh::gm::{self, CubePoint, GmLabel};
use qudit_bh::hw::{self, generator_set, hw_eigensystem, HwEnsemble, HwLabel, SpectrumClass};
use qudit_bh::learner::{self, EiParams, LearningConfig};
use qudit_bh::noise::{self, haar_moment_channel, swap_operator};
use qudit_bh::rng;
use qudit_bh::tensor::{kron, op_norm, trace_product, ComplexMatrix};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn matrix(k: usize, rows: &[&[Complex64]]) -> ComplexMatrix {
    ComplexMatrix::new(k, k, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
}

#[test]
fn k3_diag2_literal() {
    let m = gm::gm_matrix(3, GmLabel::Diag(2)).unwrap();
    let g = (3.0f64 / 6.0).sqrt();
    let want = ComplexMatrix::from_diag(&[c(g, 0.0), c(g, 0.0), c(-2.0 * g, 0.0)]);
    assert!(m.max_abs_diff(&want) < 1e-15);
    let m = gm::gm_matrix(3, GmLabel::Antisym(1, 3)).unwrap();
    let s = (1.5f64).sqrt();
    let z = c(0.0, 0.0);
    let want = matrix(3, &[&[z, z, c(0.0, -s)], &[z, z, z], &[c(0.0, s), z, z]]);
    assert!(m.max_abs_diff(&want) < 1e-15);
}

#[test]
fn k2_all_plus_state_has_one_third_traces() {
    let rho = gm::lemma_action_state(2, &[1], &[1], &[1]).unwrap();
    assert!((rho.trace().unwrap() - 1.0).norm() < 1e-15);
    for a in 1..4 {
        let m = gm::gm_matrix(2, GmLabel::from_index(2, a).unwrap()).unwrap();
        assert!((trace_product(&m, &rho).unwrap() - 1.0 / 3.0).norm() < 1e-15);
    }
}

#[test]
fn k3_diag_traces() {
    let want = (1.0 / 9.0) * (1.5f64).sqrt();
    for z in [[1i8, 1], [1, -1], [-1, 1], [-1, -1]] {
        let rho = gm::lemma_action_state(3, &[1, -1, 1], &[-1, -1, 1], &z).unwrap();
        for m in 1..=2 {
            let cm = gm::gm_matrix(3, GmLabel::Diag(m)).unwrap();
            let got = trace_product(&cm, &rho).unwrap();
            assert!((got - want * z[m - 1] as f64).norm() < 1e-14);
        }
    }
}

#[test]
fn sigma1_reduction_is_x_over_three() {
    let a = FourierCoeffs::single(Family::Gm, 2, &[1], c(1.0, 0.0)).unwrap();
    for bits in [[1i8, 1, 1], [-1, 1, -1], [1, -1, 1], [-1, -1, -1]] {
        let p = CubePoint::new(2, 1, bits.to_vec()).unwrap();
        let f = gm::gm_reduction_fn(&a, &p).unwrap();
        assert!((f - bits[0] as f64 / 3.0).norm() < 1e-15);
    }
}

#[test]
fn identity_expands_to_single_coefficient() {
    for (k, n) in [(2, 3), (3, 2)] {
        let id = ComplexMatrix::identity(k_pow(k, n));
        let coeffs = gm::gm_expand(&id, k, n).unwrap();
        assert!((coeffs.values()[0] - 1.0).norm() < 1e-14);
        assert!(coeffs.values()[1..].iter().all(|z| z.norm() < 1e-14));
        assert_eq!(coeffs.site_degree(), 0);
    }
}

fn k_pow(k: usize, n: usize) -> usize {
    k.pow(n as u32)
}

#[test]
fn k2_lemma_state_has_degree_one() {
    let rho = gm::lemma_action_state(2, &[1], &[-1], &[1]).unwrap();
    let coeffs = gm::gm_expand(&rho, 2, 1).unwrap();
    assert_eq!(coeffs.site_degree(), 1);
}

#[test]
fn hw_power_law_and_commutation_examples() {
    let xz = hw::hw_matrix(3, HwLabel::new(1, 1)).unwrap();
    let x2z2 = hw::hw_matrix(3, HwLabel::new(2, 2)).unwrap();
    let lhs = xz.matmul(&xz).unwrap();
    assert!(lhs.max_abs_diff(&x2z2.scale(hw::omega(3, 1))) < 1e-15);

    let (x, z) = hw::clock_shift(3).unwrap();
    let zx = z.matmul(&x).unwrap();
    let w = c(-0.5, 3f64.sqrt() / 2.0);
    assert!(zx.max_abs_diff(&x.matmul(&z).unwrap().scale(w)) < 1e-15);

    let mut worst = 0.0f64;
    let mut count = 0;
    for l1 in 0..4 {
        for m1 in 0..4 {
            for l2 in 0..4 {
                for m2 in 0..4 {
                    let a = hw::hw_matrix(4, HwLabel::new(l1, m1)).unwrap();
                    let b = hw::hw_matrix(4, HwLabel::new(l2, m2)).unwrap();
                    let phase = Complex64::from_polar(
                        1.0,
                        2.0 * std::f64::consts::PI * (l2 as f64 * m1 as f64 - l1 as f64 * m2 as f64) / 4.0,
                    );
                    let d = a.matmul(&b).unwrap().max_abs_diff(&b.matmul(&a).unwrap().scale(phase));
                    worst = worst.max(d);
                    count += 1;
                }
            }
        }
    }
    assert_eq!(count, 256);
    assert!(worst < 1e-14, "{worst}");
}

#[test]
fn hw_expansion_examples() {
    let x = hw::hw_matrix(3, HwLabel::new(1, 0)).unwrap();
    let z = hw::hw_matrix(3, HwLabel::new(0, 1)).unwrap();
    let a = kron(&x, &z).unwrap();
    let coeffs = hw::hw_expand(&a, 3, 2).unwrap();
    let idx = coeffs.flat_index(&[3, 1]).unwrap();
    for (i, v) in coeffs.values().iter().enumerate() {
        let want = if i == idx { 1.0 } else { 0.0 };
        assert!((v - want).norm() < 1e-14);
    }
    assert_eq!(coeffs.degree(), 2);
    let x2z2 = FourierCoeffs::single(Family::Hw, 3, &[HwLabel::new(2, 2).index(3)], c(1.0, 0.0)).unwrap();
    assert_eq!(x2z2.degree(), 4);
}

#[test]
fn generator_sets() {
    let g3 = generator_set(3).unwrap();
    let want: Vec<HwLabel> = [(1, 0), (1, 1), (1, 2), (0, 1)].iter().map(|&(l, m)| HwLabel::new(l, m)).collect();
    assert_eq!(g3.members, want);
    assert!(g3.classification.iter().all(|&c| c == SpectrumClass::Plus));

    // Enumerating gcd*(ℓ,m) = 1 over Z_4 × Z_4 gives 12 pairs.
    let mut count = 0;
    for l in 0..4usize {
        for m in 0..4usize {
            let lift = |x: usize| if x == 0 { 4 } else { x };
            let (mut a, mut b) = (lift(l), lift(m));
            while b != 0 {
                let t = a % b;
                a = b;
                b = t;
            }
            if a == 1 {
                count += 1;
            }
        }
    }
    assert_eq!(count, 11);
    assert_eq!(generator_set(4).unwrap().len(), 11);

    assert_eq!(hw::gcd_star(6, 0, 2), 2);
    let inter: Vec<HwLabel> = hw::subgroup(6, HwLabel::new(1, 0))
        .intersection(&hw::subgroup(6, HwLabel::new(2, 3)))
        .copied()
        .collect();
    assert_eq!(inter, vec![HwLabel::new(0, 0), HwLabel::new(2, 0), HwLabel::new(4, 0)]);
}

#[test]
fn eigen_examples() {
    // (1,0) at K=3: discrete Fourier vectors.
    let sys = hw_eigensystem(3, HwLabel::new(1, 0)).unwrap();
    let x = hw::hw_matrix(3, HwLabel::new(1, 0)).unwrap();
    for t in 0..3 {
        let v = hw::zeta_vector(3, HwLabel::new(1, 0), t).unwrap();
        let xv = x.matvec(&v).unwrap();
        for (a, b) in xv.iter().zip(&v) {
            assert!((a - hw::omega(3, t as i64) * b).norm() < 1e-14);
        }
    }
    assert!(sys.max_residual() < 1e-12);

    // K=4, (1,1): spectrum ω^{1/2}Ω_4.
    let sys = hw_eigensystem(4, HwLabel::new(1, 1)).unwrap();
    assert_eq!(sys.class, SpectrumClass::Minus);
    let mut e = sys.exponents_2k.clone();
    e.sort_unstable();
    assert_eq!(e, vec![1, 3, 5, 7]);
    let w = hw::hw_matrix(4, HwLabel::new(1, 1)).unwrap();
    for col in 0..4 {
        let v = sys.eigenvectors.column(col);
        let lam = Complex64::from_polar(1.0, std::f64::consts::PI * sys.exponents_2k[col] as f64 / 4.0);
        let r: f64 = w.matvec(&v).unwrap().iter().zip(&v).map(|(a, b)| (a - lam * b).norm_sqr()).sum();
        assert!(r.sqrt() < 1e-12);
    }

    // K=4, (2,1): d = 2, K₁ = 2, eigenvalue ω^{1+2t+s}.
    let sys = hw_eigensystem(4, HwLabel::new(2, 1)).unwrap();
    assert_eq!(sys.class, SpectrumClass::Plus);
    let mut col = 0;
    for s in 0..2 {
        for t in 0..2 {
            assert_eq!(sys.exponents_2k[col], (2 * (1 + 2 * t + s)) % 8);
            col += 1;
        }
    }

    assert!(matches!(
        hw_eigensystem(4, HwLabel::new(2, 2)),
        Err(qudit_bh::Error::Precondition(_))
    ));
}

/// f_A over every phase grid of one site, by direct evaluation.
fn hw_table(a: &FourierCoeffs) -> Vec<Complex64> {
    let ens = HwEnsemble::new(a.k()).unwrap();
    let g = ens.gens.len();
    let k = a.k();
    (0..k.pow(g as u32))
        .map(|u| {
            let ph: Vec<usize> = (0..g).map(|v| (u / k.pow(v as u32)) % k).collect();
            hw::hw_reduction_fn(a, &ens, &[ph]).unwrap()
        })
        .collect()
}

#[test]
fn k3_xz_reduces_to_one_monomial() {
    for (label, var) in [(HwLabel::new(1, 1), 1usize), (HwLabel::new(1, 0), 0)] {
        let a = FourierCoeffs::single(Family::Hw, 3, &[label.index(3)], c(1.0, 0.0)).unwrap();
        let f = ClassicalFn::new(4, Alphabet::OmegaK(3), hw_table(&a)).unwrap();
        let s = cyclic_fourier(&f).unwrap();
        let target = 3usize.pow(var as u32);
        for (i, z) in s.coeffs.iter().enumerate() {
            if i == target {
                assert!((z.norm() - 0.25).abs() < 1e-12, "{label}: {z}");
                assert_eq!(s.monomial_degree(i), 1);
            } else {
                assert!(z.norm() < 1e-12, "{label}: stray coefficient {z} at {i}");
            }
        }
        let sup = f.sup_norm();
        assert!(sup <= 1.0 + 1e-9);
    }
}

#[test]
fn k4_x2z2_moduli_and_degree() {
    let a = FourierCoeffs::single(Family::Hw, 4, &[HwLabel::new(2, 2).index(4)], c(1.0, 0.0)).unwrap();
    let rep = verify_reduction(&a).unwrap();
    assert!(rep.passed);
    assert!(rep.classical_degree <= 3 * 4);
    for row in &rep.rows {
        assert!((row.observed_modulus_ratio - 1.0 / 11.0).abs() < 1e-10, "{row:?}");
    }
}

#[test]
fn bh_ratio_of_single_elements() {
    let a = FourierCoeffs::single(Family::Gm, 2, &[1], c(1.0, 0.0)).unwrap();
    assert!((bh_ratio(&a).unwrap().ratio - 1.0).abs() < 1e-12);
    let idx = GmLabel::Diag(2).index(3).unwrap();
    let a = FourierCoeffs::single(Family::Gm, 3, &[idx], c(1.0, 0.0)).unwrap();
    // ‖Diag(2)‖_op = 2Γ₂ = √2 at K = 3.
    assert!((bh_ratio(&a).unwrap().ratio - 1.0 / 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn sample_count_matches_direct_arithmetic() {
    let mut cfg = LearningConfig::new(2, 2, 1, 0.1, 0.1, 0);
    cfg.bh_constant = 1.0;
    let direct = 6f64.exp() * 144f64.powi(2) * (2.0 * std::f64::consts::E * 2.0 / 0.1).ln() / 0.01;
    let got = learner::sample_count(&cfg).unwrap();
    assert_eq!(got, direct.ceil() as u128);

    let base = learner::sample_count(&cfg).unwrap();
    let mut half = cfg.clone();
    half.epsilon = 0.05;
    assert!(learner::sample_count(&half).unwrap() > base);
    let (mut n10, mut n100) = (cfg.clone(), cfg.clone());
    n10.n = 10;
    n100.n = 100;
    assert!(learner::sample_count(&n100).unwrap() > learner::sample_count(&n10).unwrap());
}

#[test]
fn ei_examples() {
    let p = EiParams { d: 1, eta: 0.1, b: 1.0 };
    assert!((p.error_bound() - (5f64.exp() * 0.01).sqrt()).abs() < 1e-15);
    assert!((p.error_bound() - 1.2182).abs() < 1e-4);
    let v = vec![c(0.5, 0.0), c(-0.4, 0.1)];
    let out = learner::ei_threshold(&v, &EiParams { d: 2, eta: 0.05, b: 1.0 });
    assert_eq!(out, v);
}

#[test]
fn moment_channel_examples() {
    let s1 = gm::gm_matrix(2, GmLabel::Sym(1, 2)).unwrap();
    let s2 = gm::gm_matrix(2, GmLabel::Antisym(1, 2)).unwrap();
    let f = swap_operator(2);
    assert!((trace_product(&f, &kron(&s1, &s1).unwrap()).unwrap() - 2.0).norm() < 1e-15);
    let out = haar_moment_channel(2, &s1, &s1).unwrap().output;
    let want = f.sub(&ComplexMatrix::identity(4).scale(c(0.5, 0.0))).unwrap().scale(c(2.0 / 3.0, 0.0));
    assert!(out.max_abs_diff(&want) < 1e-15);
    assert!(haar_moment_channel(2, &s1, &s2).unwrap().output.max_abs() < 1e-15);
    let id = ComplexMatrix::identity(2);
    assert!(matches!(
        haar_moment_channel(2, &id, &s1),
        Err(qudit_bh::Error::Contract(_))
    ));
}

#[test]
fn haar_pure_single_site_second_moment() {
    for k in [2usize, 3] {
        let a = FourierCoeffs::single(Family::Gm, k, &[1], c(1.0, 0.0)).unwrap();
        let exact = noise::haar_product_second_moment(&a);
        assert!((exact - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        let est = noise::l2di_expectation(&a, noise::Ensemble::HaarProductPure, 20_000, 5).unwrap();
        assert!((est.mean - exact).abs() < 5.0 * est.stderr, "{est:?}");
    }
}

#[test]
fn truncation_examples() {
    let basis = SiteBasis::gm(2).unwrap();
    let a = random_observable(&basis, 3, 3, 1.0, &mut rng::seeded(4)).unwrap();
    assert_eq!(a.truncate(3).values(), a.values());
    assert_eq!(a.truncate(7).values(), a.values());
    let t0 = a.truncate(0);
    assert_eq!(t0.values()[0], a.values()[0]);
    assert!(t0.values()[1..].iter().all(|z| z.norm() == 0.0));
    let low = a.truncate(1);
    let high = a.sub(&low).unwrap();
    assert!((a.l2_sq() - low.l2_sq() - high.l2_sq()).abs() < 1e-14);
}

#[test]
fn exhaustive_average_is_exact() {
    for (k, n, d) in [(2usize, 2usize, 2usize), (3, 2, 2), (2, 3, 1)] {
        let basis = SiteBasis::gm(k).unwrap();
        let a = random_observable(&basis, n, d, 1.0, &mut rng::seeded(11)).unwrap();
        let w = learner::exhaustive_coefficients(&a, d).unwrap();
        assert!(w.max_abs_diff(&a).unwrap() < 1e-12, "K={k} n={n}");
    }
}

fn weight(a: &FourierCoeffs, p: &CubePoint, alpha: &[usize], cs: f64) -> f64 {
    let mut w = gm::gm_reduction_fn(a, p).unwrap().re;
    for (s, &lab) in alpha.iter().enumerate() {
        if lab != 0 {
            w *= p.bits()[gm::cube_coordinate(a.k(), s, lab)] as f64 / cs;
        }
    }
    w
}

/// Single-sample estimates W₁(α) = c^{−|α|} f(x) χ_α(x), evaluated through the
/// definitional reduction, average to Â(α).
#[test]
fn single_sample_estimator_is_unbiased() {
    let k = 2;
    let n = 2;
    let a = random_observable(&SiteBasis::gm(k).unwrap(), n, 2, 1.0, &mut rng::seeded(21)).unwrap();
    let cs = gm::cube_scale(k);
    let probes: Vec<Vec<usize>> = vec![vec![1, 0], vec![0, 3], vec![2, 1]];
    // Exact cube average first.
    for alpha in &probes {
        let mut acc = 0.0;
        for u in 0..64u64 {
            let p = CubePoint::from_patterns(k, &[u & 7, u >> 3]);
            acc += weight(&a, &p, alpha, cs);
        }
        assert!((acc / 64.0 - a.get(alpha).unwrap().re).abs() < 1e-10);
    }
    let mut r = rng::seeded(2026);
    let draws = 10_000;
    let mut sums = vec![(0.0f64, 0.0f64); probes.len()];
    for _ in 0..draws {
        let pats: Vec<u64> = (0..n).map(|_| rng::bits(&mut r) & 0b111).collect();
        let p = CubePoint::from_patterns(k, &pats);
        for (slot, alpha) in sums.iter_mut().zip(&probes) {
            let w = weight(&a, &p, alpha, cs);
            slot.0 += w;
            slot.1 += w * w;
        }
    }
    for ((s1, s2), alpha) in sums.iter().zip(&probes) {
        let m = draws as f64;
        let mean = s1 / m;
        let se = ((s2 / m - mean * mean) / (m - 1.0)).sqrt();
        let want = a.get(alpha).unwrap().re;
        assert!((mean - want).abs() <= 3.0 * se, "α={alpha:?} mean {mean} want {want} se {se}");
    }
}

#[test]
fn learning_half_sigma1() {
    let a = FourierCoeffs::single(Family::Gm, 2, &[1, 0], c(0.5, 0.0)).unwrap();
    assert!((op_norm(&a.reconstruct().unwrap()).unwrap() - 0.5).abs() < 1e-12);
    let mut ok = 0;
    for rep in 0..50 {
        let cfg = LearningConfig::new(2, 2, 1, 0.1, 0.1, rng::mix(7, rep));
        let report = learner::learn_low_degree(&a, &cfg).unwrap();
        assert!(report.capped);
        if report.l2_sq_error <= 0.1 {
            ok += 1;
        }
    }
    assert!(ok >= 45, "{ok}/50");
}

#[test]
fn zero_target_learns_zero() {
    let a = FourierCoeffs::zeros(Family::Gm, 3, 2).unwrap();
    for s in [1u64, 7, 100] {
        let mut cfg = LearningConfig::new(3, 2, 2, 0.1, 0.1, s);
        cfg.samples = Some(s);
        let rep = learner::learn_low_degree(&a, &cfg).unwrap();
        assert_eq!(rep.l2_sq_error, 0.0);
    }
}
