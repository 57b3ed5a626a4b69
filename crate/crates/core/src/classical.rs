//! Classical functions on {±1}^m and Ω_K^m with exact Fourier transforms.
//!
//! Cube points are integers u with x_b = (−1)^{bit b of u}; subsets are bit masks.
//! Cyclic points are integers Σ_v p_v K^v with z_v = ω^{p_v}; exponent vectors α
//! use the same encoding.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{shape, Error, Result};
use crate::hw::omega;

pub const MAX_CUBE_ARITY: usize = 24;
pub const MAX_TABLE: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alphabet {
    PlusMinusOne,
    OmegaK(usize),
}

impl Alphabet {
    pub fn size(self) -> usize {
        match self {
            Alphabet::PlusMinusOne => 2,
            Alphabet::OmegaK(k) => k,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassicalFn {
    arity: usize,
    alphabet: Alphabet,
    values: Vec<Complex64>,
}

fn table_len(arity: usize, alphabet: Alphabet) -> Result<usize> {
    if let Alphabet::OmegaK(k) = alphabet {
        if k < 2 {
            return Err(Error::Input(format!("cyclic alphabet of size {k}")));
        }
    }
    if alphabet == Alphabet::PlusMinusOne && arity > MAX_CUBE_ARITY {
        return Err(Error::Capacity(format!(
            "cube arity {arity} exceeds {MAX_CUBE_ARITY}"
        )));
    }
    match alphabet.size().checked_pow(arity as u32) {
        Some(n) if n <= MAX_TABLE => Ok(n),
        _ => Err(Error::Capacity(format!(
            "table of {}^{arity} points exceeds 2^24",
            alphabet.size()
        ))),
    }
}

impl ClassicalFn {
    pub fn new(arity: usize, alphabet: Alphabet, values: Vec<Complex64>) -> Result<Self> {
        let n = table_len(arity, alphabet)?;
        if values.len() != n {
            return shape(format!("{} values for a table of {n} points", values.len()));
        }
        Ok(Self { arity, alphabet, values })
    }

    /// Tabulates `f` at every point index.
    pub fn from_fn(arity: usize, alphabet: Alphabet, f: impl Fn(usize) -> Complex64 + Sync + Send) -> Result<Self> {
        let n = table_len(arity, alphabet)?;
        let values = (0..n).into_par_iter().map(f).collect();
        Ok(Self { arity, alphabet, values })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn mean_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub arity: usize,
    pub alphabet: Alphabet,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    /// Degree of the monomial at `index`: |A| on the cube, Σα_v on Ω_K^m.
    pub fn monomial_degree(&self, index: usize) -> usize {
        match self.alphabet {
            Alphabet::PlusMinusOne => index.count_ones() as usize,
            Alphabet::OmegaK(k) => {
                let mut rem = index;
                let mut d = 0;
                for _ in 0..self.arity {
                    d += rem % k;
                    rem /= k;
                }
                d
            }
        }
    }

    /// Exponent vector of a cyclic monomial (or 0/1 membership for the cube).
    pub fn exponents(&self, index: usize) -> Vec<usize> {
        let q = self.alphabet.size();
        let mut rem = index;
        (0..self.arity)
            .map(|_| {
                let e = rem % q;
                rem /= q;
                e
            })
            .collect()
    }

    /// Largest monomial degree among coefficients above `tol`.
    pub fn degree(&self, tol: f64) -> usize {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > tol)
            .map(|(i, _)| self.monomial_degree(i))
            .max()
            .unwrap_or(0)
    }

    pub fn l2_sq(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// f̂(A) = 2^{−m} Σ_x f(x) χ_A(x) by the fast Walsh–Hadamard transform.
pub fn cube_fourier(f: &ClassicalFn) -> Result<Spectrum> {
    cube_fourier_owned(f.clone())
}

pub fn cube_fourier_owned(f: ClassicalFn) -> Result<Spectrum> {
    if f.alphabet != Alphabet::PlusMinusOne {
        return Err(Error::Input("cube transform needs a ±1 alphabet".into()));
    }
    let m = f.arity;
    let mut data = f.values;
    for b in 0..m {
        let h = 1usize << b;
        data.par_chunks_mut(2 * h).for_each(|chunk| {
            let (lo, hi) = chunk.split_at_mut(h);
            for (a, c) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *c);
                *a = x + y;
                *c = x - y;
            }
        });
    }
    let scale = 1.0 / (1u64 << m) as f64;
    data.par_iter_mut().for_each(|z| *z *= scale);
    Ok(Spectrum { arity: m, alphabet: Alphabet::PlusMinusOne, coeffs: data })
}

/// f̂(α) = K^{−m} Σ_z f(z) z^{−α}, one axis at a time.
pub fn cyclic_fourier(f: &ClassicalFn) -> Result<Spectrum> {
    cyclic_fourier_owned(f.clone())
}

pub fn cyclic_fourier_owned(f: ClassicalFn) -> Result<Spectrum> {
    let k = match f.alphabet {
        Alphabet::OmegaK(k) => k,
        Alphabet::PlusMinusOne => return Err(Error::Input("cyclic transform needs Ω_K".into())),
    };
    let m = f.arity;
    let mut data = f.values;
    let tw: Vec<Complex64> = (0..k * k)
        .map(|i| omega(k, -((i / k * (i % k)) as i64)))
        .collect();
    let mut stride = 1usize;
    for _ in 0..m {
        let s = stride;
        let tw = &tw;
        data.par_chunks_mut(k * s).for_each(|chunk| {
            let mut line = vec![Complex64::new(0.0, 0.0); k];
            for off in 0..s {
                for q in 0..k {
                    line[q] = chunk[off + q * s];
                }
                match k {
                    2 => {
                        chunk[off] = line[0] + line[1];
                        chunk[off + s] = line[0] - line[1];
                    }
                    4 => {
                        let a = line[0] + line[2];
                        let b = line[0] - line[2];
                        let c = line[1] + line[3];
                        let d = line[1] - line[3];
                        let d_rot = Complex64::new(d.im, -d.re);
                        chunk[off] = a + c;
                        chunk[off + s] = b + d_rot;
                        chunk[off + 2 * s] = a - c;
                        chunk[off + 3 * s] = b - d_rot;
                    }
                    _ => {
                        for alpha in 0..k {
                            let row = &tw[alpha * k..(alpha + 1) * k];
                            chunk[off + alpha * s] = row.iter().zip(&line).map(|(w, x)| w * x).sum();
                        }
                    }
                }
            }
        });
        stride *= k;
    }
    let scale = 1.0 / data.len() as f64;
    data.par_iter_mut().for_each(|z| *z *= scale);
    Ok(Spectrum { arity: m, alphabet: Alphabet::OmegaK(k), coeffs: data })
}

/// (Σ|c|^p)^{1/p}.
pub fn lp_norm<'a>(values: impl IntoIterator<Item = &'a Complex64>, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Input(format!("norm exponent {p} must be positive")));
    }
    let s: f64 = values.into_iter().map(|z| z.norm().powf(p)).sum();
    Ok(s.powf(1.0 / p))
}
