//! Qudit operator Fourier analysis in the generalized Gell-Mann and Heisenberg–Weyl
//! bases: basis expansions, reductions of qudit observables to classical polynomials,
//! Bohnenblust–Hille ratio checks, and a simulator for learning low-degree observables
//! from product-state samples.

pub mod bh;
pub mod classical;
pub mod cli;
pub mod coeffs;
pub mod error;
pub mod gm;
pub mod hw;
pub mod identities;
pub mod learner;
pub mod noise;
pub mod rng;
pub mod tensor;

pub use coeffs::{Family, FourierCoeffs, SiteBasis};
pub use error::{Error, Result};
pub use tensor::ComplexMatrix;
