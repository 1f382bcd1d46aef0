//! Stability certification: Routh tables and Hurwitz tests, symbolic
//! stability-region polynomials, and common quadratic Lyapunov matrices.

mod lmi;
mod poly;
mod routh;
mod stability;

pub use lmi::{
    find_common_lyapunov, verify_lmi, CertVerdict, LmiMargins, LmiSearchOptions, StabilityCertificate, FEASIBILITY_TOL,
};
pub use poly::{MultiPoly, COEFF_CLEANUP};
pub use routh::{check_hurwitz, hurwitz_verdict, routh_table, HurwitzVerdict, RouthTable};
pub use stability::{stability_polynomials, symbolic_char_poly, StabilityPolynomials, MAX_SYMBOLIC_N};
