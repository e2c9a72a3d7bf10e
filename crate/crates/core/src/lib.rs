//! Numerical toolkit for linear symplectic differential systems
//! `v' = A(t)v + B(t)α`, `α' = C(t)v − A*(t)α` on a compact interval,
//! with Lagrangian initial conditions.
//!
//! The crate integrates fundamental matrices, detects and classifies
//! focal instants, computes Maslov and focal indices, discretizes the
//! associated index form with piecewise-linear finite elements, and
//! verifies the index identity `n₋(I|K) = n₋(B(a)⁻¹|P) + i_maslov`
//! together with its variable-endpoint and opposite-system variants.

pub mod forms;
pub mod interp;
pub mod lagrangian;
pub mod indexform;
pub mod maslov;
pub mod reduced;
pub mod system;

pub use forms::{Inertia, Subspace, SymBilinearForm};
pub use lagrangian::{LagrangianFrame, LagrangianPath, PSPair};
pub use indexform::{DiscreteIndexForm, Distribution, EndpointData, Mesh, Variant, Verdict, VerifyReport};
pub use maslov::{FocalInstant, MaslovReport};
pub use system::{CoefficientField, FundamentalMatrix, Isomorphism, SymplecticProblem};
