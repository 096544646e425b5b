//! Arbitrary-order discrete div-div complexes on polygonal meshes.
//!
//! This crate implements two discrete counterparts of the two-dimensional
//! complex
//!
//! ```text
//!            sym curl           div div
//!   RT1 --> H1(R2) ----> H(S; divdiv) ----> L2 --> 0
//! ```
//!
//! on general polygonal meshes and at polynomial degree `k >= 3`:
//!
//! * the *full* complex, built from vertex jets, edge polynomials and
//!   element polynomials ([`ddr`]), and
//! * a *serendipity* variant ([`serendipity`]) that shrinks the element
//!   component of both spaces using boundary data, without changing any of
//!   the homological or approximation properties.
//!
//! The supporting layers are a polygonal mesh with orientation data
//! ([`mesh`]) and an exact polynomial calculus on elements and edges
//! ([`poly`]): scaled monomial bases, quadrature, differential operators,
//! and the tensor-valued polynomial subspaces entering the construction.
//!
//! [`verify`] bundles the checks that certify the implementation: algebraic
//! identities down to machine precision, cohomology ranks, degree-of-freedom
//! counts, stability constants and consistency error rates. The `divdiv`
//! binary in this workspace exposes those suites on the command line.

pub mod ddr;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod poly;
pub mod serendipity;
pub mod verify;

pub use mesh::Mesh;
