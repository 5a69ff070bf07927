//! Cyclic representations of the quantum torus at an odd root of unity `q`,
//! the operators built from them, and numerical checks of their relations.

pub mod cyclotomic;
pub mod error;
pub mod groupoid;
pub mod operators;
pub mod qdilog;
pub mod report;
pub mod reps;
pub mod tensorlinalg;
pub mod weights;

pub use cyclotomic::{RootContext, C64};
pub use error::{QtError, Result};
pub use tensorlinalg::TensorOperator;
pub use weights::Weight;
