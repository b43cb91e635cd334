//! Dense matrices, reverse-mode gradients, Adam, seeded randomness and
//! finite-difference gradient checking.

mod adam;
mod grad_check;
mod matrix;
mod rng;
mod tape;

pub use adam::{adam_step, AdamState};
pub use grad_check::grad_check;
pub use matrix::{dot, sigmoid, Matrix};
pub use rng::SeededRng;
pub use tape::{ContrastiveSpec, Gradients, Tape, Var};
