//! Exact, training-free neural networks for piecewise-affine functions.
//!
//! A continuous PWA function on a polytopic partition (for example an explicit
//! MPC law) is compiled into a network whose weights are read directly off the
//! region inequalities and affine maps:
//!
//! 1. binary-step neurons test every inequality,
//! 2. ReLU neurons turn each region's block of tests into an indicator,
//! 3. a lower-triangular ReLU layer keeps only the first active region,
//! 4. big-M gated ReLU pairs evaluate the selected affine map (with the input
//!    fed forward by a skip connection),
//! 5. a linear layer recombines the signed pairs.
//!
//! The `YannL` variant replaces 4–5 with an affine bank, an elementwise gate
//! and a summing layer, trading speed for precision.

pub mod bench;
pub mod bigm;
pub mod compiler;
pub mod error;
pub mod generate;
pub mod inference;
pub mod lp;
pub mod matrix;
pub mod pwa;
pub mod sim;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use pwa::{evaluate_naive, BoxDomain, EvalResult, Halfspace, PwaFunction, Region};
