//! Outer-product-kernel logistic regression with Wald inference.
//!
//! The log odds of a labeled pair `(u, v)` on topic `t` are
//! `β₀ + x_uᵀ W x_v + (x_u + x_v)ᵀ Q e_t`, where `x_u`, `x_v` are binary
//! feature vectors. The sd model drops the `Q` term.

pub mod design;
mod fit;
mod wald;

pub use design::{outer_kernel, topic_terms, Design, Layout, Row};
pub use fit::{fit, fit_design, fit_with, Coefficient, FitOptions, FitResult, Objective, Params};
pub use wald::{wald_p_value, Z_95};
