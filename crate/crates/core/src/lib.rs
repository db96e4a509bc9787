//! Bayesian experimental design under the expected Fisher information gain
//! utility for exponential-family models.
//!
//! For these models the utility of an `n`-run design is `c · Σ_i φ(d_i)`,
//! so optimal designs are built from the maxima of the single-run
//! objective `φ` over the design box. When `φ` has fewer maxima than the
//! model has parameters, every optimal design is under-supported and the
//! model is parameter redundant; [`diagnosis`] detects this.
//!
//! ```
//! use figdesign::model::{DesignSpace, ModelSpec, RegressionSpec, ScaleSpec};
//! use figdesign::optimizer::{multistart, OptimizerConfig};
//! use figdesign::phi::PhiEvaluator;
//! use figdesign::prior::{PriorComponent, PriorSpec};
//!
//! let model = ModelSpec::normal_linear(
//!     RegressionSpec::rsm2(),
//!     ScaleSpec::NuisanceIg { s1: 2.0, s2: 2.0 },
//! ).unwrap();
//! let prior = PriorSpec::new(vec![PriorComponent::Normal { mean: 0.0, var: 1.0 }; 6]).unwrap();
//! let phi = PhiEvaluator::closed_form(model, prior).unwrap();
//! let space = DesignSpace::symmetric_unit(2).unwrap();
//! let cfg = OptimizerConfig { starts: 40, ..OptimizerConfig::default() };
//! let report = multistart(&phi, &space, &cfg).unwrap();
//! assert_eq!(report.q, 4);
//! ```

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnosis;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod par;
pub mod phi;
pub mod prior;

pub use error::{FigError, Result};
