//! Meta-analysis under the common-effect, random-effects and fixed-effects
//! models.
//!
//! The fixed-effects side includes an MSE-optimal estimator of the
//! unweighted average effect. Its weights come from a closed form when the
//! positivity condition holds and from a certified simplex-constrained
//! quadratic program otherwise (see [`weights`]).
//!
//! ```
//! use metafx_core::{estimators, Dataset, EffectScale, Study};
//!
//! let data = Dataset::new(
//!     vec![Study::new("A", 1.0, 1.0), Study::new("B", 3.0, 1.0)],
//!     EffectScale::Identity,
//! )
//! .unwrap();
//! let pooled = estimators::common_effect(&data, 0.95).unwrap();
//! assert_eq!(pooled.estimate, 2.0);
//! assert_eq!(pooled.variance, 0.5);
//! ```

pub mod error;
pub mod estimators;
pub mod model;
pub mod simulation;
pub mod stats;
pub mod weights;

pub use error::{MetaError, Result};
pub use estimators::Tau2Method;
pub use model::{
    ci_from_bounds, heterogeneity, validate, Dataset, EffectScale, HeterogeneityStats, Model,
    PooledResult, Study,
};
pub use weights::{Provenance, WeightProblem, WeightSolution};
