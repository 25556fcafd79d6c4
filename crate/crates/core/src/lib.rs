//! Pooled extreme-value modelling of elite swim times.
//!
//! Best times per swimmer and event are treated as a marked point process
//! above a high threshold. Events are linked through smooth functions of the
//! threshold so that a handful of parameters describe all of them at once,
//! and the fitted process drives rankings across events, limits on
//! attainable times, record forecasts and suit-era adjustments.
//!
//! The distribution, quadrature and spline layers are generic over the
//! floating-point type; model fitting and the derived analytics work in
//! `f64`. Concrete aliases for the generic types are exported at the root.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bootstrap;
pub mod data;
pub mod error;
pub mod evt;
pub mod model;
pub mod optim;
pub mod quad;
pub mod splines;
pub mod synth;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

pub use error::{Error, Result};

/// Floating-point types usable by the generic layers.
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}

pub type GevParams = evt::GevParams<f64>;
pub type GpdParams = evt::GpdParams<f64>;
pub type PointObs = evt::PointObs<f64>;
pub type SplineBasis = splines::SplineBasis<f64>;
pub type PenaltyMatrix = splines::PenaltyMatrix<f64>;
