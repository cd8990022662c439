//! Exact Fedosov deformation quantization on flat charts and tori.
//!
//! The core is generic over an exact coefficient field ([`Field`]); the
//! aliases at the crate root fix it to [`Rational`].

pub mod chart;
pub mod fedosov;
pub mod field;
pub mod forms;
pub mod geometry;
pub mod scalar;
pub mod series;
pub mod trace;
pub mod transport;
pub mod weyl;

pub use chart::{Chart, ChartError, Mode};
pub use field::{Field, Rational};
pub use scalar::{Caps, Gen, Mono};
pub use weyl::{WKey, WeylContext};

pub type Scalar = scalar::Scalar<Rational>;
pub type ChartFunction = chart::ChartFunction<Rational>;
pub type DifferentialForm = forms::DifferentialForm<Rational>;
pub type FnSeries = series::NuSeries<ChartFunction>;
pub type ScalarSeries = series::NuSeries<Scalar>;
pub type VectorField = geometry::VectorField<Rational>;
pub type Connection = geometry::Connection<Rational>;
pub type DiffeoFamily = geometry::DiffeoFamily<Rational>;
pub type SymTensor3 = geometry::SymTensor3<Rational>;
pub type WeylElement = weyl::WeylElement<Rational>;
pub type FedosovSetup = fedosov::FedosovSetup<Rational>;
