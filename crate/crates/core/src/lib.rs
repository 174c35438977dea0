//! Gradient-free training of restricted Bayesian neural networks.
//!
//! A restricted BNN ties every incoming weight of a neuron to one Gaussian
//! `N(mu_k, sigma^2)`, so the trained state is a single mean per non-input
//! neuron plus a shared deviation. The means are tuned with the
//! cross-entropy method: sample whole weight sets, score them on the
//! training data, refit the means to the elite.
//!
//! The crate also carries the two comparison baselines (a backprop network
//! in [`ffnn`] and a mean-field variational BNN in [`bnn`]), the shared
//! network core in [`network`], and CSV preprocessing in [`data`].
//!
//! ```no_run
//! use rbnn::cem::CemConfig;
//! use rbnn::data::{fixtures, preprocess, split};
//! use rbnn::network::{Activation, Topology};
//! use rbnn::rbnn::{train, RbnnConfig};
//! use rbnn::Classifier;
//!
//! let data = preprocess(&fixtures::iris_raw(), &fixtures::iris_schema(), None)?;
//! let (train_set, test_set) = split(&data, 0.2, 7)?;
//! let topo = Topology::uniform(vec![4, 8, 3], Activation::Tanh, Activation::Softmax)?;
//! let report = train(&RbnnConfig::new(CemConfig::new(100)), &topo, &train_set, Some(&test_set))?;
//! println!("test accuracy {}", report.model.accuracy_on(&test_set)?);
//! # Ok::<(), rbnn::Error>(())
//! ```

pub mod bnn;
pub mod cem;
pub mod data;
pub mod error;
pub mod ffnn;
pub mod matrix;
pub mod network;
pub mod rbnn;
pub mod report;
pub mod rng;

pub use crate::cem::{CemConfig, Direction, Scored, ScoredCandidate, Weighting};
pub use crate::data::{DataSchema, Dataset};
pub use crate::error::{Error, Result};
pub use crate::matrix::Matrix;
pub use crate::network::{param_count, Activation, LossKind, ModelKind, Topology, WeightSet};
pub use crate::rbnn::{ColumnGaussians, InferenceMode, RbnnConfig, RbnnModel};
pub use crate::report::{Classifier, IterationRecord, TrainReport};
