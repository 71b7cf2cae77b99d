//! Zero-shot classification by fine-grained graph propagation.
//!
//! The pipeline has three learned parts:
//!
//! 1. [`semantic`]: phrases from class descriptions are embedded with word
//!    vectors and clustered into `K` key semantic centroids.
//! 2. [`attention`]: each centroid queries the region features of an image,
//!    producing `K` fine-grained features next to the global one, each with
//!    its own linear classifier.
//! 3. [`gcn`]: `K + 1` independent graph convolution channels over the class
//!    graph regress those classifier rows from text, which gives rows for
//!    classes that never had a training image.
//!
//! [`pipeline`] runs the stages end to end; [`dataset`] owns every on-disk
//! format and the synthetic compositional benchmark.

pub mod attention;
pub mod dataset;
pub mod error;
pub mod gcn;
pub mod pipeline;
pub mod semantic;
pub mod tensor;

pub use error::{FgpError, Result};
