//! Bitmap sparse storage for pruned LLM weights.
//!
//! - [`codec`]: compression to a position bitmap plus packed non-zeros,
//!   scalar and chunked decompression, row/column extraction, INT8 values.
//! - [`compare`]: CSR and general-purpose byte codecs for comparison.
//! - [`gen`]: synthetic weights, magnitude and N:M pruning, model shapes.
//! - [`sim`]: analytical SSD/CPU/GPU offloading simulator.
//! - [`store`]: `.endor` and `.dense` file containers and read benchmarks.

pub mod codec;
pub mod compare;
pub mod gen;
pub mod matrix;
pub mod sim;
pub mod store;

pub use codec::{compress, compression_ratio, decompress, EndorTensor};
pub use matrix::{DenseMatrix, ElementBuf, ElementType};
