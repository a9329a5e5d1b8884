//! Character-level translation of data records into Vega-Lite specifications.

pub mod bundled;
pub mod checkpoint;
pub mod corpus;
pub mod decoder;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod tokenizer;
pub mod train;
pub mod validate;
