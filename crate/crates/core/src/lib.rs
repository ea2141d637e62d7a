pub mod constraints;
pub mod forecast;
pub mod ingest;
pub mod loo;
pub mod model;
pub mod pipeline;
pub mod sampler;
pub mod splines;
pub mod synthetic;
