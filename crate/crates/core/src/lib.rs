pub mod corpus;
pub mod graphconfig;
pub mod rng;
pub mod features;
pub mod crf;
pub mod metrics;
pub mod components;
pub mod pipeline;
pub mod engine;
pub mod infer;
