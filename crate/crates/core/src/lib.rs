pub mod params;
pub mod tape;
pub mod tensor;
pub mod graph;
pub mod metapath;
pub mod rng;
pub mod embed;
pub mod model;
pub mod optim;
pub mod policy;
pub mod env;
pub mod trainer;
pub mod metrics;
pub mod data;
pub mod synth;
pub mod config;
pub mod pipeline;
