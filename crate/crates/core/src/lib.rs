pub mod adapter;
pub mod fixtures;
pub mod metric;
pub mod optimizer;
pub mod params;
pub mod service;
pub mod session;
pub mod transforms;
