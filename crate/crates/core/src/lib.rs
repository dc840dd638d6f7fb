pub mod channel;
pub mod conic;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod sca;
