//! Learning STRIPS action models from noisy, partially observed traces.

pub mod combination;
pub mod domains;
pub mod encoding;
pub mod evaluation;
pub mod extraction;
pub mod learner;
pub mod pddl;
pub mod perceptron;
pub mod rng;
pub mod simulator;
