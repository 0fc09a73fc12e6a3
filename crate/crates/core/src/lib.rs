pub mod channel_sim;
pub mod nn_core;
pub mod pdr;
pub mod positioning;
pub mod ranging;
pub mod training;
