pub mod backend;
pub mod env_sim;
pub mod eval;
pub mod executor;
pub mod memory;
pub mod scheduler;
pub mod task_model;
