//! Teach-and-repeat simulation for a skid-steer robot driven by a
//! sliding-mode trajectory tracking controller.

pub mod angle;
pub mod kv;
pub mod smc;
pub mod vehicle;
pub mod tracking;
pub mod image;
pub mod planner;
pub mod path;
pub mod world;
pub mod harness;
pub mod report;
