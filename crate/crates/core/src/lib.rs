//! Grid-world household rearrangement benchmark: scenes, human placement
//! preferences, episode generation, embodied agent, exploration, receptacle
//! ranking, planning, and evaluation metrics.

pub mod preferences;
pub mod rng;
pub mod world;
pub mod embodiment;
pub mod exploration;
pub mod episodes;
pub mod ranker;
pub mod metrics;
pub mod planner;
pub mod synth;
pub mod harness;
