//! Context-aware, intrinsically motivated open-ended learning in a planar
//! two-arm reaching world.
//!
//! The agent discovers goals from visual change, selects what to practice
//! by competence improvement, learns one actor-critic expert per goal,
//! context and arm, detects relevant obstacles from surprising failures,
//! and transfers competent policies into newly met contexts.

pub mod agent;
pub mod context;
pub mod error;
pub mod expert;
pub mod goals;
pub mod harness;
pub mod motivation;
pub mod selection;
mod snapshot;
pub mod transfer;
pub mod world;

pub use agent::{Agent, AgentParams, ContextMode, TrialLog, Variant, VariantConfig};
pub use context::{ContextKey, ContextRegistry, UsefulFeatures};
pub use error::{Error, Result};
pub use goals::{EventImage, GoalId, GoalMap};
pub use world::{Arm, ObstacleMask, SceneConfig, World};
