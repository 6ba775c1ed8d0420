pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod hermite;
pub mod latent;
pub mod marginals;
pub mod sampler;
pub mod normal;
pub mod particle;

pub use error::{Error, Result};
pub use marginals::{CumTable, Family, GlmFamily, Marginal};
pub use hermite::{LinkOptions, LinkTable, MinusOneMethod, TailShape};
pub use latent::{ArmaPredictor, LatentModel};
pub use sampler::{MarginalPath, MarginalSpec, RegressionSpec};
pub use particle::{CrnBank, FilterConfig, FilterKind, ParticleFilter, Uniforms};
pub use estimation::{FitOptions, FitResult, Method, ModelSpec};
