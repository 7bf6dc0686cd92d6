pub mod baseline;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod forward;
pub mod homolik;
pub mod mcmc;
pub mod model;
pub mod numeric;
pub mod track;
pub mod uniformization;

pub use error::{InchError, Result};
pub use model::{GaussianTransition, ModelSpec, MovementKernel, RateFunction};
pub use track::{ObservationTrack, TimeUnit};
pub use uniformization::{IntervalSwitches, SwitchSet};
pub use config::{simulate_track, Config, RateRegistry};
pub use baseline::{conditional_loglik, LabelledInterval, LabelledSwitchSet};
pub use diagnostics::{ess, efficiency_report, EfficiencyReport};
pub use mcmc::{run_chain, ChainOutput, Priors, RunSettings, SampleRecord, SamplerKind, Tuning};
