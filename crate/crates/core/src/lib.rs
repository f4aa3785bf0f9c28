pub mod diffusion;
pub mod grad_suite;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod sampling;
pub mod text;
pub mod training;

pub use diffusion::{DiffusionError, NoiseSchedule};
pub use model::{Model, ModelConfig, ModelError};
pub use numerics::{NumericsError, Tape, Tensor, Var};
pub use rng::{Purpose, RngStreams};
pub use text::{TextError, TokenSequence, Vocab};
pub use training::{Checkpoint, TrainConfig, TrainError, Trainer};
pub use sampling::{Denoiser, SampleMode, SampleOutput, SampleRequest, SamplingError};
