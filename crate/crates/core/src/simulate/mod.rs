//! Physics-based data generator: an Euler-Bernoulli rod excited by impulsive
//! taps, picked up by a taxel lattice at the grip and spike-encoded.

pub mod beam;
pub mod dataset;
pub mod encoder;
pub mod pickup;

pub use beam::{cantilever_root, BeamSpec, Boundary, ModalBasis, TapStimulus};
pub use dataset::{
    generate_surrogate_dataset, generate_tap_dataset, PositionSampler, SignalVariant,
    SurrogateConfig, TapDatasetConfig,
};
pub use encoder::{encode_spikes, SpikeEncoderSpec};
pub use pickup::{synthesize_response, GraspPickup, PickupQuantity};
