//! Current-based LIF network with exponential PSCs, a 32x32 synapse array
//! and per-synapse correlation sensors.
//!
//! Times are in microseconds of hardware time, voltages in volts. The
//! membrane capacitance is normalized to 1, so currents are in V/us.

#[doc(hidden)]
pub mod gauss;
mod lif;
mod network;
mod sensor;
mod threshold;
mod train;
mod weights;

pub use lif::{LifParams, NeuronState, Propagator};
pub use network::{Network, NetworkConfig};
pub use sensor::{CorrelationSensor, SensorParams};
pub use threshold::{calibrate_weight_scale, critical_amplitude, measure_spiking_threshold, NO_THRESHOLD};
pub use train::SpikeTrain;
pub use weights::{Correlations, WeightMatrix, MAX_WEIGHT};

/// Action neurons.
pub const N_NEURONS: usize = 32;
/// Input (state) rows.
pub const N_INPUTS: usize = 32;
pub const N_SYNAPSES: usize = N_INPUTS * N_NEURONS;

/// Per-neuron spike counts of one emulation window.
pub type SpikeCounts = [u8; N_NEURONS];
