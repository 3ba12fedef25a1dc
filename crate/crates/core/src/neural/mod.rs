//! LSTM target estimator: many-to-one LSTM layer with a linear read-out,
//! trained by backpropagation through time and Adam.

mod adam;
mod io;
mod lstm;
mod model;

pub use adam::{clip_global_norm, Adam};
pub use io::{
    from_bytes, inspect_weights, load_weights, read_header_bytes, save_weights, to_bytes, WeightHeader, FORMAT_VERSION,
    MAGIC,
};
pub use lstm::{lstm_cell_forward, mse_loss, BackwardScratch, Gate, Gradients, LstmParams, LstmState, Trace};
pub use model::{model_forward, LstmModel, Normalization, INPUT_SIZE, OUTPUT_SIZE};
