//! Classical comparison methods: IsoData and manual thresholding, and a
//! 25-neuron per-pixel network.

mod isodata;
mod simple_net;

pub use isodata::{apply_threshold, isodata_threshold, isodata_threshold_hist, Histogram, ISODATA_MAX_ITERS, ISODATA_TOLERANCE};
pub use simple_net::{
    extract_window, simple_net_infer, simple_net_samples, simple_net_train, SimpleNet, WindowSample, HIDDEN_UNITS, WINDOW,
};
