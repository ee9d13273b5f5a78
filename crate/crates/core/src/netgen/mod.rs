//! Network layouts, channel gains and rate evaluation.

pub mod channel;
pub mod dataset;
pub mod layout;
pub mod rate;

pub use channel::{compute_channel, layout_channel, ChannelConfig, ChannelMatrix};
pub use dataset::{load_dataset, save_dataset, DatasetEntry, LayoutRecord, OracleProvenance};
pub use layout::{generate_layout, generate_layouts, LayoutConfig, NetworkLayout, Point};
pub use rate::{active_set_rate, soft_sum_rate, soft_sum_rate_grad, sum_rate, RateReport, ScheduleVector};
