//! Charging sessions to hourly feature frames and supervised windows.

mod anomaly;
mod autoencoder;
mod encode;
mod features;
mod frame;
pub(crate) mod session;
mod split;
mod window;

pub use anomaly::{filter_anomalies, iqr_fence, quantile_sorted, AnomalyClip, AnomalyConfig};
pub use autoencoder::{
    compress_station_activity, CompressionConfig, EncoderWeights, LinearAutoencoder, StationEncoder,
};
pub use encode::{encode_cyclic, one_hot, CategoricalEncoding, MinMaxScaler, Vocabulary};
pub use features::{day_type, FeatureOptions, FeaturePlan, HolidayCalendar};
pub use frame::{aggregate_hourly, read_frame_csv, sidecar_path, write_frame_csv, FeatureFrame, FrameSidecar};
pub use session::{
    read_sessions, read_sessions_csv, read_sessions_jsonl, truncate_sessions, write_sessions_csv, SessionRecord,
};
pub use split::{plan_splits, Fold, SplitConfig, SplitPlan};
pub use window::{forecast_windows, make_windows, make_windows_in, window_count, WindowSample};
