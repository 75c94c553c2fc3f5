mod hourly;
mod normalize;
mod sessions;
mod synthetic;
mod window;

pub use hourly::{aggregate_to_hourly, format_timestamp, HourlySeries, HOURLY_HEADER};
pub use normalize::{FitScope, Normalizer};
pub use sessions::{ingest_sessions, IngestReport, RejectedRow, SessionRecord, SESSIONS_HEADER};
pub use synthetic::{synthetic_series, SyntheticSpec};
pub use window::{make_windows, prepare_dataset, prepare_dataset_with, split_dataset, Split, WindowedDataset};
