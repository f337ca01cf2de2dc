//! End-to-end workflow: record demonstrations from a glove stream, train a
//! trajectory model, reproduce it on the simulated plant and evaluate it.

pub mod feedback;
pub mod formats;
pub mod record;
pub mod transport;
pub mod workflow;

pub use self::feedback::{feedback_loop, FeedbackReport};
pub use self::formats::{DemoFile, TactileProfile};
pub use self::record::{capture_extrema, record, RecordOutcome, RecordSettings};
pub use self::transport::TransportSpec;
pub use self::workflow::{eval, reproduce, tracking_summary, train, EvalReport, TrainOutcome};
