//! Queue-reactive limit order book models: book dynamics, flow ingestion,
//! calibration, Hawkes baselines, simulation and stylized-fact evaluation.

pub mod calibration;
pub mod dist;
pub mod engine;
pub mod eventlog;
pub mod facts;
pub mod flow;
pub mod hawkes;
pub mod lob;
pub mod model;
pub mod stats;
pub mod types;

pub use dist::{Conditioning, SizeDistribution};
pub use eventlog::{EventLog, FlowItem, LogRecord};
pub use lob::{LobState, OrderEvent, RefMove, RefPricePolicy};
pub use types::{EventType, Side};
