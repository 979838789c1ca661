//! Annotation service: serves candidate bundles to annotators, records their
//! decisions in an append-only log and exports the labeled result.

pub mod error;
pub mod http;
pub mod session;
pub mod store;

pub use error::{ServiceError, ServiceResult};
pub use http::{router, serve};
pub use session::{Ack, AckStatus, DecisionRequest, PairSummary, Session, SessionConfig, Task};
pub use store::{DecisionStore, Submission};
