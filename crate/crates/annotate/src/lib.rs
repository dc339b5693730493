//! Annotation service: serves unlabeled records with citation highlights and
//! screening signals, stores expert labels in an append-only log, and
//! exports them as an annotations file.

pub mod api;
pub mod store;

pub use api::{router, AppState};
pub use store::{replay, Event, EventKind, Store, StoreError};
