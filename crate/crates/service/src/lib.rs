pub mod api;
pub mod store;

pub use api::{router, AppState, SessionHandle, Snapshot};
pub use store::{session_load, LogStore, Recovery, StoreError};
