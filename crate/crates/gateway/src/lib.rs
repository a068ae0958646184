//! Session service: WebSocket protocol, live pacing and log replay.

pub mod live;
pub mod protocol;
pub mod replay;

pub use live::{router, serve, Connection, Live, ServerConfig};
pub use protocol::{parse_policy, ClientMsg, Framer, ServerMsg};
pub use replay::{frames_for, replay};
