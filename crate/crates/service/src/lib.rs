//! Live sessions that let a remote client drive the straight-going HV while
//! the AV runs the decision engine. See `docs/protocol.md` for the wire format.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ErrorCode, ServerMessage, StateMessage, VehicleView};
pub use server::{ServeConfig, Server};
pub use session::{session_config, session_tick, Session, SessionError};
