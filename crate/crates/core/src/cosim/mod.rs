//! Lock-step link that moves one device per phase of a deployment into a
//! separate controller process.
//!
//! Frames are little-endian: `"CSL1"`, version, kind, seq (u32), simulated
//! time (u64 ns), channel count (u16), channels as (f64, f64) pairs, then a
//! CRC-32 of everything before it. The simulator blocks on every exchange, so
//! simulated time never advances without the controller's reply.

mod controller;
mod frame;
mod link;

pub use controller::serve_controller;
pub use frame::{decode_frame, encode_frame, frame_len, Frame, FrameError, FrameKind, MAGIC, VERSION};
pub use link::{
    read_frame, spawn_controller, write_frame, CommandReply, DeviceLink, DeviceReply, LinkError, LinkPhase,
    LinkState, LockstepLink, SampleRequest, DEFAULT_TIMEOUT_MS,
};
