//! Network and stdio environment service plus the batch runner behind the
//! `gustbench` command.

pub mod batch;
pub mod protocol;
pub mod server;
pub mod session;
