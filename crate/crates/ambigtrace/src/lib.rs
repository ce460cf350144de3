//! DH-rerandomization exposure notification.
//!
//! A contact-tracing token scheme in a prime-order group: users broadcast
//! per-period tokens `(g^a, g^(s*a))`, infected users report the tokens they
//! collected, and the server rerandomizes each reported token per user so
//! that a matching token stays recognizable to its owner while everything
//! else degenerates to uniform noise. The crate bundles the protocol
//! algebra, server and client state machines, adversary strategies, a
//! contact-graph simulator, a framed TCP transport, and an exhaustive
//! verification harness for the scheme's distributional guarantees.

pub mod adversary;
pub mod client;
pub mod group;
pub mod net;
pub mod protocol;
pub mod rng;
pub mod server;
pub mod sim;
pub mod stats;
pub mod wire;
