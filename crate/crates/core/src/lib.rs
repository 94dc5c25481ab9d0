//! Software emulation of exact multiply-and-accumulate (EMAC) units for posit,
//! floating-point and fixed-point formats at low precision, and a feed-forward
//! inference engine built from them.

pub mod codec;
pub mod data;
pub mod emac;
pub mod exact;
pub mod experiment;
pub mod network;
pub mod oracle;
pub mod quire;
pub mod trainer;
