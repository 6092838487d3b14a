//! Dynamic routing games on road networks.
//!
//! The crate models vehicles on a directed link graph where each link's travel
//! time is a function of the proportion of the population currently on it. Two
//! views of the same game are provided:
//!
//! * the mean-field game ([`mfg`]), where a distribution of infinitesimal
//!   vehicles is propagated on a tick grid and an equilibrium policy is learned
//!   by online mirror descent;
//! * the finite N-player game ([`nplayer`]), simulated event by event, used to
//!   measure how far the mean-field policy is from a Nash equilibrium when only
//!   `N` vehicles are on the road.
//!
//! [`oracles`] holds closed forms and brute-force references, [`io`] the TNTP
//! parser, scenario configuration and CSV output.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} != {b} (tol {})", $tol);
    }};
}

pub mod error;
pub mod io;
pub mod kernel;
pub mod mfg;
pub mod net;
pub mod nplayer;
pub mod oracles;
pub mod scenarios;

pub use error::{Error, ParseErrorKind, Result};
pub use kernel::{AgentState, DemandAtom, Policy, Scenario, TimeGrid};
pub use net::{CongestionFn, Link, LinkId, LinkKind, Network, NodeId};
