//! Monte Carlo planning on layered DAGs with approximate state-action
//! abstractions and controllers that decide when to stop using them.

pub mod abstraction;
pub mod domains;
pub mod dropping;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod search;

pub use error::{Error, Result};
pub use mdp::{Action, LayeredStateKey, MdpModel, SimRng, State};
