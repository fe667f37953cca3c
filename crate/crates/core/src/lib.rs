//! Fluid model of two job classes sharing one server, where served work
//! returns after an exponential delay. Simulation, fixed-priority and
//! switching policies, optimal control by linear programming, and closed-form
//! asymptotics of the fixed-priority costs.

pub mod asymptotics;
pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod model;
pub mod optimal;
pub mod policies;
pub mod roots;
pub mod special;

pub use dynamics::{simulate, simulate_controls, Segment, Trajectory};
pub use error::{Error, Result};
pub use model::{classify_regime, Allocation, Class, Params, Regime, State};
pub use policies::{fixed_priority, switch_at_time, switch_on_curve, Policy};
