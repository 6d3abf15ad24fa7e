//! Job-shop scheduling toolkit.
//!
//! The crate covers the deterministic half of the pipeline: problem
//! instances and their row-sequence encoding, dispatch lists and the
//! mapping from a dispatch list to a concrete schedule, feasibility
//! masking for sequential decoders, classical priority dispatching
//! rules, an exact enumeration oracle for tiny instances, and Gantt
//! chart rendering.
//!
//! All types are plain immutable values; generators and solvers take
//! explicit seeds and never touch a global RNG.

pub mod error;
pub mod gantt;
pub mod instance;
pub mod io;
pub mod masking;
pub mod oracle;
pub mod pdr;
pub mod schedule;

pub use error::Error;
pub use instance::{
    decode_instance, encode_instance, generate_flowshop, generate_taillard, mix_seed, DispatchList,
    Instance, Operation, SeqEncoding, Time,
};
pub use masking::{MaskState, ProblemMode};
pub use oracle::{gap, optimal_makespan, OracleResult};
pub use pdr::{run_pdr, Rule};
pub use schedule::{build_schedule, check_feasible, makespan, BuildMode, Schedule};
