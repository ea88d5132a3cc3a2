//! Operator-precedence languages.
//!
//! Grammars and precedence matrices, the operator-precedence parser,
//! operator-precedence expressions, first- and monadic second-order logic on
//! chord-augmented strings, control graphs and the noncounting transformation.

pub mod control_graph;
pub mod grammar;
pub mod logic;
pub mod noncounting;
pub mod ope;
pub mod opm;
pub mod parser;
pub mod regular;
pub mod regular_control;
pub mod transform;
pub mod verify;
