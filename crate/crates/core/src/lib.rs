//! Safety filters for incremental (sensor-based) control: control barrier
//! function constraints that stay valid under model and measurement error, a
//! dense QP solver for the filtered command, the plants and harness used to
//! exercise them, and a small command-line front end.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cbf;
pub mod cli;
pub mod harness;
pub mod incmodel;
pub mod numerics;
pub mod plants;
pub mod qp;
