//! Exact computations for the F-Givental group acting on F-topological field
//! theories over moduli of curves of compact type.

#![allow(clippy::needless_range_loop)]

pub mod algebra;
pub mod trees;
pub mod tautology;
pub mod oracle0;
pub mod ftft;
pub mod givental;
pub mod rspin;
pub mod fflat;
pub mod cli;
