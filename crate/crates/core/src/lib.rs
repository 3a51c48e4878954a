//! Core library for compiling logical Clifford circuits to transversal
//! error-corrected physical circuits, sampling noisy executions, and decoding
//! them with partial correlated decoding plus consistency restoration.

pub mod circuit;
pub mod compiler;
pub mod decoders;
pub mod experiments;
pub mod dem;
pub mod gf2;
pub mod noise;
pub mod pauli;
pub mod runtime;
pub mod sampler;
pub mod tableau;

pub use circuit::{FaultSite, Instruction, PhysicalCircuit};
pub use gf2::{BitMatrix, BitVector};
pub use pauli::{Pauli, PauliString};
