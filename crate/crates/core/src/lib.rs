//! Dense tensor networks for ground-state DMRG.
//!
//! Tensors are plain dimension lists over flat buffers ([`DenseTensor`]);
//! everything else — matrix product states and operators, environments, the
//! two-site sweep, measurements — is written in terms of a handful of
//! operations on them: permute, reshape, contract and the truncating
//! decompositions in [`decomp`].

pub mod decomp;
pub mod dmrg;
pub mod ed;
pub mod error;
pub mod measure;
pub mod models;
pub mod network;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use decomp::TruncationSpec;
pub use error::{Error, Result};
pub use network::{Mpo, Mps};
pub use tensor::{contract, Complex64, DenseTensor, Scalar};
