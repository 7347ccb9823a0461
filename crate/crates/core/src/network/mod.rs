//! Matrix product states, operators and environments.

mod disk;
mod env;
mod mpo;
mod mps;

pub use disk::{read_tensor, read_tensor_checked, write_tensor, DiskStore, ScalarType, TensorStore, EXTENSION, MAGIC, MANIFEST};
pub use env::{boundary, left_step, right_step, Environment};
pub use mpo::{apply_mpo, make_mpo, Block, Mpo};
pub use mps::Mps;
