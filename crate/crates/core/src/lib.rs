//! Residue statistics, periodic rearrangements and the (K,M,L)-family
//! construction behind the failure of the weak (1,1) maximal inequality for
//! k^d and prime subsequence averages, with exact instance verification.

pub mod arith;
pub mod bitset;
pub mod cli;
pub mod config;
pub mod equidist;
pub mod error;
pub mod family;
pub mod field;
pub mod periodic;
pub mod rearrange;
pub mod residue;
pub mod sieve;
pub mod spacing;
pub mod verify;

pub use arith::Rational;
pub use error::{Error, Result};
