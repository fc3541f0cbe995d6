//! Independent brute-force oracles and seeded generators used to verify the
//! main crate. Everything here favors obviousness over speed: different
//! algorithms, different data layouts, no shared helpers with the code
//! under test.

pub mod dense;
pub mod gen;
pub mod instancing;
pub mod raycast;
