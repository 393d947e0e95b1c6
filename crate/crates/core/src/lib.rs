pub mod bloch;
pub mod dispersion;
pub mod error;
pub mod faddeeva;
pub mod greens;
pub mod latticesums;
pub mod lattice;
