pub mod forward;
pub mod reconstruct;
pub mod selftest;
pub mod sweep;
