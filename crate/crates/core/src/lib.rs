pub mod signal;
pub mod stl;
pub mod controller;
pub mod plant;
pub mod moo;
pub mod repair;
pub mod harness;
