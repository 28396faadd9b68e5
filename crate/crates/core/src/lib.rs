pub mod calibrate;
pub mod cli;
pub mod controller;
pub mod encoder;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod plant;
pub mod rt;
pub mod serve;
pub mod sensors;
pub mod stim;
