//! Command-line front end and HTTP service for the bodyshape toolkit.

pub mod commands;
pub mod service;
