//! Nonpositive curvature decisions and special cubulations for mapping tori
//! of surface multitwists.

pub mod linalg;
pub mod config_graph;
pub mod surface_model;
pub mod current_solver;
pub mod bkn;
pub mod cube_kernel;
pub mod cutbind;
pub mod cubulation;
pub mod cli;
