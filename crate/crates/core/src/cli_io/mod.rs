pub mod cli;
pub mod config;
pub mod contour;
pub mod export;
