pub mod arff;
pub mod bench;
pub mod cache;
pub mod client;
pub mod config;
pub mod learners;
pub mod mockhub;
pub mod model;
pub mod runner;
pub mod table;
pub mod wire;
