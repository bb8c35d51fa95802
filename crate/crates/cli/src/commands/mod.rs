pub mod estimate;
pub mod study;
pub mod tables;
