pub mod bounds;
pub mod demo;
pub mod ellipsoid;
pub mod error;
pub mod linalg;
pub mod minkowski;
pub mod reachset;
pub mod svg;
pub mod cli;
