//! Dimer height correlations on square-lattice domains, checked against exact
//! enumeration, and their compactified free field counterparts on the
//! cylinder: discrete Gaussian instanton laws and twisted Szegő kernels.

pub mod dgauss;
pub mod experiments;
pub mod height;
pub mod kasteleyn;
pub mod lattice;
pub mod linalg;
pub mod matchings;
pub mod torus;
