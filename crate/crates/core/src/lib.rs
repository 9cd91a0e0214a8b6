pub mod bessel;
pub mod config;
pub mod hexagon;
pub mod ode;
pub mod potential;
pub mod quadrature;
pub mod radialode;
pub mod resonance;
pub mod smatrix;
pub mod spectral;
pub mod verify;
