pub mod scalar;
pub mod su3;
pub mod hamiltonian;
pub mod encoding;
pub mod statevector;
pub mod spectral;
pub mod ansatz;
pub mod optimizers;
pub mod mps;
pub mod fit;
pub mod experiments;
