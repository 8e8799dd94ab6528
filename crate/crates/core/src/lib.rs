pub mod autodiff;
pub mod basis;
pub mod dg;
pub mod experiments;
pub mod flux;
pub mod mesh;
pub mod nn;
pub mod viscosity;
pub mod solver;
pub mod training;
