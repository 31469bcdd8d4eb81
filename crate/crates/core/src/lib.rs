pub mod autodiff;
pub mod labanstr;
pub mod optim;
pub mod params;
pub mod rng;
pub mod phase;
pub mod embedding;
pub mod composer;
pub mod engine;
pub mod artistio;
