pub mod energymap;
pub mod lp;
pub mod mip;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod practical;
pub mod scenario;
pub mod simulate;
pub mod stochastic;
pub mod suite;
