pub mod cli;
pub mod family;
pub mod glm;
pub mod gof;
pub mod grouping;
pub mod numerics;
pub mod sampling;
pub mod sim;
