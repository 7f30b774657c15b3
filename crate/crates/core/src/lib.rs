pub mod cli;
pub mod corpus;
pub mod embed;
pub mod gat;
pub mod graph;
pub mod model;
pub mod tensor;
pub mod train;
