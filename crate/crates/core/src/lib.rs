pub mod labels;
pub mod corpus;
pub mod modeling;
pub mod evaluation;
pub mod trainer;
pub mod promptlab;
pub mod cli;
mod util;
