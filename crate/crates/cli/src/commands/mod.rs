pub mod curate;
pub mod eval;
pub mod generate;
pub mod run;
