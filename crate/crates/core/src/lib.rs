pub mod dag;
pub mod hypergrid;
pub mod nn;
pub mod seq_env;
pub mod objectives;
pub mod rollout;
pub mod experiment;
