//! Subcommand implementations. Each `run` takes the resolved configuration
//! plus filesystem locations, writes its reports and a configuration
//! snapshot beside them, and returns a summary the caller can assert on.

pub mod ablate_crop;
pub mod decode_eval;
pub mod fit_kmeans;
pub mod gen_data;
pub mod rate_control;
pub mod train;
pub mod viz;
