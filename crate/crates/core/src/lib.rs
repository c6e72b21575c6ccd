pub mod condensation;
pub mod config;
pub mod control;
pub mod error;
pub mod fit;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod modal;
pub mod moment;
pub mod mp;
pub mod oracle;
pub mod spectrum;
pub mod synthesis;
pub mod verification;
