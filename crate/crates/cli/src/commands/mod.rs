//! One module per subcommand; each exposes a `run` that reads inputs,
//! calls the library, and writes outputs with metadata sidecars.

pub mod analyze;
pub mod index;
pub mod pca;
pub mod synth;
