pub mod campaign;
pub mod oracles;
pub mod statements;
pub mod stores;
