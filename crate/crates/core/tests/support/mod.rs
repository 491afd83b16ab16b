pub mod oracles;
pub mod responses;
