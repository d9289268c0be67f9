pub mod blocks;
pub mod filter;
pub mod machine;
pub mod network;
pub mod ssdc;
pub mod standin;
pub mod vsc;
