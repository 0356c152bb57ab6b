pub mod adhoc;
pub mod exec;
pub mod graph;
pub mod harness;
pub mod message_manager;
pub mod model;
pub mod node;
pub mod routing;
pub mod security;
pub mod tracegen;
