//! Toolkit for translating classical Chinese scripture into English with a
//! side-tuned encoder and a proper-noun memory.

pub mod alignment;
pub mod harness;
pub mod neural;
pub mod pnmemory;
pub mod subword;
pub mod textprep;
