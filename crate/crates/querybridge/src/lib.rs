//! File formats, the sweep runner, interactive oracles, a remote proposer
//! client and the HTTP session service around `querybridge-core`.

pub mod io;
pub mod remote;
pub mod report;
pub mod runner;
pub mod service;
pub mod terminal;
