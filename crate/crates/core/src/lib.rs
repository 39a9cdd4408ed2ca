//! Mining DBMS bug reports into executable, semantically faithful test cases.
//!
//! The crate is organised as a pipeline over a file-backed corpus:
//! [`repository`] collects reports, [`fragmenter`] finds PoC-related lines,
//! [`extractor`] turns them into raw PoCs with a text-generation client,
//! [`adapter`] repairs raw PoCs against a [`harness`] backend, and
//! [`campaigns`] exports and replays the resulting test cases.

pub mod adapter;
pub mod campaigns;
pub mod extractor;
pub mod fragmenter;
pub mod harness;
pub mod pipeline;
pub mod repository;
pub mod sql;
