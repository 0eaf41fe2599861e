pub mod bm25;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod llm;
pub mod orchestrator;
pub mod retrieval;
pub mod runtime;
pub mod seeds;
pub mod selection;
pub mod slm;
pub mod sim;
pub mod sources;
