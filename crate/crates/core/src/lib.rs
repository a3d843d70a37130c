//! Retrieval-augmented drafting of replies to university admissions
//! inquiries, with staff review, QA distillation for fine-tuning data, and
//! an evaluation harness comparing four pipeline configurations.

pub mod chunking;
pub mod config;
pub mod corpus;
pub mod distillation;
pub mod embedding;
pub mod evaluation;
pub mod generation;
pub mod index;
pub mod retrieval;
pub mod retry;
pub mod service;
pub mod storage;
pub mod cli;
