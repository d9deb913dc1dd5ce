//! Diacritics restoration: marks, edit instructions, tokenization, corpora,
//! M2 realization, frequency baselines, evaluation and error analysis.

pub mod analysis;
pub mod corpus;
pub mod evaluate;
pub mod instructions;
pub mod m2;
pub mod marks;
pub mod restore;
pub mod tokenize;
