//! Chase, UCQ rewriting, positive-type quotients and certified finite models
//! for existential rules over binary signatures.
//!
//! The crate is organised bottom-up. [`Structure`] and [`ConjunctiveQuery`]
//! are the substrate; [`program`] parses and normalises theories; [`chase`]
//! computes bounded chase prefixes; [`rewrite`] probes bounded derivation
//! depth; [`types`] builds positive-type quotients; [`coloring`] produces
//! natural colorings; [`synth`] glues them into a finite-model synthesizer
//! whose output is checked independently. [`querynorm`] and [`transforms`]
//! hold the query-normalisation calculus and the program compilers.

pub mod chase;
pub mod coloring;
pub mod dump;
pub mod error;
pub mod program;
pub mod querynorm;
pub mod rewrite;
pub mod synth;
pub mod transforms;
pub mod types;

mod canon;
mod hom;
mod query;
mod signature;
mod structure;

pub use error::{Error, Result};
pub use hom::{hom_exists, hom_into};
pub use query::{eval, holds, holds_at, ConjunctiveQuery, QAtom, Term, UnionQuery, Var};
pub use signature::{Const, Pred, PredInfo, Signature};
pub use structure::{Atom, Elem, Index, Structure, Tuple};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/programs.md")]
    mod programs {}
    #[doc = include_str!("../../../book/src/chase.md")]
    mod chase {}
    #[doc = include_str!("../../../book/src/quotients.md")]
    mod quotients {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/querynorm.md")]
    mod querynorm {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
