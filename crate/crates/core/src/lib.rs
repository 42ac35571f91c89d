//! Pronunciation assessment from non-verbal cues.
//!
//! The pipeline extracts frame-level descriptors ([`lld`]) and utterance
//! functionals ([`functionals`]) from audio, force-aligns the canonical phone
//! sequence to frame posteriors ([`align`]), scores each phone's duration
//! against a native duration model ([`duration`]), pools everything to the
//! phone level ([`assembly`]) and feeds it with contextual speech
//! representations to a trainable fluency/prosody scorer ([`net`]).

pub mod align;
pub mod assembly;
pub mod duration;
pub mod error;
pub mod eval;
pub mod functionals;
pub mod inventory;
pub mod io;
pub mod lld;
pub mod net;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
