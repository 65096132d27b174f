//! Left-turn decisions from interaction orientation and a mixed-strategy
//! Proceed/Yield game, with expert learning and a closed-loop simulator.

pub mod engine;
pub mod events;
pub mod expert;
pub mod game;
pub mod ingest;
pub mod kinematics;
pub mod orientation;
pub mod sim;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/orientation.md")]
    mod orientation {}
    #[doc = include_str!("../../../book/src/game.md")]
    mod game {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
