pub mod geometry;
pub mod grounding;
pub mod matching;
pub mod controllers;
pub mod skill;
pub mod sim;
