//! Multi-robot learning from demonstration on a planar simulator.
//!
//! Pipeline: scripted or authored demonstrations ([`trace`]) are turned into
//! per-frame interaction features ([`perception`]), segmented at interaction
//! keypoints and classified into a task policy ([`inference`]). Policies are
//! executed with a priori controllers ([`skills`]) and, for contact skills,
//! with SAC policies trained against a goal classifier ([`learn`]); [`exec`]
//! allocates, runs and scores them.

pub mod assign;
pub mod geometry;
pub mod sim;
pub mod skills;
pub mod trace;
pub mod perception;
pub mod inference;
pub mod exec;
pub mod learn;
