#![allow(dead_code)]

pub mod blocks;
pub mod calibration;
pub mod closed_form;
pub mod geweke;
pub mod grid;
pub mod stats;
