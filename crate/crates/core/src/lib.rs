//! Low-rank traffic flow prediction and predictive time-of-day signal control.
//!
//! The crate is organised as a pipeline:
//!
//! * [`flowdata`] ingests per-movement interval flows into a days × (T·M) matrix.
//! * [`lowrank`] decomposes the centered daily profiles into principal components.
//! * [`pls`] learns correlated predictor/predicted components and predicts the rest
//!   of a day from its early measurements.
//! * [`segmentation`] splits the day into time-of-day (TOD) periods by dynamic programming.
//! * [`controller`] shifts TOD switch times (and optionally parameters) online using
//!   the predictions.
//! * [`delay`] designs green splits and evaluates intersection delay.
//! * [`synth`] generates planted low-rank datasets with ground truth.

pub mod controller;
pub mod delay;
pub mod error;
pub mod evaluation;
pub mod flowdata;
pub mod lowrank;
pub mod pls;
pub mod segmentation;
pub mod synth;

mod linalg;

pub use error::{Error, Result};

/// Version tag written into every serialized model document.
pub const FORMAT_VERSION: u32 = 1;

/// Renders an interval boundary as a wall-clock `HH:MM` string.
///
/// Interval boundary `t` is the end of interval `t`, i.e. `t · interval_minutes`
/// minutes after midnight.
pub fn clock_label(boundary: usize, interval_minutes: u32) -> String {
    let minutes = boundary as u64 * interval_minutes as u64;
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_labels() {
        assert_eq!(clock_label(40, 15), "10:00");
        assert_eq!(clock_label(0, 15), "00:00");
        assert_eq!(clock_label(29, 15), "07:15");
        assert_eq!(clock_label(96, 15), "24:00");
    }
}
