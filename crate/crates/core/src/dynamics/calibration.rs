use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest segment the hardware reproduces reliably, 400 ns.
pub const DEFAULT_MIN_SEGMENT: f64 = 400e-9;

/// Map from amplitude setpoint to Rabi frequency (rad/s).
///
/// Either the identity (setpoints are Rabi frequencies) or a monotone
/// piecewise-linear curve through `knots`, anchored at the origin. Setpoints
/// outside the knot range are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeCalibration {
    #[serde(default)]
    knots: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_min_segment")]
    pub min_segment: f64,
}

fn default_min_segment() -> f64 {
    DEFAULT_MIN_SEGMENT
}

impl Default for AmplitudeCalibration {
    fn default() -> Self {
        Self::identity()
    }
}

impl AmplitudeCalibration {
    pub fn identity() -> Self {
        Self {
            knots: None,
            min_segment: DEFAULT_MIN_SEGMENT,
        }
    }

    /// Curve through `(setpoint, rabi_rad_per_s)` knots.
    pub fn from_knots(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.len() < 2 {
            return Err(Error::InvalidArgument("calibration needs at least two knots".into()));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidArgument("non-finite calibration knot".into()));
        }
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate calibration setpoint".into()));
        }
        if knots.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::InvalidArgument("calibration curve must be non-decreasing".into()));
        }
        if !knots.iter().any(|&(x, y)| x == 0.0 && y == 0.0) {
            return Err(Error::InvalidArgument("calibration curve must pass through (0, 0)".into()));
        }
        Ok(Self {
            knots: Some(knots),
            min_segment: DEFAULT_MIN_SEGMENT,
        })
    }

    pub fn with_min_segment(mut self, min_segment: f64) -> Result<Self> {
        if !(min_segment > 0.0) {
            return Err(Error::InvalidArgument("min_segment must be > 0".into()));
        }
        self.min_segment = min_segment;
        Ok(self)
    }

    /// Load a two-column CSV with header `setpoint,rabi_hz`; Rabi values are
    /// ordinary frequencies and converted to rad/s.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut knots = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Format(format!("calibration row has {} columns", rec.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Format(format!("bad calibration value {s:?}")))
            };
            knots.push((num(&rec[0])?, num(&rec[1])? * 2.0 * std::f64::consts::PI));
        }
        Self::from_knots(knots)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f)
    }

    pub fn is_identity(&self) -> bool {
        self.knots.is_none()
    }

    /// Rabi frequency for `setpoint`; exact at knots.
    pub fn apply(&self, setpoint: f64) -> Result<f64> {
        let Some(knots) = &self.knots else {
            return Ok(setpoint);
        };
        let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
        if !(setpoint >= lo && setpoint <= hi) {
            return Err(Error::Range(format!("setpoint {setpoint} outside calibration domain [{lo}, {hi}]")));
        }
        let i = knots.partition_point(|k| k.0 <= setpoint).clamp(1, knots.len() - 1);
        let (x0, y0) = knots[i - 1];
        let (x1, y1) = knots[i];
        if setpoint == x1 {
            return Ok(y1);
        }
        Ok(y0 + (y1 - y0) * (setpoint - x0) / (x1 - x0))
    }

    /// Smallest setpoint producing `rabi` (rad/s).
    pub fn invert(&self, rabi: f64) -> Result<f64> {
        let Some(knots) = &self.knots else {
            return Ok(rabi);
        };
        let (ymin, ymax) = (knots[0].1, knots[knots.len() - 1].1);
        if !(rabi >= ymin && rabi <= ymax) {
            return Err(Error::Range(format!("Rabi frequency {rabi} outside calibration range [{ymin}, {ymax}]")));
        }
        let i = knots.partition_point(|k| k.1 < rabi).max(1);
        let (x0, y0) = knots[i - 1];
        let (x1, y1) = knots[i.min(knots.len() - 1)];
        if y1 == y0 {
            return Ok(if rabi == y0 { x0 } else { x1 });
        }
        Ok(x0 + (x1 - x0) * (rabi - y0) / (y1 - y0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_curve() {
        let c = AmplitudeCalibration::identity();
        assert_eq!(c.apply(0.0).unwrap(), 0.0);
        assert_eq!(c.apply(0.37).unwrap(), 0.37);
        assert_eq!(c.invert(12.5).unwrap(), 12.5);
    }

    #[test]
    fn two_knot_interpolation() {
        let c = AmplitudeCalibration::from_knots(vec![(0.0, 0.0), (1.0, 2.0 * PI * 50e3)]).unwrap();
        assert!((c.apply(0.5).unwrap() - PI * 50e3).abs() < 1e-9);
        assert_eq!(c.apply(1.0).unwrap(), 2.0 * PI * 50e3);
        assert!((c.invert(PI * 50e3).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(c.apply(1.5), Err(Error::Range(_))));
        assert!(matches!(c.apply(-0.1), Err(Error::Range(_))));
    }

    #[test]
    fn exact_at_knots_nonlinear() {
        let knots = vec![(0.0, 0.0), (0.1, 1.0), (0.2, 5.0), (0.5, 20.0), (1.0, 45.0)];
        let c = AmplitudeCalibration::from_knots(knots.clone()).unwrap();
        for (x, y) in knots {
            assert_eq!(c.apply(x).unwrap(), y);
            assert!((c.invert(y).unwrap() - x).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_curves_are_rejected() {
        assert!(AmplitudeCalibration::from_knots(vec![(0.0, 0.0)]).is_err());
        assert!(AmplitudeCalibration::from_knots(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]).is_err());
        assert!(AmplitudeCalibration::from_knots(vec![(0.0, 0.1), (1.0, 2.0)]).is_err());
        assert!(AmplitudeCalibration::from_knots(vec![(0.5, 0.0), (1.0, 2.0)]).is_err());
        assert!(AmplitudeCalibration::identity().with_min_segment(0.0).is_err());
    }

    #[test]
    fn csv_loading_converts_hz() {
        let text = "setpoint,rabi_hz\n0,0\n0.5,20000\n1.0,50000\n";
        let c = AmplitudeCalibration::from_csv_reader(text.as_bytes()).unwrap();
        assert!((c.apply(1.0).unwrap() - 2.0 * PI * 50e3).abs() < 1e-9);
        assert!((c.apply(0.25).unwrap() - 2.0 * PI * 10e3).abs() < 1e-9);
        assert!(AmplitudeCalibration::from_csv_reader("setpoint,rabi_hz\n0,0,1\n".as_bytes()).is_err());
    }
}
