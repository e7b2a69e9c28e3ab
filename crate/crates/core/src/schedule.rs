//! Incremental hole-size curriculum.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub iterations: u64,
    pub ratio_range: (f64, f64),
}

/// Stages run in order; the last one stays active forever.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalSchedule {
    stages: Vec<Stage>,
}

impl IncrementalSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidArgument("schedule needs at least one stage".into()));
        }
        for s in &stages {
            let (lo, hi) = s.ratio_range;
            if s.iterations == 0 || !(0.0 < lo && lo <= hi && hi < 1.0) {
                return Err(Error::InvalidArgument(format!("invalid schedule stage {s:?}")));
            }
        }
        for w in stages.windows(2) {
            let (a, b) = (w[0].ratio_range, w[1].ratio_range);
            if b.0 < a.0 || b.1 < a.1 {
                return Err(Error::InvalidArgument(format!(
                    "schedule ratio ranges must not decrease: {a:?} then {b:?}"
                )));
            }
        }
        Ok(IncrementalSchedule { stages })
    }

    /// Default ladder: 2000 iterations each at 2–10%, 10–20%, 20–30% and 30–40% holes.
    pub fn default_ladder() -> Self {
        let st = |lo, hi| Stage {
            iterations: 2000,
            ratio_range: (lo, hi),
        };
        Self::new(vec![st(0.02, 0.1), st(0.1, 0.2), st(0.2, 0.3), st(0.3, 0.4)]).expect("valid ladder")
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Index of the stage active at `iteration`.
    pub fn stage_index(&self, iteration: u64) -> usize {
        let mut end = 0u64;
        for (i, s) in self.stages.iter().enumerate() {
            end = end.saturating_add(s.iterations);
            if iteration < end {
                return i;
            }
        }
        self.stages.len() - 1
    }

    pub fn ratio_range(&self, iteration: u64) -> (f64, f64) {
        self.stages[self.stage_index(iteration)].ratio_range
    }
}

/// Hole-ratio range active at `iteration`.
pub fn schedule_step(schedule: &IncrementalSchedule, iteration: u64) -> (f64, f64) {
    schedule.ratio_range(iteration)
}

/// `iters@lo-hi` entries separated by commas.
impl FromStr for IncrementalSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse schedule {s:?}; expected e.g. 2000@0.02-0.1,2000@0.1-0.2"));
        let stages = s
            .split(',')
            .map(|part| {
                let (k, range) = part.trim().split_once('@').ok_or_else(bad)?;
                let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
                Ok(Stage {
                    iterations: k.trim().parse().map_err(|_| bad())?,
                    ratio_range: (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(stages)
    }
}

impl fmt::Display for IncrementalSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}@{}-{}", s.iterations, s.ratio_range.0, s.ratio_range.1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_and_saturation() {
        let s: IncrementalSchedule = "3@0.02-0.1,5@0.1-0.2,2@0.2-0.3".parse().unwrap();
        assert_eq!(schedule_step(&s, 0), (0.02, 0.1));
        assert_eq!(s.stage_index(2), 0);
        assert_eq!(s.stage_index(3), 1);
        assert_eq!(s.stage_index(7), 1);
        assert_eq!(s.stage_index(8), 2);
        assert_eq!(s.stage_index(10), 2);
        assert_eq!(s.stage_index(u64::MAX), 2);
    }

    #[test]
    fn decreasing_ranges_rejected() {
        assert!("5@0.2-0.3,5@0.1-0.2".parse::<IncrementalSchedule>().is_err());
        assert!("0@0.1-0.2".parse::<IncrementalSchedule>().is_err());
        assert!("5@0.1".parse::<IncrementalSchedule>().is_err());
    }

    #[test]
    fn display_roundtrip() {
        let s = IncrementalSchedule::default_ladder();
        assert_eq!(s.to_string().parse::<IncrementalSchedule>().unwrap(), s);
    }
}
