//! Shared scalar types: simulated time, intervals, and grid locations.
//!
//! All time values are integer minutes from the scenario epoch. There is no
//! wall clock anywhere in the library; golden-log comparisons depend on it.

use serde::{Deserialize, Serialize};

/// Minutes since the scenario epoch.
pub type Minutes = i64;

/// Half-open time interval `[start, end)` in minutes. Always non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "(Minutes, Minutes)", try_from = "(Minutes, Minutes)")]
pub struct TimeInterval {
    pub start: Minutes,
    pub end: Minutes,
}

impl TimeInterval {
    pub fn new(start: Minutes, end: Minutes) -> Result<Self, String> {
        if start < end {
            Ok(Self { start, end })
        } else {
            Err(format!("empty interval [{start},{end})"))
        }
    }

    // no is_empty: the constructor rejects empty intervals
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> Minutes {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn contains_instant(&self, t: Minutes) -> bool {
        self.start <= t && t < self.end
    }
}

impl From<TimeInterval> for (Minutes, Minutes) {
    fn from(iv: TimeInterval) -> Self {
        (iv.start, iv.end)
    }
}

impl TryFrom<(Minutes, Minutes)> for TimeInterval {
    type Error = String;

    fn try_from(pair: (Minutes, Minutes)) -> Result<Self, Self::Error> {
        TimeInterval::new(pair.0, pair.1)
    }
}

impl std::fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Integer grid location; straight-line distance is the proximity metric.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(into = "(i64, i64)", from = "(i64, i64)")]
pub struct GridPoint {
    pub x: i64,
    pub y: i64,
}

impl GridPoint {
    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &GridPoint) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

impl From<GridPoint> for (i64, i64) {
    fn from(p: GridPoint) -> Self {
        (p.x, p.y)
    }
}

impl From<(i64, i64)> for GridPoint {
    fn from(pair: (i64, i64)) -> Self {
        GridPoint { x: pair.0, y: pair.1 }
    }
}

impl std::fmt::Display for GridPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

/// Merge a list of intervals into sorted, disjoint, maximal runs.
/// Touching intervals are coalesced; overlapping input is reported as an error.
pub fn normalize_disjoint(mut intervals: Vec<TimeInterval>) -> Result<Vec<TimeInterval>, String> {
    intervals.sort();
    let mut out: Vec<TimeInterval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(prev) if iv.start < prev.end => {
                return Err(format!("overlapping intervals {prev} and {iv}"));
            }
            Some(prev) if iv.start == prev.end => prev.end = iv.end,
            _ => out.push(iv),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rejects_empty() {
        assert!(TimeInterval::new(5, 5).is_err());
        assert!(TimeInterval::new(6, 5).is_err());
        assert!(TimeInterval::new(5, 6).is_ok());
    }

    #[test]
    fn interval_overlap_is_half_open() {
        let a = TimeInterval::new(0, 100).unwrap();
        let b = TimeInterval::new(100, 200).unwrap();
        assert!(!a.overlaps(&b));
        let c = TimeInterval::new(99, 101).unwrap();
        assert!(a.overlaps(&c) && b.overlaps(&c));
    }

    #[test]
    fn normalize_merges_touching_and_rejects_overlap() {
        let merged = normalize_disjoint(vec![
            TimeInterval::new(100, 200).unwrap(),
            TimeInterval::new(0, 100).unwrap(),
        ])
        .unwrap();
        assert_eq!(merged, vec![TimeInterval::new(0, 200).unwrap()]);

        let err = normalize_disjoint(vec![
            TimeInterval::new(0, 150).unwrap(),
            TimeInterval::new(100, 200).unwrap(),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn grid_distance() {
        let a = GridPoint::new(0, 0);
        let b = GridPoint::new(3, 4);
        assert_eq!(a.distance(&b), 5.0);
    }
}
