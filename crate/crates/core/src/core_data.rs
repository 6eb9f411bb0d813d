//! Canonical record schema, enumerations, and validated dataset container.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Eight-point compass heading, encoded clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompassHeading {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl CompassHeading {
    pub const ALL: [CompassHeading; 8] = [
        CompassHeading::N,
        CompassHeading::NE,
        CompassHeading::E,
        CompassHeading::SE,
        CompassHeading::S,
        CompassHeading::SW,
        CompassHeading::W,
        CompassHeading::NW,
    ];

    /// Numeric code, N=0 increasing clockwise to NW=7.
    pub fn code(self) -> u8 {
        match self {
            CompassHeading::N => 0,
            CompassHeading::NE => 1,
            CompassHeading::E => 2,
            CompassHeading::SE => 3,
            CompassHeading::S => 4,
            CompassHeading::SW => 5,
            CompassHeading::W => 6,
            CompassHeading::NW => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<CompassHeading> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CompassHeading::N => "N",
            CompassHeading::NE => "NE",
            CompassHeading::E => "E",
            CompassHeading::SE => "SE",
            CompassHeading::S => "S",
            CompassHeading::SW => "SW",
            CompassHeading::W => "W",
            CompassHeading::NW => "NW",
        }
    }

    pub fn parse(s: &str) -> Option<CompassHeading> {
        Self::ALL.iter().copied().find(|h| h.as_str() == s)
    }
}

impl fmt::Display for CompassHeading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Clockwise steps from `a` to `b`, always in 0..=7.
pub fn circular_difference(a: CompassHeading, b: CompassHeading) -> u8 {
    (b.code() + 8 - a.code()) % 8
}

/// One percentile family (order statistics at p20/p40/p50/p60/p80).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p20: f64,
    pub p40: f64,
    pub p50: f64,
    pub p60: f64,
    pub p80: f64,
}

impl Percentiles {
    pub fn zero() -> Percentiles {
        Percentiles {
            p20: 0.0,
            p40: 0.0,
            p50: 0.0,
            p60: 0.0,
            p80: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.p20, self.p40, self.p50, self.p60, self.p80]
    }

    pub fn is_monotone(&self) -> bool {
        let a = self.as_array();
        a.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_nonnegative(&self) -> bool {
        self.as_array().iter().all(|v| *v >= 0.0)
    }

    pub fn scale(&self, factor: f64) -> Percentiles {
        Percentiles {
            p20: self.p20 * factor,
            p40: self.p40 * factor,
            p50: self.p50 * factor,
            p60: self.p60 * factor,
            p80: self.p80 * factor,
        }
    }
}

/// One trip-logging row: intersection identity, location, streets,
/// headings, time context, and percentile congestion metrics.
///
/// Time metrics are minutes, distance metrics are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub row_id: u64,
    pub intersection_id: u64,
    pub city: u8,
    pub latitude: f64,
    pub longitude: f64,
    pub entry_street: Option<String>,
    pub exit_street: Option<String>,
    pub entry_heading: CompassHeading,
    pub exit_heading: CompassHeading,
    pub hour: u8,
    pub weekend: bool,
    pub month: u8,
    pub total_time_stopped: Percentiles,
    pub time_from_first_stop: Percentiles,
    pub distance_to_first_stop: Percentiles,
}

/// Named invariant violations found by [`validate_record`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    CityOutOfRange,
    LatitudeOutOfRange,
    LongitudeOutOfRange,
    HourOutOfRange,
    MonthOutOfRange,
    NegativeTimeMetric,
    PercentileMonotonicity,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::CityOutOfRange => "city out of range",
            Violation::LatitudeOutOfRange => "latitude out of range",
            Violation::LongitudeOutOfRange => "longitude out of range",
            Violation::HourOutOfRange => "hour out of range",
            Violation::MonthOutOfRange => "month out of range",
            Violation::NegativeTimeMetric => "negative time or distance metric",
            Violation::PercentileMonotonicity => "percentile monotonicity",
        };
        f.write_str(s)
    }
}

/// Checks every per-record invariant and reports each violation by name.
/// Validation failures are data, not errors; the result is empty iff ok.
pub fn validate_record(record: &TripRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.city > 3 {
        out.push(Violation::CityOutOfRange);
    }
    if !(-90.0..=90.0).contains(&record.latitude) {
        out.push(Violation::LatitudeOutOfRange);
    }
    if !(-180.0..=180.0).contains(&record.longitude) {
        out.push(Violation::LongitudeOutOfRange);
    }
    if record.hour > 23 {
        out.push(Violation::HourOutOfRange);
    }
    if !(1..=12).contains(&record.month) {
        out.push(Violation::MonthOutOfRange);
    }
    let families = [
        &record.total_time_stopped,
        &record.time_from_first_stop,
        &record.distance_to_first_stop,
    ];
    if families.iter().any(|p| !p.is_nonnegative()) {
        out.push(Violation::NegativeTimeMetric);
    }
    if families.iter().any(|p| !p.is_monotone()) {
        out.push(Violation::PercentileMonotonicity);
    }
    out
}

/// Ordered collection of trip records with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<TripRecord>,
    pub provenance: String,
}

/// Dataset-level invariant violations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetViolation {
    RowIdNotContiguous { index: usize },
    InconsistentIntersection { intersection_id: u64 },
}

impl Dataset {
    pub fn new(records: Vec<TripRecord>, provenance: impl Into<String>) -> Dataset {
        Dataset {
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks row_id contiguity and the intersection → (city, lat, lon) map.
    pub fn validate(&self) -> Vec<DatasetViolation> {
        let mut out = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.row_id != i as u64 {
                out.push(DatasetViolation::RowIdNotContiguous { index: i });
                break;
            }
        }
        let mut seen: HashMap<u64, (u8, f64, f64)> = HashMap::new();
        let mut reported: Vec<u64> = Vec::new();
        for r in &self.records {
            match seen.get(&r.intersection_id) {
                None => {
                    seen.insert(r.intersection_id, (r.city, r.latitude, r.longitude));
                }
                Some(&(city, lat, lon)) => {
                    if (city, lat, lon) != (r.city, r.latitude, r.longitude)
                        && !reported.contains(&r.intersection_id)
                    {
                        reported.push(r.intersection_id);
                        out.push(DatasetViolation::InconsistentIntersection {
                            intersection_id: r.intersection_id,
                        });
                    }
                }
            }
        }
        out
    }

    /// Unique intersections in first-seen order as (id, city, lat, lon).
    pub fn intersections(&self) -> Vec<(u64, u8, f64, f64)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.intersection_id) {
                out.push((r.intersection_id, r.city, r.latitude, r.longitude));
            }
        }
        out
    }

    pub fn cities(&self) -> Vec<u8> {
        let mut cities: Vec<u8> = self.records.iter().map(|r| r.city).collect();
        cities.sort_unstable();
        cities.dedup();
        cities
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_record() -> TripRecord {
        TripRecord {
            row_id: 0,
            intersection_id: 0,
            city: 0,
            latitude: 33.75,
            longitude: -84.39,
            entry_street: Some("Peachtree St".to_string()),
            exit_street: Some("Marietta St".to_string()),
            entry_heading: CompassHeading::N,
            exit_heading: CompassHeading::E,
            hour: 8,
            weekend: false,
            month: 6,
            total_time_stopped: Percentiles {
                p20: 1.0,
                p40: 2.0,
                p50: 3.0,
                p60: 4.0,
                p80: 5.0,
            },
            time_from_first_stop: Percentiles::zero(),
            distance_to_first_stop: Percentiles::zero(),
        }
    }

    #[test]
    fn heading_codes_are_a_bijection() {
        for (i, h) in CompassHeading::ALL.iter().enumerate() {
            assert_eq!(h.code() as usize, i);
            assert_eq!(CompassHeading::from_code(i as u8), Some(*h));
        }
        assert_eq!(CompassHeading::from_code(8), None);
        assert_eq!(CompassHeading::N.code(), 0);
    }

    #[test]
    fn circular_difference_in_range() {
        for a in CompassHeading::ALL {
            for b in CompassHeading::ALL {
                assert!(circular_difference(a, b) <= 7);
            }
        }
        assert_eq!(
            circular_difference(CompassHeading::NW, CompassHeading::N),
            1
        );
        assert_eq!(circular_difference(CompassHeading::N, CompassHeading::E), 2);
    }

    #[test]
    fn hour_out_of_range_is_reported() {
        let mut r = base_record();
        r.hour = 24;
        assert_eq!(validate_record(&r), vec![Violation::HourOutOfRange]);
    }

    #[test]
    fn percentile_monotonicity_is_reported() {
        let mut r = base_record();
        r.total_time_stopped = Percentiles {
            p20: 5.0,
            p40: 5.0,
            p50: 3.0,
            p60: 5.0,
            p80: 5.0,
        };
        assert_eq!(
            validate_record(&r),
            vec![Violation::PercentileMonotonicity]
        );
    }

    #[test]
    fn in_range_record_is_ok() {
        assert!(validate_record(&base_record()).is_empty());
    }

    #[test]
    fn dataset_detects_inconsistent_intersection() {
        let mut a = base_record();
        let mut b = base_record();
        b.row_id = 1;
        b.latitude += 0.5;
        a.intersection_id = 7;
        b.intersection_id = 7;
        let ds = Dataset::new(vec![a, b], "test");
        assert_eq!(
            ds.validate(),
            vec![DatasetViolation::InconsistentIntersection { intersection_id: 7 }]
        );
    }

    #[test]
    fn dataset_detects_row_id_gap() {
        let mut a = base_record();
        a.row_id = 5;
        let ds = Dataset::new(vec![a], "test");
        assert!(matches!(
            ds.validate()[0],
            DatasetViolation::RowIdNotContiguous { index: 0 }
        ));
    }
}
