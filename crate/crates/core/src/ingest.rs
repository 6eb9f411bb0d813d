//! CSV ingestion/serialization for the 27-column trip schema, plus a
//! deterministic synthetic dataset generator for desk-scale testing.

use crate::core_data::{
    validate_record, CompassHeading, Dataset, Percentiles, TripRecord, Violation,
};
use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// Canonical column names, in canonical order.
pub const HEADER: [&str; 27] = [
    "RowId",
    "IntersectionId",
    "City",
    "Latitude",
    "Longitude",
    "EntryStreetName",
    "ExitStreetName",
    "EntryHeading",
    "ExitHeading",
    "Hour",
    "Weekend",
    "Month",
    "TotalTimeStopped_p20",
    "TotalTimeStopped_p40",
    "TotalTimeStopped_p50",
    "TotalTimeStopped_p60",
    "TotalTimeStopped_p80",
    "TimeFromFirstStop_p20",
    "TimeFromFirstStop_p40",
    "TimeFromFirstStop_p50",
    "TimeFromFirstStop_p60",
    "TimeFromFirstStop_p80",
    "DistanceToFirstStop_p20",
    "DistanceToFirstStop_p40",
    "DistanceToFirstStop_p50",
    "DistanceToFirstStop_p60",
    "DistanceToFirstStop_p80",
];

/// Unit of the time-metric columns in a source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Minutes,
    Seconds,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("schema error: unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row}: column `{column}`: {message}")]
    Row {
        row: u64,
        column: &'static str,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Parse result: the dataset plus per-row validation warnings.
#[derive(Debug)]
pub struct ParsedDataset {
    pub dataset: Dataset,
    pub warnings: Vec<(u64, Violation)>,
}

fn header_indices(headers: &csv::StringRecord) -> Result<[usize; 27], IngestError> {
    let names: Vec<&str> = headers.iter().collect();
    for canonical in HEADER {
        if !names.contains(&canonical) {
            return Err(IngestError::MissingColumn(canonical.to_string()));
        }
    }
    for name in &names {
        if !HEADER.contains(name) {
            return Err(IngestError::UnknownColumn(name.to_string()));
        }
    }
    let mut idx = [0usize; 27];
    for (i, canonical) in HEADER.iter().enumerate() {
        idx[i] = names.iter().position(|n| n == canonical).unwrap();
    }
    Ok(idx)
}

fn cell<'a>(
    record: &'a csv::StringRecord,
    idx: &[usize; 27],
    col: usize,
    row: u64,
) -> Result<&'a str, IngestError> {
    record.get(idx[col]).ok_or(IngestError::Row {
        row,
        column: HEADER[col],
        message: "missing cell".to_string(),
    })
}

fn parse_cell<T: std::str::FromStr>(
    s: &str,
    row: u64,
    col: usize,
) -> Result<T, IngestError> {
    if s.is_empty() {
        return Err(IngestError::Row {
            row,
            column: HEADER[col],
            message: "empty cell in non-street column".to_string(),
        });
    }
    s.parse().map_err(|_| IngestError::Row {
        row,
        column: HEADER[col],
        message: format!("unparseable value `{s}`"),
    })
}

fn parse_heading(s: &str, row: u64, col: usize) -> Result<CompassHeading, IngestError> {
    CompassHeading::parse(s).ok_or_else(|| IngestError::Row {
        row,
        column: HEADER[col],
        message: format!("unknown heading `{s}`"),
    })
}

fn parse_percentiles(
    record: &csv::StringRecord,
    idx: &[usize; 27],
    first_col: usize,
    row: u64,
) -> Result<Percentiles, IngestError> {
    let mut vals = [0.0f64; 5];
    for (i, v) in vals.iter_mut().enumerate() {
        *v = parse_cell(cell(record, idx, first_col + i, row)?, row, first_col + i)?;
    }
    Ok(Percentiles {
        p20: vals[0],
        p40: vals[1],
        p50: vals[2],
        p60: vals[3],
        p80: vals[4],
    })
}

/// Reads the canonical 27-column CSV. Empty street cells become absent
/// values; time metrics are converted to minutes when `unit` is seconds.
pub fn parse_csv<R: Read>(source: R, unit: TimeUnit) -> Result<ParsedDataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let idx = header_indices(reader.headers()?)?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (i, row_result) in reader.records().enumerate() {
        let row = i as u64;
        let raw = row_result?;
        let street = |col: usize| -> Result<Option<String>, IngestError> {
            let s = cell(&raw, &idx, col, row)?;
            Ok(if s.is_empty() { None } else { Some(s.to_string()) })
        };
        let time_scale = match unit {
            TimeUnit::Minutes => 1.0,
            TimeUnit::Seconds => 1.0 / 60.0,
        };
        let record = TripRecord {
            row_id: parse_cell(cell(&raw, &idx, 0, row)?, row, 0)?,
            intersection_id: parse_cell(cell(&raw, &idx, 1, row)?, row, 1)?,
            city: parse_cell(cell(&raw, &idx, 2, row)?, row, 2)?,
            latitude: parse_cell(cell(&raw, &idx, 3, row)?, row, 3)?,
            longitude: parse_cell(cell(&raw, &idx, 4, row)?, row, 4)?,
            entry_street: street(5)?,
            exit_street: street(6)?,
            entry_heading: parse_heading(cell(&raw, &idx, 7, row)?, row, 7)?,
            exit_heading: parse_heading(cell(&raw, &idx, 8, row)?, row, 8)?,
            hour: parse_cell(cell(&raw, &idx, 9, row)?, row, 9)?,
            weekend: match cell(&raw, &idx, 10, row)? {
                "0" => false,
                "1" => true,
                other => {
                    return Err(IngestError::Row {
                        row,
                        column: HEADER[10],
                        message: format!("expected 0 or 1, got `{other}`"),
                    })
                }
            },
            month: parse_cell(cell(&raw, &idx, 11, row)?, row, 11)?,
            total_time_stopped: parse_percentiles(&raw, &idx, 12, row)?.scale(time_scale),
            time_from_first_stop: parse_percentiles(&raw, &idx, 17, row)?.scale(time_scale),
            distance_to_first_stop: parse_percentiles(&raw, &idx, 22, row)?,
        };
        for v in validate_record(&record) {
            warnings.push((row, v));
        }
        records.push(record);
    }
    Ok(ParsedDataset {
        dataset: Dataset::new(records, "csv"),
        warnings,
    })
}

fn fmt_f64(v: f64) -> String {
    // Display on f64 is the shortest round-trip representation.
    format!("{v}")
}

/// Writes the canonical CSV; returns the number of data rows written.
pub fn write_csv<W: Write>(dataset: &Dataset, sink: W) -> Result<usize, IngestError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(HEADER)?;
    for r in &dataset.records {
        let mut row: Vec<String> = vec![
            r.row_id.to_string(),
            r.intersection_id.to_string(),
            r.city.to_string(),
            fmt_f64(r.latitude),
            fmt_f64(r.longitude),
            r.entry_street.clone().unwrap_or_default(),
            r.exit_street.clone().unwrap_or_default(),
            r.entry_heading.to_string(),
            r.exit_heading.to_string(),
            r.hour.to_string(),
            if r.weekend { "1" } else { "0" }.to_string(),
            r.month.to_string(),
        ];
        for family in [
            &r.total_time_stopped,
            &r.time_from_first_stop,
            &r.distance_to_first_stop,
        ] {
            row.extend(family.as_array().iter().map(|v| fmt_f64(*v)));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(dataset.records.len())
}

/// Synthetic generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_cities: usize,
    pub intersections_per_city: Vec<u64>,
    pub rows: usize,
    pub street_missing_rate: f64,
    pub zero_inflation: f64,
    pub city_centers: Vec<(f64, f64)>,
    pub city_radius_deg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            n_cities: 4,
            intersections_per_city: vec![973, 377, 1800, 1650],
            rows: 50_000,
            street_missing_rate: 0.1,
            zero_inflation: 0.7,
            // Atlanta, Boston, Chicago, Philadelphia downtown coordinates.
            city_centers: vec![
                (33.749, -84.388),
                (42.360, -71.058),
                (41.878, -87.630),
                (39.953, -75.165),
            ],
            city_radius_deg: 0.15,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.intersections_per_city.len() != self.n_cities {
            return Err(IngestError::Config(format!(
                "intersections_per_city has {} entries, expected n_cities = {}",
                self.intersections_per_city.len(),
                self.n_cities
            )));
        }
        if self.city_centers.len() != self.n_cities {
            return Err(IngestError::Config(format!(
                "city_centers has {} entries, expected n_cities = {}",
                self.city_centers.len(),
                self.n_cities
            )));
        }
        if self.n_cities == 0 || self.n_cities > 4 {
            return Err(IngestError::Config(
                "n_cities must be in 1..=4 (city labels are 0..3)".to_string(),
            ));
        }
        for (name, v) in [
            ("street_missing_rate", self.street_missing_rate),
            ("zero_inflation", self.zero_inflation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(IngestError::Config(format!("{name} must be in [0,1]")));
            }
        }
        if self.city_radius_deg <= 0.0 {
            return Err(IngestError::Config(
                "city_radius_deg must be positive".to_string(),
            ));
        }
        if self.rows == 0 {
            return Err(IngestError::Config("rows must be positive".to_string()));
        }
        Ok(())
    }
}

const STREET_STEMS: [&str; 20] = [
    "Oak", "Maple", "Cedar", "Pine", "Elm", "Walnut", "Birch", "Chestnut", "Willow", "Ash",
    "Main", "Market", "Church", "Mill", "River", "Lake", "Hill", "Park", "Spring", "Union",
];

const STREET_SUFFIXES: [&str; 12] = [
    "St", "Lane", "Blvd", "Broad", "Drive", "Ave", "Rd", "Way", "Place", "Court", "Pkwy", "Ln",
];

struct Intersection {
    id: u64,
    city: u8,
    lat: f64,
    lon: f64,
    entries: Vec<String>,
    exits: Vec<String>,
}

fn mix(seed: u64, row: u64) -> u64 {
    // splitmix64 of seed ^ row keeps per-row streams independent.
    let mut z = seed ^ row.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Commute-peak shape of the congestion signal over the day.
fn peak_factor(hour: u8) -> f64 {
    let h = hour as f64;
    let am = (-((h - 8.0) * (h - 8.0)) / 6.0).exp();
    let pm = (-((h - 17.0) * (h - 17.0)) / 6.0).exp();
    am.max(pm)
}

fn build_intersections(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Intersection> {
    let mut out = Vec::new();
    let mut next_id = 0u64;
    for city in 0..config.n_cities {
        let (clat, clon) = config.city_centers[city];
        // Per-city street pool with suffixes spanning the road-type vocabulary.
        let pool: Vec<String> = STREET_STEMS
            .iter()
            .flat_map(|stem| {
                STREET_SUFFIXES
                    .iter()
                    .map(move |suffix| format!("{stem} {suffix}"))
            })
            .collect();
        for _ in 0..config.intersections_per_city[city] {
            let r = config.city_radius_deg;
            let lat = clat + rng.random_range(-r..r);
            let lon = clon + rng.random_range(-r..r);
            let n_entries = rng.random_range(1..=4usize);
            let n_exits = rng.random_range(1..=4usize);
            let entries: Vec<String> = (0..n_entries)
                .map(|_| pool.choose(rng).unwrap().clone())
                .collect();
            let exits: Vec<String> = (0..n_exits)
                .map(|_| pool.choose(rng).unwrap().clone())
                .collect();
            out.push(Intersection {
                id: next_id,
                city: city as u8,
                lat,
                lon,
                entries,
                exits,
            });
            next_id += 1;
        }
    }
    out
}

/// Generates a deterministic synthetic dataset. Each row draws from an
/// independent counter-based stream keyed by (seed, row_id), so the result
/// does not depend on generation order.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset, IngestError> {
    config.validate()?;
    let mut setup_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let intersections = build_intersections(config, &mut setup_rng);
    let total = intersections.len();
    // First pass over a shuffled order guarantees every intersection
    // appears at least once when rows >= total.
    let mut order: Vec<usize> = (0..total).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut setup_rng);

    let mut records = Vec::with_capacity(config.rows);
    for row_id in 0..config.rows as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, row_id));
        let inter = if (row_id as usize) < total {
            &intersections[order[row_id as usize]]
        } else {
            &intersections[rng.random_range(0..total)]
        };
        let hour: u8 = rng.random_range(0..24);
        let weekend = rng.random_range(0..7u8) >= 5;
        let month: u8 = rng.random_range(1..=12);
        let entry_street = if rng.random_range(0.0..1.0) < config.street_missing_rate {
            None
        } else {
            Some(inter.entries.choose(&mut rng).unwrap().clone())
        };
        let exit_street = if rng.random_range(0.0..1.0) < config.street_missing_rate {
            None
        } else {
            Some(inter.exits.choose(&mut rng).unwrap().clone())
        };
        let entry_heading = *CompassHeading::ALL.choose(&mut rng).unwrap();
        let exit_heading = *CompassHeading::ALL.choose(&mut rng).unwrap();

        let is_zero = rng.random_range(0.0..1.0) < config.zero_inflation;
        let (stopped, from_first, dist) = if is_zero {
            (Percentiles::zero(), Percentiles::zero(), Percentiles::zero())
        } else {
            // Linear signal in hour shape / weekend / downtown proximity,
            // times lognormal noise so congestion outliers exist.
            let (clat, clon) = config.city_centers[inter.city as usize];
            let downtown_deg =
                ((inter.lat - clat).powi(2) + (inter.lon - clon).powi(2)).sqrt();
            let proximity = 1.0 - (downtown_deg / config.city_radius_deg).min(1.0);
            let mu = 1.2
                + 1.6 * peak_factor(hour)
                + 0.8 * proximity
                + if weekend { -0.5 } else { 0.0 };
            let p50 = (mu + 0.9 * sample_normal(&mut rng)).exp();
            let stopped = Percentiles {
                p20: 0.45 * p50,
                p40: 0.75 * p50,
                p50,
                p60: 1.3 * p50,
                p80: 1.9 * p50,
            };
            let from_first = stopped.scale(0.6);
            let dist = stopped.scale(25.0); // meters scale
            (stopped, from_first, dist)
        };

        records.push(TripRecord {
            row_id,
            intersection_id: inter.id,
            city: inter.city,
            latitude: inter.lat,
            longitude: inter.lon,
            entry_street,
            exit_street,
            entry_heading,
            exit_heading,
            hour,
            weekend,
            month,
            total_time_stopped: stopped,
            time_from_first_stop: from_first,
            distance_to_first_stop: dist,
        });
    }
    let dataset = Dataset::new(records, format!("synthetic seed={}", config.seed));
    for r in &dataset.records {
        debug_assert!(validate_record(r).is_empty());
    }
    Ok(dataset)
}
