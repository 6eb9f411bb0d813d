//! Engineered features and the design-matrix builder: street counts,
//! direction encoding, road types, downtown/outskirts distances, weather
//! joins, min-max scaling, and one-hot/label encoding.

use crate::core_data::{circular_difference, Dataset, TripRecord};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use thiserror::Error;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("configuration error: no geo entry for city {0}")]
    UnknownCity(u8),
    #[error("configuration error: duplicate weather key (city={0}, month={1})")]
    DuplicateWeatherKey(u8, u8),
    #[error("configuration error: weather percentage out of [0,100] at (city={0}, month={1})")]
    WeatherOutOfRange(u8, u8),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown feature source `{0}`")]
    UnknownSource(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("sidecar parse error: {0}")]
    Sidecar(String),
}

/// Great-circle distance in kilometers.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().atan2((1.0 - a).sqrt())
}

/// Per-intersection entry/exit street counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreetCounts {
    pub entry_count: i64,
    pub exit_count: i64,
    pub exit_minus_entry: i64,
}

/// Counts distinct non-absent entry and exit street names per intersection.
/// Returns the table plus the ids of intersections with zero entries or
/// zero exits (the source data asserts at least one of each).
pub fn count_streets(dataset: &Dataset) -> (BTreeMap<u64, StreetCounts>, Vec<u64>) {
    let mut entries: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
    let mut exits: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
    for r in &dataset.records {
        entries.entry(r.intersection_id).or_default();
        exits.entry(r.intersection_id).or_default();
        if let Some(s) = &r.entry_street {
            entries.get_mut(&r.intersection_id).unwrap().insert(s);
        }
        if let Some(s) = &r.exit_street {
            exits.get_mut(&r.intersection_id).unwrap().insert(s);
        }
    }
    let mut table = BTreeMap::new();
    let mut warnings = Vec::new();
    for (id, entry_set) in &entries {
        let entry_count = entry_set.len() as i64;
        let exit_count = exits[id].len() as i64;
        if entry_count == 0 || exit_count == 0 {
            warnings.push(*id);
        }
        table.insert(
            *id,
            StreetCounts {
                entry_count,
                exit_count,
                exit_minus_entry: exit_count - entry_count,
            },
        );
    }
    (table, warnings)
}

/// Numeric direction codes plus the clockwise turn between entry and exit.
pub fn encode_directions(record: &TripRecord) -> (u8, u8, u8) {
    let entry = record.entry_heading.code();
    let exit = record.exit_heading.code();
    let turn = circular_difference(record.entry_heading, record.exit_heading);
    (entry, exit, turn)
}

/// Canonical road-type categories recognized from street-name suffixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoadType {
    Street,
    Lane,
    Boulevard,
    Broad,
    Drive,
    Avenue,
    Road,
    Way,
    Place,
    Court,
    Parkway,
    Unknown,
}

impl RoadType {
    pub fn as_str(self) -> &'static str {
        match self {
            RoadType::Street => "Street",
            RoadType::Lane => "Lane",
            RoadType::Boulevard => "Boulevard",
            RoadType::Broad => "Broad",
            RoadType::Drive => "Drive",
            RoadType::Avenue => "Avenue",
            RoadType::Road => "Road",
            RoadType::Way => "Way",
            RoadType::Place => "Place",
            RoadType::Court => "Court",
            RoadType::Parkway => "Parkway",
            RoadType::Unknown => "Unknown",
        }
    }
}

/// Classifies a street name by its final whitespace-delimited token,
/// case-insensitively. Absent or unmatched names map to `Unknown`.
pub fn road_type(street_name: Option<&str>) -> RoadType {
    let Some(name) = street_name else {
        return RoadType::Unknown;
    };
    let Some(last) = name.split_whitespace().last() else {
        return RoadType::Unknown;
    };
    match last.to_ascii_lowercase().as_str() {
        "street" | "st" => RoadType::Street,
        "lane" | "ln" => RoadType::Lane,
        "boulevard" | "blvd" => RoadType::Boulevard,
        "broad" => RoadType::Broad,
        "drive" | "dr" => RoadType::Drive,
        "avenue" | "ave" => RoadType::Avenue,
        "road" | "rd" => RoadType::Road,
        "way" => RoadType::Way,
        "place" | "pl" => RoadType::Place,
        "court" | "ct" => RoadType::Court,
        "parkway" | "pkwy" => RoadType::Parkway,
        _ => RoadType::Unknown,
    }
}

/// Per-city downtown location and outskirts radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityGeo {
    pub city: u8,
    pub downtown: (f64, f64),
    /// Blank means "derive from data" (95th percentile of downtown distances).
    pub outskirts_radius_km: Option<f64>,
}

/// Per-intersection distances to downtown and to the outskirts boundary.
pub fn distance_features(
    dataset: &Dataset,
    geo: &[CityGeo],
) -> Result<BTreeMap<u64, (f64, f64)>, FeatureError> {
    let geo_by_city: HashMap<u8, &CityGeo> = geo.iter().map(|g| (g.city, g)).collect();
    let inters = dataset.intersections();
    let mut downtown_km: BTreeMap<u64, (u8, f64)> = BTreeMap::new();
    for (id, city, lat, lon) in &inters {
        let g = geo_by_city
            .get(city)
            .ok_or(FeatureError::UnknownCity(*city))?;
        let d = haversine_km(*lat, *lon, g.downtown.0, g.downtown.1);
        downtown_km.insert(*id, (*city, d));
    }
    // Data-derived radius: 95th percentile of downtown distances per city.
    let mut radius: HashMap<u8, f64> = HashMap::new();
    for g in geo {
        if let Some(r) = g.outskirts_radius_km {
            radius.insert(g.city, r);
        } else {
            let mut dists: Vec<f64> = downtown_km
                .values()
                .filter(|(c, _)| *c == g.city)
                .map(|(_, d)| *d)
                .collect();
            if dists.is_empty() {
                continue;
            }
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let idx = ((dists.len() as f64 - 1.0) * 0.95).round() as usize;
            radius.insert(g.city, dists[idx]);
        }
    }
    let mut out = BTreeMap::new();
    for (id, (city, d)) in downtown_km {
        let r = radius.get(&city).copied().unwrap_or(0.0);
        out.insert(id, (d, (r - d).max(0.0)));
    }
    Ok(out)
}

/// Static (city, month) weather table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeatherTable {
    pub rows: Vec<WeatherRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRow {
    pub city: u8,
    pub month: u8,
    pub rain_pct: f64,
    pub snow_pct: f64,
}

impl WeatherTable {
    fn lookup(&self) -> Result<HashMap<(u8, u8), (f64, f64)>, FeatureError> {
        let mut map = HashMap::new();
        for row in &self.rows {
            if !(0.0..=100.0).contains(&row.rain_pct) || !(0.0..=100.0).contains(&row.snow_pct) {
                return Err(FeatureError::WeatherOutOfRange(row.city, row.month));
            }
            if map
                .insert((row.city, row.month), (row.rain_pct, row.snow_pct))
                .is_some()
            {
                return Err(FeatureError::DuplicateWeatherKey(row.city, row.month));
            }
        }
        Ok(map)
    }
}

/// Per-record (rain_pct, snow_pct) by exact (city, month) lookup. Missing
/// keys default to (0, 0) and are reported once each.
pub fn join_weather(
    dataset: &Dataset,
    table: &WeatherTable,
) -> Result<(Vec<(f64, f64)>, Vec<(u8, u8)>), FeatureError> {
    let map = table.lookup()?;
    let mut out = Vec::with_capacity(dataset.len());
    let mut missing = BTreeSet::new();
    for r in &dataset.records {
        match map.get(&(r.city, r.month)) {
            Some(&(rain, snow)) => out.push((rain, snow)),
            None => {
                missing.insert((r.city, r.month));
                out.push((0.0, 0.0));
            }
        }
    }
    Ok((out, missing.into_iter().collect()))
}

/// How a source column enters the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    OneHot,
    Label,
}

/// One requested feature column: output name, encoding kind, and the
/// feature source identifier it reads from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub source: String,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind, source: &str) -> ColumnSpec {
        ColumnSpec {
            name: name.to_string(),
            kind,
            source: source.to_string(),
        }
    }
    pub fn continuous(name: &str) -> ColumnSpec {
        Self::new(name, ColumnKind::Continuous, name)
    }
}

/// The default modeling feature set; weather columns are optional so the
/// ablation comparison can toggle them.
pub fn default_feature_spec(with_weather: bool) -> Vec<ColumnSpec> {
    let mut spec = vec![
        ColumnSpec::continuous("hour"),
        ColumnSpec::continuous("weekend"),
        ColumnSpec::continuous("month"),
        ColumnSpec::continuous("entry_count"),
        ColumnSpec::continuous("exit_count"),
        ColumnSpec::continuous("exit_minus_entry"),
        ColumnSpec::continuous("downtown_km"),
        ColumnSpec::continuous("outskirts_km"),
        ColumnSpec::continuous("turn"),
        ColumnSpec::new("entry_road_type", ColumnKind::OneHot, "entry_road_type"),
        ColumnSpec::new("exit_road_type", ColumnKind::OneHot, "exit_road_type"),
    ];
    if with_weather {
        spec.push(ColumnSpec::continuous("rain_pct"));
        spec.push(ColumnSpec::continuous("snow_pct"));
    }
    spec
}

enum SourceValue {
    Num(f64),
    Cat(String),
}

struct RowContext<'a> {
    streets: &'a BTreeMap<u64, StreetCounts>,
    distances: &'a BTreeMap<u64, (f64, f64)>,
    weather: &'a [(f64, f64)],
}

fn source_value(
    r: &TripRecord,
    row: usize,
    ctx: &RowContext,
    source: &str,
) -> Result<SourceValue, FeatureError> {
    use SourceValue::{Cat, Num};
    let v = match source {
        "hour" => Num(r.hour as f64),
        "weekend" => Num(if r.weekend { 1.0 } else { 0.0 }),
        "month" => Num(r.month as f64),
        "latitude" => Num(r.latitude),
        "longitude" => Num(r.longitude),
        "entry_heading_code" => Num(r.entry_heading.code() as f64),
        "exit_heading_code" => Num(r.exit_heading.code() as f64),
        "turn" => Num(encode_directions(r).2 as f64),
        "entry_count" => Num(ctx.streets[&r.intersection_id].entry_count as f64),
        "exit_count" => Num(ctx.streets[&r.intersection_id].exit_count as f64),
        "exit_minus_entry" => Num(ctx.streets[&r.intersection_id].exit_minus_entry as f64),
        "downtown_km" => Num(ctx.distances[&r.intersection_id].0),
        "outskirts_km" => Num(ctx.distances[&r.intersection_id].1),
        "rain_pct" => Num(ctx.weather[row].0),
        "snow_pct" => Num(ctx.weather[row].1),
        "total_time_stopped_p20" => Num(r.total_time_stopped.p20),
        "total_time_stopped_p40" => Num(r.total_time_stopped.p40),
        "total_time_stopped_p50" => Num(r.total_time_stopped.p50),
        "total_time_stopped_p60" => Num(r.total_time_stopped.p60),
        "total_time_stopped_p80" => Num(r.total_time_stopped.p80),
        "time_from_first_stop_p50" => Num(r.time_from_first_stop.p50),
        "distance_to_first_stop_p50" => Num(r.distance_to_first_stop.p50),
        "city" => Cat(r.city.to_string()),
        "entry_street" => Cat(r
            .entry_street
            .clone()
            .unwrap_or_else(|| "Unknown".to_string())),
        "exit_street" => Cat(r
            .exit_street
            .clone()
            .unwrap_or_else(|| "Unknown".to_string())),
        "entry_heading" => Cat(r.entry_heading.as_str().to_string()),
        "exit_heading" => Cat(r.exit_heading.as_str().to_string()),
        "entry_road_type" => Cat(road_type(r.entry_street.as_deref()).as_str().to_string()),
        "exit_road_type" => Cat(road_type(r.exit_street.as_deref()).as_str().to_string()),
        other => return Err(FeatureError::UnknownSource(other.to_string())),
    };
    Ok(v)
}

/// One fitted output column of the design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub source: String,
    /// (min, max) for continuous columns.
    pub scaling: Option<(f64, f64)>,
    /// Category → code for label columns ("Unknown" is always code 0).
    pub encoder: Option<BTreeMap<String, usize>>,
    /// The category this indicator column represents, for one-hot columns.
    pub category: Option<String>,
}

/// Dense design matrix with fitted per-column transform parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub columns: Vec<FittedColumn>,
    spec: Vec<ColumnSpec>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_values(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i)[j]).collect()
    }

    /// Re-encodes new data with the fitted parameters: continuous values
    /// are clipped to [0,1], unseen categories map to Unknown / all-zero
    /// indicators.
    pub fn apply(
        &self,
        dataset: &Dataset,
        weather: &WeatherTable,
        geo: &[CityGeo],
    ) -> Result<FeatureMatrix, FeatureError> {
        let ctx_data = build_context(dataset, weather, geo)?;
        let ctx = RowContext {
            streets: &ctx_data.0,
            distances: &ctx_data.1,
            weather: &ctx_data.2,
        };
        let n_rows = dataset.len();
        let mut values = Vec::with_capacity(n_rows * self.n_cols);
        for (row, r) in dataset.records.iter().enumerate() {
            for col in &self.columns {
                let v = source_value(r, row, &ctx, &col.source)?;
                let x = match (col.kind, v) {
                    (ColumnKind::Continuous, SourceValue::Num(x)) => {
                        let (min, max) = col.scaling.unwrap();
                        if max > min {
                            ((x - min) / (max - min)).clamp(0.0, 1.0)
                        } else {
                            0.0
                        }
                    }
                    (ColumnKind::Label, SourceValue::Cat(c)) => {
                        *col.encoder.as_ref().unwrap().get(&c).unwrap_or(&0) as f64
                    }
                    (ColumnKind::OneHot, SourceValue::Cat(c)) => {
                        if col.category.as_deref() == Some(c.as_str()) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    _ => return Err(FeatureError::UnknownSource(col.source.clone())),
                };
                values.push(x);
            }
        }
        Ok(FeatureMatrix {
            values,
            n_rows,
            n_cols: self.n_cols,
            columns: self.columns.clone(),
            spec: self.spec.clone(),
        })
    }
}

type Context = (
    BTreeMap<u64, StreetCounts>,
    BTreeMap<u64, (f64, f64)>,
    Vec<(f64, f64)>,
);

fn build_context(
    dataset: &Dataset,
    weather: &WeatherTable,
    geo: &[CityGeo],
) -> Result<Context, FeatureError> {
    let (streets, _) = count_streets(dataset);
    let distances = distance_features(dataset, geo)?;
    let (weather_vals, _) = join_weather(dataset, weather)?;
    Ok((streets, distances, weather_vals))
}

/// Fits the design matrix on `dataset`: min-max parameters from the data,
/// category sets from observed values, label codes with Unknown = 0.
pub fn build_feature_matrix(
    dataset: &Dataset,
    spec: &[ColumnSpec],
    weather: &WeatherTable,
    geo: &[CityGeo],
) -> Result<FeatureMatrix, FeatureError> {
    if dataset.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let mut names = BTreeSet::new();
    for c in spec {
        if !names.insert(&c.name) {
            return Err(FeatureError::DuplicateColumn(c.name.clone()));
        }
    }
    let ctx_data = build_context(dataset, weather, geo)?;
    let ctx = RowContext {
        streets: &ctx_data.0,
        distances: &ctx_data.1,
        weather: &ctx_data.2,
    };

    // First pass: gather raw values per requested column.
    let n_rows = dataset.len();
    let mut raw: Vec<Vec<SourceValue>> = Vec::with_capacity(spec.len());
    for c in spec {
        let mut col = Vec::with_capacity(n_rows);
        for (row, r) in dataset.records.iter().enumerate() {
            col.push(source_value(r, row, &ctx, &c.source)?);
        }
        raw.push(col);
    }

    // Second pass: fit transforms and expand to output columns.
    let mut columns: Vec<FittedColumn> = Vec::new();
    let mut outputs: Vec<Vec<f64>> = Vec::new();
    for (c, col) in spec.iter().zip(raw) {
        match c.kind {
            ColumnKind::Continuous => {
                let xs: Vec<f64> = col
                    .iter()
                    .map(|v| match v {
                        SourceValue::Num(x) => Ok(*x),
                        SourceValue::Cat(_) => Err(FeatureError::UnknownSource(c.source.clone())),
                    })
                    .collect::<Result<_, _>>()?;
                let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let scaled: Vec<f64> = if max > min {
                    xs.iter().map(|x| (x - min) / (max - min)).collect()
                } else {
                    vec![0.0; xs.len()] // constant column
                };
                columns.push(FittedColumn {
                    name: c.name.clone(),
                    kind: ColumnKind::Continuous,
                    source: c.source.clone(),
                    scaling: Some((min, max)),
                    encoder: None,
                    category: None,
                });
                outputs.push(scaled);
            }
            ColumnKind::Label => {
                let cats: Vec<&str> = col
                    .iter()
                    .map(|v| match v {
                        SourceValue::Cat(s) => Ok(s.as_str()),
                        SourceValue::Num(_) => Err(FeatureError::UnknownSource(c.source.clone())),
                    })
                    .collect::<Result<_, _>>()?;
                let mut encoder: BTreeMap<String, usize> = BTreeMap::new();
                encoder.insert("Unknown".to_string(), 0);
                let mut observed: BTreeSet<&str> = cats.iter().copied().collect();
                observed.remove("Unknown");
                for (i, cat) in observed.iter().enumerate() {
                    encoder.insert(cat.to_string(), i + 1);
                }
                let encoded: Vec<f64> = cats.iter().map(|s| encoder[*s] as f64).collect();
                columns.push(FittedColumn {
                    name: c.name.clone(),
                    kind: ColumnKind::Label,
                    source: c.source.clone(),
                    scaling: None,
                    encoder: Some(encoder),
                    category: None,
                });
                outputs.push(encoded);
            }
            ColumnKind::OneHot => {
                let cats: Vec<&str> = col
                    .iter()
                    .map(|v| match v {
                        SourceValue::Cat(s) => Ok(s.as_str()),
                        SourceValue::Num(_) => Err(FeatureError::UnknownSource(c.source.clone())),
                    })
                    .collect::<Result<_, _>>()?;
                let observed: BTreeSet<&str> = cats.iter().copied().collect();
                for cat in observed {
                    let indicator: Vec<f64> = cats
                        .iter()
                        .map(|s| if *s == cat { 1.0 } else { 0.0 })
                        .collect();
                    columns.push(FittedColumn {
                        name: format!("{}={}", c.name, cat),
                        kind: ColumnKind::OneHot,
                        source: c.source.clone(),
                        scaling: None,
                        encoder: None,
                        category: Some(cat.to_string()),
                    });
                    outputs.push(indicator);
                }
            }
        }
    }

    let n_cols = columns.len();
    let mut values = vec![0.0; n_rows * n_cols];
    for (j, col) in outputs.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            debug_assert!(v.is_finite());
            values[i * n_cols + j] = *v;
        }
    }
    Ok(FeatureMatrix {
        values,
        n_rows,
        n_cols,
        columns,
        spec: spec.to_vec(),
    })
}

/// Which percentile metric the models predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    TotalTimeStoppedP20,
    TotalTimeStoppedP40,
    TotalTimeStoppedP50,
    TotalTimeStoppedP60,
    TotalTimeStoppedP80,
}

impl Default for TargetMetric {
    fn default() -> Self {
        TargetMetric::TotalTimeStoppedP50
    }
}

/// Extracts the regression target in minutes (unscaled).
pub fn target_vector(dataset: &Dataset, metric: TargetMetric) -> Vec<f64> {
    dataset
        .records
        .iter()
        .map(|r| match metric {
            TargetMetric::TotalTimeStoppedP20 => r.total_time_stopped.p20,
            TargetMetric::TotalTimeStoppedP40 => r.total_time_stopped.p40,
            TargetMetric::TotalTimeStoppedP50 => r.total_time_stopped.p50,
            TargetMetric::TotalTimeStoppedP60 => r.total_time_stopped.p60,
            TargetMetric::TotalTimeStoppedP80 => r.total_time_stopped.p80,
        })
        .collect()
}

/// Parses the weather sidecar CSV (`city,month,rain_pct,snow_pct`).
pub fn parse_weather_csv<R: Read>(source: R) -> Result<WeatherTable, FeatureError> {
    let mut reader = csv::Reader::from_reader(source);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let (city, month, rain_pct, snow_pct): (u8, u8, f64, f64) =
            record.map_err(|e| FeatureError::Sidecar(e.to_string()))?;
        rows.push(WeatherRow {
            city,
            month,
            rain_pct,
            snow_pct,
        });
    }
    Ok(WeatherTable { rows })
}

/// Parses the geo sidecar CSV
/// (`city,downtown_lat,downtown_lon,outskirts_radius_km`, radius may be blank).
pub fn parse_geo_csv<R: Read>(source: R) -> Result<Vec<CityGeo>, FeatureError> {
    let mut reader = csv::Reader::from_reader(source);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let (city, lat, lon, radius): (u8, f64, f64, Option<f64>) =
            record.map_err(|e| FeatureError::Sidecar(e.to_string()))?;
        rows.push(CityGeo {
            city,
            downtown: (lat, lon),
            outskirts_radius_km: radius,
        });
    }
    Ok(rows)
}

/// Geo table matching the synthetic generator's default city centers.
pub fn default_geo() -> Vec<CityGeo> {
    crate::ingest::SynthConfig::default()
        .city_centers
        .iter()
        .enumerate()
        .map(|(city, &(lat, lon))| CityGeo {
            city: city as u8,
            downtown: (lat, lon),
            outskirts_radius_km: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_data::{CompassHeading, Percentiles};
    use approx::assert_relative_eq;

    fn record(
        row_id: u64,
        intersection_id: u64,
        entry: Option<&str>,
        exit: Option<&str>,
    ) -> TripRecord {
        TripRecord {
            row_id,
            intersection_id,
            city: 0,
            latitude: 33.75,
            longitude: -84.39,
            entry_street: entry.map(str::to_string),
            exit_street: exit.map(str::to_string),
            entry_heading: CompassHeading::N,
            exit_heading: CompassHeading::E,
            hour: 8,
            weekend: false,
            month: 6,
            total_time_stopped: Percentiles::zero(),
            time_from_first_stop: Percentiles::zero(),
            distance_to_first_stop: Percentiles::zero(),
        }
    }

    #[test]
    fn count_streets_counts_distinct_names() {
        let ds = Dataset::new(
            vec![
                record(0, 1, Some("A St"), Some("A St")),
                record(1, 1, Some("B St"), Some("A St")),
                record(2, 1, Some("A St"), None),
            ],
            "test",
        );
        let (table, warnings) = count_streets(&ds);
        assert_eq!(
            table[&1],
            StreetCounts {
                entry_count: 2,
                exit_count: 1,
                exit_minus_entry: -1
            }
        );
        assert!(warnings.is_empty());
    }

    #[test]
    fn count_streets_flags_all_absent() {
        let ds = Dataset::new(vec![record(0, 9, None, None)], "test");
        let (table, warnings) = count_streets(&ds);
        assert_eq!(
            table[&9],
            StreetCounts {
                entry_count: 0,
                exit_count: 0,
                exit_minus_entry: 0
            }
        );
        assert_eq!(warnings, vec![9]);
    }

    #[test]
    fn direction_encoding_examples() {
        let mut r = record(0, 0, None, None);
        r.entry_heading = CompassHeading::N;
        r.exit_heading = CompassHeading::N;
        assert_eq!(encode_directions(&r), (0, 0, 0));
        r.exit_heading = CompassHeading::E;
        assert_eq!(encode_directions(&r), (0, 2, 2));
        r.entry_heading = CompassHeading::NW;
        r.exit_heading = CompassHeading::N;
        assert_eq!(encode_directions(&r), (7, 0, 1));
    }

    #[test]
    fn turn_invariant_under_joint_rotation() {
        for a in CompassHeading::ALL {
            for b in CompassHeading::ALL {
                let base = circular_difference(a, b);
                for shift in 0..8u8 {
                    let ra = CompassHeading::from_code((a.code() + shift) % 8).unwrap();
                    let rb = CompassHeading::from_code((b.code() + shift) % 8).unwrap();
                    assert_eq!(circular_difference(ra, rb), base);
                }
            }
        }
    }

    #[test]
    fn road_type_matches_suffixes() {
        assert_eq!(road_type(Some("Peachtree St")), RoadType::Street);
        assert_eq!(road_type(None), RoadType::Unknown);
        assert_eq!(road_type(Some("BROADWAY BLVD")), RoadType::Boulevard);
        assert_eq!(road_type(Some("Telegraph")), RoadType::Unknown);
        assert_eq!(road_type(Some("Old Mill Pkwy")), RoadType::Parkway);
    }

    #[test]
    fn haversine_equator_degree() {
        // One degree of longitude on the equator.
        let d = haversine_km(0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(d, 111.19, epsilon = 0.01);
    }

    #[test]
    fn distance_features_at_downtown() {
        let ds = Dataset::new(vec![record(0, 0, None, None)], "test");
        let geo = vec![CityGeo {
            city: 0,
            downtown: (33.75, -84.39),
            outskirts_radius_km: Some(12.0),
        }];
        let d = distance_features(&ds, &geo).unwrap();
        assert_relative_eq!(d[&0].0, 0.0, epsilon = 1e-9);
        assert_relative_eq!(d[&0].1, 12.0, epsilon = 1e-9);
    }

    #[test]
    fn distance_features_clamps_beyond_radius() {
        let mut far = record(0, 0, None, None);
        far.latitude = 34.5;
        let ds = Dataset::new(vec![far], "test");
        let geo = vec![CityGeo {
            city: 0,
            downtown: (33.75, -84.39),
            outskirts_radius_km: Some(10.0),
        }];
        let d = distance_features(&ds, &geo).unwrap();
        assert!(d[&0].0 > 10.0);
        assert_eq!(d[&0].1, 0.0);
    }

    #[test]
    fn distance_features_unknown_city_errors() {
        let ds = Dataset::new(vec![record(0, 0, None, None)], "test");
        assert!(matches!(
            distance_features(&ds, &[]),
            Err(FeatureError::UnknownCity(0))
        ));
    }

    #[test]
    fn weather_lookup_and_default() {
        let mut r1 = record(0, 0, None, None);
        r1.city = 1;
        r1.month = 7;
        let mut r2 = record(1, 0, None, None);
        r2.city = 2;
        r2.month = 3;
        let ds = Dataset::new(vec![r1, r2], "test");
        let table = WeatherTable {
            rows: vec![WeatherRow {
                city: 1,
                month: 7,
                rain_pct: 40.0,
                snow_pct: 0.0,
            }],
        };
        let (vals, missing) = join_weather(&ds, &table).unwrap();
        assert_eq!(vals, vec![(40.0, 0.0), (0.0, 0.0)]);
        assert_eq!(missing, vec![(2, 3)]);
    }

    #[test]
    fn duplicate_weather_key_is_error() {
        let ds = Dataset::new(vec![record(0, 0, None, None)], "test");
        let table = WeatherTable {
            rows: vec![
                WeatherRow {
                    city: 1,
                    month: 7,
                    rain_pct: 40.0,
                    snow_pct: 0.0,
                },
                WeatherRow {
                    city: 1,
                    month: 7,
                    rain_pct: 10.0,
                    snow_pct: 0.0,
                },
            ],
        };
        assert!(matches!(
            join_weather(&ds, &table),
            Err(FeatureError::DuplicateWeatherKey(1, 7))
        ));
    }

    fn geo0() -> Vec<CityGeo> {
        vec![CityGeo {
            city: 0,
            downtown: (33.75, -84.39),
            outskirts_radius_km: Some(10.0),
        }]
    }

    #[test]
    fn min_max_scaling_definition() {
        let mut records = Vec::new();
        for (i, h) in [2u8, 4, 6].iter().enumerate() {
            let mut r = record(i as u64, i as u64, None, None);
            r.hour = *h;
            records.push(r);
        }
        let ds = Dataset::new(records, "test");
        let spec = vec![ColumnSpec::continuous("hour")];
        let fm = build_feature_matrix(&ds, &spec, &WeatherTable::default(), &geo0()).unwrap();
        assert_eq!(fm.column_values(0), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn one_hot_expansion() {
        let records = vec![
            record(0, 0, Some("X Lane"), None),
            record(1, 1, Some("Y Blvd"), None),
            record(2, 2, Some("X Lane"), None),
        ];
        let ds = Dataset::new(records, "test");
        let spec = vec![ColumnSpec::new(
            "entry_road_type",
            ColumnKind::OneHot,
            "entry_road_type",
        )];
        let fm = build_feature_matrix(&ds, &spec, &WeatherTable::default(), &geo0()).unwrap();
        let b = fm.column_index("entry_road_type=Boulevard").unwrap();
        let l = fm.column_index("entry_road_type=Lane").unwrap();
        assert_eq!(fm.column_values(l), vec![1.0, 0.0, 1.0]);
        assert_eq!(fm.column_values(b), vec![0.0, 1.0, 0.0]);
        // rows sum to 1 for seen categories
        for i in 0..3 {
            assert_eq!(fm.row(i).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn label_encoding_reserves_unknown_zero() {
        let records = vec![
            record(0, 0, Some("B St"), None),
            record(1, 1, None, None),
            record(2, 2, Some("A St"), None),
        ];
        let ds = Dataset::new(records, "test");
        let spec = vec![ColumnSpec::new(
            "entry_street",
            ColumnKind::Label,
            "entry_street",
        )];
        let fm = build_feature_matrix(&ds, &spec, &WeatherTable::default(), &geo0()).unwrap();
        let enc = fm.columns[0].encoder.as_ref().unwrap();
        assert_eq!(enc["Unknown"], 0);
        assert_eq!(fm.column_values(0), vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn apply_clips_and_maps_unseen() {
        let mut records = Vec::new();
        for (i, h) in [2u8, 6].iter().enumerate() {
            let mut r = record(i as u64, i as u64, Some("A St"), None);
            r.hour = *h;
            records.push(r);
        }
        let ds = Dataset::new(records, "test");
        let spec = vec![
            ColumnSpec::continuous("hour"),
            ColumnSpec::new("entry_road_type", ColumnKind::OneHot, "entry_road_type"),
        ];
        let fm = build_feature_matrix(&ds, &spec, &WeatherTable::default(), &geo0()).unwrap();

        let mut new = record(0, 0, Some("Z Pkwy"), None);
        new.hour = 23; // above training max of 6
        let new_ds = Dataset::new(vec![new], "test");
        let applied = fm.apply(&new_ds, &WeatherTable::default(), &geo0()).unwrap();
        assert_eq!(applied.row(0)[0], 1.0); // clipped
        // Parkway unseen at fit time: all indicator columns zero.
        assert_eq!(applied.row(0)[1..].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn apply_is_idempotent_on_training_data() {
        let ds = crate::ingest::generate_synthetic(&crate::ingest::SynthConfig {
            rows: 200,
            intersections_per_city: vec![5, 5, 5, 5],
            ..Default::default()
        })
        .unwrap();
        let spec = default_feature_spec(false);
        let fm = build_feature_matrix(&ds, &spec, &WeatherTable::default(), &default_geo()).unwrap();
        let applied = fm.apply(&ds, &WeatherTable::default(), &default_geo()).unwrap();
        for (a, b) in fm.values.iter().zip(&applied.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
