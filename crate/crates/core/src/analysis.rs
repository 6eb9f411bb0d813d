//! Busy-intersection counts per city and hour, plus plot-ready CSV
//! exports for cluster maps and busy-hour curves.

use crate::cluster::KMeansResult;
use crate::core_data::Dataset;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid threshold: {0}")]
    BadThreshold(f64),
    #[error("cluster assignments cover {got} points but {expected} intersections were given")]
    AssignmentMismatch { expected: usize, got: usize },
    #[error("city {0} not present in the busy table")]
    UnknownCity(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusyRow {
    pub city: u8,
    pub hour: u8,
    pub busy_count: usize,
    pub total_intersections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusyTable {
    /// 24 hour-rows per city, ordered by (city, hour).
    pub rows: Vec<BusyRow>,
    pub threshold_minutes: f64,
    /// (intersection, hour) pairs that met the threshold; feeds the
    /// per-intersection map export.
    pub busy_pairs: BTreeSet<(u64, u8)>,
}

/// An intersection is busy at hour h when the mean of its p50 stopped
/// times over records at that hour reaches the threshold (inclusive).
/// Intersections with no records at h are not busy at h.
pub fn busy_table(dataset: &Dataset, threshold_minutes: f64) -> Result<BusyTable, AnalysisError> {
    if dataset.records.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    if !(threshold_minutes > 0.0) {
        return Err(AnalysisError::BadThreshold(threshold_minutes));
    }
    let mut sums: BTreeMap<(u64, u8), (f64, usize)> = BTreeMap::new();
    let mut city_of: BTreeMap<u64, u8> = BTreeMap::new();
    for r in &dataset.records {
        let entry = sums.entry((r.intersection_id, r.hour)).or_insert((0.0, 0));
        entry.0 += r.total_time_stopped.p50;
        entry.1 += 1;
        city_of.insert(r.intersection_id, r.city);
    }
    let mut busy_pairs = BTreeSet::new();
    let mut busy_counts: BTreeMap<(u8, u8), usize> = BTreeMap::new();
    for (&(intersection, hour), &(sum, count)) in &sums {
        if sum / count as f64 >= threshold_minutes {
            busy_pairs.insert((intersection, hour));
            *busy_counts.entry((city_of[&intersection], hour)).or_insert(0) += 1;
        }
    }
    let mut totals: BTreeMap<u8, usize> = BTreeMap::new();
    for city in city_of.values() {
        *totals.entry(*city).or_insert(0) += 1;
    }
    let mut rows = Vec::with_capacity(totals.len() * 24);
    for (&city, &total) in &totals {
        for hour in 0..24u8 {
            rows.push(BusyRow {
                city,
                hour,
                busy_count: busy_counts.get(&(city, hour)).copied().unwrap_or(0),
                total_intersections: total,
            });
        }
    }
    Ok(BusyTable {
        rows,
        threshold_minutes,
        busy_pairs,
    })
}

/// Which plot-ready table to render.
pub enum PlotData<'a> {
    /// One row per intersection: `lat,lon,cluster,city`.
    Clusters {
        /// (intersection_id, city, lat, lon) in the order the clustering saw
        /// them.
        intersections: &'a [(u64, u8, f64, f64)],
        clusters: &'a KMeansResult,
    },
    /// One row per (city, hour): `city,hour,busy_count`.
    BusyCurve { table: &'a BusyTable },
    /// One row per intersection of one city:
    /// `city,intersection_id,lat,lon,busy_any_hour`.
    CityMap {
        dataset: &'a Dataset,
        table: &'a BusyTable,
        city: u8,
    },
}

/// Renders the requested table, sorted by its first two columns so
/// repeated exports are byte-identical.
pub fn export_plot_data(what: &PlotData) -> Result<String, AnalysisError> {
    match what {
        PlotData::Clusters {
            intersections,
            clusters,
        } => {
            if clusters.assignments.len() != intersections.len() {
                return Err(AnalysisError::AssignmentMismatch {
                    expected: intersections.len(),
                    got: clusters.assignments.len(),
                });
            }
            let mut rows: Vec<(f64, f64, usize, u8)> = intersections
                .iter()
                .zip(&clusters.assignments)
                .map(|(&(_, city, lat, lon), &cluster)| (lat, lon, cluster, city))
                .collect();
            rows.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then(a.1.partial_cmp(&b.1).unwrap())
            });
            let mut out = String::from("lat,lon,cluster,city\n");
            for (lat, lon, cluster, city) in rows {
                out.push_str(&format!("{lat},{lon},{cluster},{city}\n"));
            }
            Ok(out)
        }
        PlotData::BusyCurve { table } => {
            let mut rows: Vec<&BusyRow> = table.rows.iter().collect();
            rows.sort_by_key(|r| (r.city, r.hour));
            let mut out = String::from("city,hour,busy_count\n");
            for r in rows {
                out.push_str(&format!("{},{},{}\n", r.city, r.hour, r.busy_count));
            }
            Ok(out)
        }
        PlotData::CityMap {
            dataset,
            table,
            city,
        } => {
            if !table.rows.iter().any(|r| r.city == *city) {
                return Err(AnalysisError::UnknownCity(*city));
            }
            let mut seen: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            for r in &dataset.records {
                if r.city == *city {
                    seen.entry(r.intersection_id)
                        .or_insert((r.latitude, r.longitude));
                }
            }
            let mut out = String::from("city,intersection_id,lat,lon,busy_any_hour\n");
            for (id, (lat, lon)) in seen {
                let busy = (0..24u8).any(|h| table.busy_pairs.contains(&(id, h)));
                out.push_str(&format!("{city},{id},{lat},{lon},{}\n", u8::from(busy)));
            }
            Ok(out)
        }
    }
}
