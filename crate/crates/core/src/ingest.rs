//! Sales records, the region coordinate system, and repeat-sale pairing.
//!
//! Parsing lives in the IO layer; this module takes already validated
//! records and turns them into the regression's observation rows: one
//! log-price difference per consecutive pair of sales of the same property.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::time::{Date, TimeGrid};

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("record references region `{0}` absent from the region index")]
    UnknownRegion(String),
    #[error("region `{region}` is claimed by both parent `{first}` and parent `{second}`")]
    ConflictingParent { region: String, first: String, second: String },
    #[error("sale of property `{property_id}` on {date} falls outside the index window")]
    DateOutsideWindow { property_id: String, date: Date },
    #[error("property `{0}` has a non-positive price; records must be validated upstream")]
    NonPositivePrice(String),
    #[error("no regions present")]
    NoRegions,
}

/// One validated sale. Coordinates are informational only; regions come
/// from the stated code, never from geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SalesRecord {
    pub property_id: String,
    /// Transaction price in currency units; must be positive.
    pub price: f64,
    pub sale_date: Date,
    /// Granular region code (the unit the index is estimated for).
    pub region_code: String,
    /// Coarser region code used to batch the estimation.
    pub parent_region_code: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

/// One observation row: the log-price difference between two consecutive
/// sales of the same property in the same region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatSalePair {
    pub region_index: usize,
    pub first_time: usize,
    pub second_time: usize,
    /// `ln(second price) - ln(first price)`.
    pub log_return: f64,
}

/// Sorted, unique region codes with their parent codes; defines the column
/// order of every downstream panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionIndex {
    codes: Vec<String>,
    parents: Vec<String>,
}

/// Regions estimated together: all children of one parent region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionBatch {
    pub parent: String,
    /// Indices into the region index, ascending.
    pub region_indices: Vec<usize>,
}

impl RegionIndex {
    /// Build from parallel `(region, parent)` pairs; duplicates collapse,
    /// but one region claiming two parents is an error.
    pub fn new<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<Self, IngestError> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (region, parent) in pairs {
            let (region, parent) = (region.as_ref(), parent.as_ref());
            match map.get(region) {
                None => {
                    map.insert(region, parent);
                }
                Some(&existing) if existing == parent => {}
                Some(&existing) => {
                    return Err(IngestError::ConflictingParent {
                        region: String::from(region),
                        first: String::from(existing),
                        second: String::from(parent),
                    });
                }
            }
        }
        if map.is_empty() {
            return Err(IngestError::NoRegions);
        }
        let mut codes = Vec::with_capacity(map.len());
        let mut parents = Vec::with_capacity(map.len());
        for (region, parent) in map {
            codes.push(String::from(region));
            parents.push(String::from(parent));
        }
        Ok(RegionIndex { codes, parents })
    }

    pub fn from_records(records: &[SalesRecord]) -> Result<Self, IngestError> {
        let pairs: Vec<(&str, &str)> = records
            .iter()
            .map(|r| (r.region_code.as_str(), r.parent_region_code.as_str()))
            .collect();
        RegionIndex::new(&pairs)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn code(&self, i: usize) -> &str {
        &self.codes[i]
    }

    pub fn parent(&self, i: usize) -> &str {
        &self.parents[i]
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.codes.binary_search_by(|c| c.as_str().cmp(code)).ok()
    }

    /// Batches grouped by parent code, parents in sorted order.
    pub fn batches(&self) -> Vec<RegionBatch> {
        let mut by_parent: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, parent) in self.parents.iter().enumerate() {
            by_parent.entry(parent.as_str()).or_default().push(i);
        }
        by_parent
            .into_iter()
            .map(|(parent, region_indices)| RegionBatch {
                parent: String::from(parent),
                region_indices,
            })
            .collect()
    }
}

/// Pairing result plus the drop counters the caller must surface.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingOutcome {
    pub pairs: Vec<RepeatSalePair>,
    /// Consecutive sale pairs landing in the same month (no trend signal).
    pub same_month_pairs_dropped: usize,
    /// Properties whose sales span more than one region code.
    pub cross_region_properties_dropped: usize,
}

/// Emit one pair per consecutive sale of each property sold more than once.
///
/// Sales are ordered by date (then price, then input order). A property
/// listed under two region codes is dropped whole; a pair whose sales share
/// a month is dropped individually. Both cases are counted, not silent.
pub fn pair_repeat_sales(
    records: &[SalesRecord],
    regions: &RegionIndex,
    grid: &TimeGrid,
) -> Result<PairingOutcome, IngestError> {
    let mut by_property: BTreeMap<&str, Vec<&SalesRecord>> = BTreeMap::new();
    for record in records {
        if record.price <= 0.0 || !record.price.is_finite() {
            return Err(IngestError::NonPositivePrice(record.property_id.clone()));
        }
        if !grid.contains_date(record.sale_date) {
            return Err(IngestError::DateOutsideWindow {
                property_id: record.property_id.clone(),
                date: record.sale_date,
            });
        }
        by_property.entry(record.property_id.as_str()).or_default().push(record);
    }

    let mut outcome = PairingOutcome {
        pairs: Vec::new(),
        same_month_pairs_dropped: 0,
        cross_region_properties_dropped: 0,
    };

    for (_, mut sales) in by_property {
        if sales.len() < 2 {
            continue;
        }
        if sales.windows(2).any(|w| w[0].region_code != w[1].region_code) {
            outcome.cross_region_properties_dropped += 1;
            continue;
        }
        let region_index = regions
            .index_of(&sales[0].region_code)
            .ok_or_else(|| IngestError::UnknownRegion(sales[0].region_code.clone()))?;
        // Stable sort: date, then price, then input order.
        sales.sort_by(|a, b| {
            a.sale_date
                .cmp(&b.sale_date)
                .then(a.price.partial_cmp(&b.price).unwrap_or(core::cmp::Ordering::Equal))
        });
        for w in sales.windows(2) {
            let first_time = grid.index_of(w[0].sale_date.month_key()).expect("date checked");
            let second_time = grid.index_of(w[1].sale_date.month_key()).expect("date checked");
            if first_time == second_time {
                outcome.same_month_pairs_dropped += 1;
                continue;
            }
            outcome.pairs.push(RepeatSalePair {
                region_index,
                first_time,
                second_time,
                log_return: w[1].price.ln() - w[0].price.ln(),
            });
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Month;
    use alloc::string::ToString;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn record(id: &str, price: f64, y: i32, m: u32, d: u32, sa2: &str, sa4: &str) -> SalesRecord {
        SalesRecord {
            property_id: id.to_string(),
            price,
            sale_date: Date::new(y, m, d).unwrap(),
            region_code: sa2.to_string(),
            parent_region_code: sa4.to_string(),
            latitude: None,
            longitude: None,
        }
    }

    fn grid_2010(len: usize) -> TimeGrid {
        TimeGrid::new(Month::new(2010, 1).unwrap(), len).unwrap()
    }

    #[test]
    fn single_pair_has_log_ratio_return() {
        // Sales in months 3 and 9 (0-based) at 100000 -> 121000: one pair, ln(1.21).
        let records = vec![
            record("A", 100_000.0, 2010, 4, 10, "X", "P"),
            record("A", 121_000.0, 2010, 10, 2, "X", "P"),
        ];
        let regions = RegionIndex::from_records(&records).unwrap();
        let out = pair_repeat_sales(&records, &regions, &grid_2010(12)).unwrap();
        assert_eq!(out.pairs.len(), 1);
        let pair = out.pairs[0];
        assert_eq!((pair.first_time, pair.second_time), (3, 9));
        assert_abs_diff_eq!(pair.log_return, 1.21_f64.ln(), epsilon = 1e-12);
        assert_eq!(out.same_month_pairs_dropped, 0);
        assert_eq!(out.cross_region_properties_dropped, 0);
    }

    #[test]
    fn single_sale_yields_no_pairs() {
        let records = vec![record("A", 500_000.0, 2010, 3, 15, "X", "P")];
        let regions = RegionIndex::from_records(&records).unwrap();
        let out = pair_repeat_sales(&records, &regions, &grid_2010(6)).unwrap();
        assert!(out.pairs.is_empty());
    }

    #[test]
    fn swapping_sales_negates_log_return() {
        let a = vec![
            record("A", 250_000.0, 2010, 2, 1, "X", "P"),
            record("A", 300_000.0, 2010, 5, 1, "X", "P"),
        ];
        let b = vec![
            record("A", 300_000.0, 2010, 2, 1, "X", "P"),
            record("A", 250_000.0, 2010, 5, 1, "X", "P"),
        ];
        let regions = RegionIndex::from_records(&a).unwrap();
        let grid = grid_2010(6);
        let ra = pair_repeat_sales(&a, &regions, &grid).unwrap().pairs[0].log_return;
        let rb = pair_repeat_sales(&b, &regions, &grid).unwrap().pairs[0].log_return;
        assert_eq!(ra, -rb);
    }

    #[test]
    fn same_month_pair_dropped_and_counted() {
        let records = vec![
            record("A", 100.0, 2010, 2, 3, "X", "P"),
            record("A", 110.0, 2010, 2, 25, "X", "P"),
            record("A", 130.0, 2010, 6, 1, "X", "P"),
        ];
        let regions = RegionIndex::from_records(&records).unwrap();
        let out = pair_repeat_sales(&records, &regions, &grid_2010(6)).unwrap();
        // Three sales give two consecutive pairs; the first shares a month.
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.same_month_pairs_dropped, 1);
        assert_eq!((out.pairs[0].first_time, out.pairs[0].second_time), (1, 5));
    }

    #[test]
    fn cross_region_property_dropped_whole() {
        let records = vec![
            record("A", 100.0, 2010, 1, 3, "X", "P"),
            record("A", 120.0, 2010, 4, 3, "Y", "P"),
            record("A", 140.0, 2010, 6, 3, "X", "P"),
            record("B", 100.0, 2010, 1, 3, "Y", "P"),
            record("B", 150.0, 2010, 5, 3, "Y", "P"),
        ];
        let regions = RegionIndex::from_records(&records).unwrap();
        let out = pair_repeat_sales(&records, &regions, &grid_2010(6)).unwrap();
        assert_eq!(out.cross_region_properties_dropped, 1);
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.pairs[0].region_index, regions.index_of("Y").unwrap());
    }

    #[test]
    fn region_index_is_sorted_and_batched_by_parent() {
        let idx = RegionIndex::new(&[("C", "P2"), ("A", "P1"), ("B", "P2"), ("A", "P1")]).unwrap();
        assert_eq!(idx.codes(), &["A".to_string(), "B".to_string(), "C".to_string()]);
        assert_eq!(idx.parent(0), "P1");
        let batches = idx.batches();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].parent, "P1");
        assert_eq!(batches[0].region_indices, vec![0]);
        assert_eq!(batches[1].region_indices, vec![1, 2]);
        assert_eq!(
            RegionIndex::new(&[("A", "P1"), ("A", "P2")]),
            Err(IngestError::ConflictingParent {
                region: "A".to_string(),
                first: "P1".to_string(),
                second: "P2".to_string(),
            })
        );
    }

    #[test]
    fn out_of_window_date_is_an_error() {
        let records = vec![
            record("A", 100.0, 2009, 12, 3, "X", "P"),
            record("A", 120.0, 2010, 4, 3, "X", "P"),
        ];
        let regions = RegionIndex::from_records(&records).unwrap();
        let err = pair_repeat_sales(&records, &regions, &grid_2010(6)).unwrap_err();
        assert!(matches!(err, IngestError::DateOutsideWindow { .. }));
    }

    /// Brute-force pairing oracle: enumerate every property, order its sales
    /// by (date, price), list all consecutive index pairs.
    fn oracle_pairs(records: &[SalesRecord], grid: &TimeGrid) -> (usize, usize, usize) {
        let mut ids: Vec<&str> = records.iter().map(|r| r.property_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        let (mut kept, mut same_month, mut cross) = (0usize, 0usize, 0usize);
        for id in ids {
            let mut sales: Vec<&SalesRecord> =
                records.iter().filter(|r| r.property_id == id).collect();
            if sales.len() < 2 {
                continue;
            }
            let regions: Vec<&str> = sales.iter().map(|r| r.region_code.as_str()).collect();
            if regions.iter().any(|&r| r != regions[0]) {
                cross += 1;
                continue;
            }
            sales.sort_by(|a, b| {
                a.sale_date
                    .cmp(&b.sale_date)
                    .then(a.price.partial_cmp(&b.price).unwrap())
            });
            for k in 1..sales.len() {
                let m0 = grid.index_of(sales[k - 1].sale_date.month_key()).unwrap();
                let m1 = grid.index_of(sales[k].sale_date.month_key()).unwrap();
                if m0 == m1 {
                    same_month += 1;
                } else {
                    kept += 1;
                }
            }
        }
        (kept, same_month, cross)
    }

    #[test]
    fn fixture_matches_brute_force_oracle() {
        // Six properties with 0 to 4 sales each (plus one never sold at all,
        // which by definition cannot appear in a sales file).
        let records = vec![
            // 4 sales, one same-month collision.
            record("P1", 100.0, 2010, 1, 5, "X", "G"),
            record("P1", 105.0, 2010, 1, 20, "X", "G"),
            record("P1", 120.0, 2010, 7, 1, "X", "G"),
            record("P1", 150.0, 2011, 3, 9, "X", "G"),
            // 3 sales.
            record("P2", 200.0, 2010, 2, 2, "Y", "G"),
            record("P2", 210.0, 2010, 9, 2, "Y", "G"),
            record("P2", 230.0, 2011, 6, 2, "Y", "G"),
            // 2 sales crossing regions.
            record("P3", 300.0, 2010, 3, 3, "X", "G"),
            record("P3", 330.0, 2010, 11, 3, "Y", "G"),
            // 2 sales.
            record("P4", 400.0, 2010, 4, 4, "Z", "H"),
            record("P4", 410.0, 2011, 1, 4, "Z", "H"),
            // 1 sale.
            record("P5", 500.0, 2010, 5, 5, "Z", "H"),
            // 2 sales, same day, tie broken by price.
            record("P6", 610.0, 2010, 6, 6, "Y", "G"),
            record("P6", 600.0, 2010, 6, 6, "Y", "G"),
        ];
        let regions = RegionIndex::from_records(&records).unwrap();
        let grid = TimeGrid::new(Month::new(2010, 1).unwrap(), 20).unwrap();
        let out = pair_repeat_sales(&records, &regions, &grid).unwrap();
        let (kept, same_month, cross) = oracle_pairs(&records, &grid);
        assert_eq!(out.pairs.len(), kept);
        assert_eq!(out.same_month_pairs_dropped, same_month);
        assert_eq!(out.cross_region_properties_dropped, cross);
        // Hand count: P1 yields 3 consecutive pairs (1 same-month), P2 yields 2,
        // P3 dropped, P4 yields 1, P5 none, P6 one same-month pair.
        assert_eq!(out.pairs.len(), 5);
        assert_eq!(out.same_month_pairs_dropped, 2);
        assert_eq!(out.cross_region_properties_dropped, 1);
        // Every region index round-trips to an input code.
        for pair in &out.pairs {
            assert!(pair.region_index < regions.len());
            assert!(records.iter().any(|r| r.region_code == regions.code(pair.region_index)));
        }
    }
}
