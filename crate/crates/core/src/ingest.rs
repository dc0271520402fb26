//! Measurement and cell-inventory ingestion.
//!
//! Parsing is total: each data row becomes either a record or a [`RowReject`]
//! carrying its line number and reason. Only structural problems (missing
//! columns, duplicate inventory keys, undecodable CSV) fail the whole file.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexgrid::GeoPoint;

pub const MEASUREMENT_COLUMNS: [&str; 9] = [
    "global_cell_id",
    "lat",
    "lon",
    "timestamp",
    "rsrp",
    "rsrq",
    "rssi",
    "sinr",
    "device_brand",
];
pub const CELL_COLUMNS: [&str; 6] = [
    "global_cell_id",
    "lat",
    "lon",
    "rat",
    "channel_bandwidth_mhz",
    "earfcn_dl",
];
pub const TILE_COLUMNS: [&str; 3] = ["hex_id", "terrain_type", "functional_area"];

pub const RSRP_RANGE_DBM: (f64, f64) = (-150.0, -30.0);
pub const RSRQ_RANGE_DB: (f64, f64) = (-30.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub global_cell_id: String,
    pub location: GeoPoint,
    pub timestamp: i64,
    pub rsrp_dbm: f64,
    pub rsrq_db: Option<f64>,
    pub rssi_dbm: Option<f64>,
    pub sinr_db: Option<f64>,
    pub device_brand: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rat {
    #[serde(rename = "LTE")]
    Lte,
    #[serde(rename = "NR")]
    Nr,
}

impl Rat {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rat::Lte => "LTE",
            Rat::Nr => "NR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioCell {
    pub global_cell_id: String,
    pub location: GeoPoint,
    pub rat: Rat,
    pub channel_bandwidth_mhz: f64,
    pub earfcn_dl: u32,
}

/// Optional per-tile spatial context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileAttributes {
    pub terrain_type: String,
    pub functional_area: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    WrongFieldCount { expected: usize, found: usize },
    MissingValue(&'static str),
    MalformedNumber(&'static str),
    LatitudeOutOfRange,
    LongitudeOutOfRange,
    NonPositiveTimestamp,
    RsrpOutOfRange,
    RsrqOutOfRange,
    UnsupportedRat(String),
    NonPositiveBandwidth,
    MalformedHexId,
    BeforeWindowStart,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::WrongFieldCount { expected, found } => {
                write!(f, "expected {expected} fields, found {found}")
            }
            RejectReason::MissingValue(c) => write!(f, "missing value for {c}"),
            RejectReason::MalformedNumber(c) => write!(f, "malformed number in {c}"),
            RejectReason::LatitudeOutOfRange => f.write_str("latitude out of range"),
            RejectReason::LongitudeOutOfRange => f.write_str("longitude out of range"),
            RejectReason::NonPositiveTimestamp => f.write_str("timestamp must be positive"),
            RejectReason::RsrpOutOfRange => f.write_str("rsrp out of plausible range"),
            RejectReason::RsrqOutOfRange => f.write_str("rsrq out of plausible range"),
            RejectReason::UnsupportedRat(r) => write!(f, "unsupported RAT {r:?}"),
            RejectReason::NonPositiveBandwidth => f.write_str("channel bandwidth must be positive"),
            RejectReason::MalformedHexId => f.write_str("malformed hex id"),
            RejectReason::BeforeWindowStart => f.write_str("timestamp precedes window origin"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowReject {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<RowReject>,
}

struct Columns {
    idx: Vec<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Self> {
        let idx = wanted
            .iter()
            .map(|w| {
                headers
                    .iter()
                    .position(|h| h.trim() == *w)
                    .ok_or_else(|| Error::MissingColumn((*w).to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { idx })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, i: usize) -> &'r str {
        rec.get(self.idx[i]).unwrap_or("").trim()
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn required<'a>(v: &'a str, col: &'static str) -> Result<&'a str, RejectReason> {
    if v.is_empty() {
        Err(RejectReason::MissingValue(col))
    } else {
        Ok(v)
    }
}

fn parse_f64(v: &str, col: &'static str) -> Result<f64, RejectReason> {
    match required(v, col)?.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(RejectReason::MalformedNumber(col)),
    }
}

fn parse_opt_f64(v: &str, col: &'static str) -> Result<Option<f64>, RejectReason> {
    if v.is_empty() {
        Ok(None)
    } else {
        parse_f64(v, col).map(Some)
    }
}

fn parse_location(lat: &str, lon: &str) -> Result<GeoPoint, RejectReason> {
    let lat = parse_f64(lat, "lat")?;
    let lon = parse_f64(lon, "lon")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(RejectReason::LatitudeOutOfRange);
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(RejectReason::LongitudeOutOfRange);
    }
    GeoPoint::new(lat, lon).map_err(|_| RejectReason::LatitudeOutOfRange)
}

fn check_width(rec: &csv::StringRecord, expected: usize) -> Result<(), RejectReason> {
    if rec.len() != expected {
        return Err(RejectReason::WrongFieldCount {
            expected,
            found: rec.len(),
        });
    }
    Ok(())
}

fn parse_measurement_row(
    cols: &Columns,
    rec: &csv::StringRecord,
    width: usize,
) -> Result<Measurement, RejectReason> {
    check_width(rec, width)?;
    let global_cell_id = required(cols.get(rec, 0), "global_cell_id")?.to_string();
    let location = parse_location(cols.get(rec, 1), cols.get(rec, 2))?;
    let ts_raw = required(cols.get(rec, 3), "timestamp")?;
    let timestamp: i64 = ts_raw
        .parse()
        .map_err(|_| RejectReason::MalformedNumber("timestamp"))?;
    if timestamp <= 0 {
        return Err(RejectReason::NonPositiveTimestamp);
    }
    let rsrp_dbm = parse_f64(cols.get(rec, 4), "rsrp")?;
    if !(RSRP_RANGE_DBM.0..=RSRP_RANGE_DBM.1).contains(&rsrp_dbm) {
        return Err(RejectReason::RsrpOutOfRange);
    }
    let rsrq_db = parse_opt_f64(cols.get(rec, 5), "rsrq")?;
    if let Some(q) = rsrq_db {
        if !(RSRQ_RANGE_DB.0..=RSRQ_RANGE_DB.1).contains(&q) {
            return Err(RejectReason::RsrqOutOfRange);
        }
    }
    let rssi_dbm = parse_opt_f64(cols.get(rec, 6), "rssi")?;
    let sinr_db = parse_opt_f64(cols.get(rec, 7), "sinr")?;
    let brand = cols.get(rec, 8);
    let device_brand = (!brand.is_empty()).then(|| brand.to_string());
    Ok(Measurement {
        global_cell_id,
        location,
        timestamp,
        rsrp_dbm,
        rsrq_db,
        rssi_dbm,
        sinr_db,
        device_brand,
    })
}

pub fn parse_measurements<R: Read>(input: R) -> Result<Parsed<Measurement>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let cols = Columns::locate(&headers, &MEASUREMENT_COLUMNS)?;
    let width = headers.len();
    let mut out = Parsed {
        records: Vec::new(),
        rejects: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        match parse_measurement_row(&cols, &rec, width) {
            Ok(m) => out.records.push(m),
            Err(reason) => out.rejects.push(RowReject { line, reason }),
        }
    }
    Ok(out)
}

fn parse_cell_row(
    cols: &Columns,
    rec: &csv::StringRecord,
    width: usize,
) -> Result<RadioCell, RejectReason> {
    check_width(rec, width)?;
    let global_cell_id = required(cols.get(rec, 0), "global_cell_id")?.to_string();
    let location = parse_location(cols.get(rec, 1), cols.get(rec, 2))?;
    let rat = match required(cols.get(rec, 3), "rat")? {
        "LTE" | "4G" => Rat::Lte,
        "NR" | "5G" => Rat::Nr,
        other => return Err(RejectReason::UnsupportedRat(other.to_string())),
    };
    let channel_bandwidth_mhz = parse_f64(cols.get(rec, 4), "channel_bandwidth_mhz")?;
    if channel_bandwidth_mhz <= 0.0 {
        return Err(RejectReason::NonPositiveBandwidth);
    }
    let earfcn_dl = required(cols.get(rec, 5), "earfcn_dl")?
        .parse()
        .map_err(|_| RejectReason::MalformedNumber("earfcn_dl"))?;
    Ok(RadioCell {
        global_cell_id,
        location,
        rat,
        channel_bandwidth_mhz,
        earfcn_dl,
    })
}

/// Parses the cell inventory. A repeated `global_cell_id` fails the file.
pub fn parse_cell_inventory<R: Read>(input: R) -> Result<Parsed<RadioCell>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let cols = Columns::locate(&headers, &CELL_COLUMNS)?;
    let width = headers.len();
    let mut out = Parsed {
        records: Vec::new(),
        rejects: Vec::new(),
    };
    let mut seen = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        // Duplicate detection runs on the raw key so a rejected row still claims its id.
        let key = cols.get(&rec, 0).to_string();
        if !key.is_empty() && seen.insert(key.clone(), line).is_some() {
            return Err(Error::DuplicateCellId(key));
        }
        match parse_cell_row(&cols, &rec, width) {
            Ok(c) => out.records.push(c),
            Err(reason) => out.rejects.push(RowReject { line, reason }),
        }
    }
    Ok(out)
}

pub fn parse_tile_attributes<R: Read>(
    input: R,
) -> Result<Parsed<(crate::hexgrid::HexCellId, TileAttributes)>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let cols = Columns::locate(&headers, &TILE_COLUMNS)?;
    let width = headers.len();
    let mut out = Parsed {
        records: Vec::new(),
        rejects: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = check_width(&rec, width).and_then(|_| {
            let id = cols
                .get(&rec, 0)
                .parse()
                .map_err(|_| RejectReason::MalformedHexId)?;
            Ok((
                id,
                TileAttributes {
                    terrain_type: required(cols.get(&rec, 1), "terrain_type")?.to_string(),
                    functional_area: required(cols.get(&rec, 2), "functional_area")?.to_string(),
                },
            ))
        });
        match row {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejects.push(RowReject { line, reason }),
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub struct Joined<'a> {
    pub pairs: Vec<(&'a Measurement, &'a RadioCell)>,
    pub unmatched: usize,
}

/// Exact string join on `global_cell_id`, preserving measurement order.
pub fn join_to_cells<'a>(ms: &'a [Measurement], cells: &'a [RadioCell]) -> Joined<'a> {
    let by_id: HashMap<&str, &RadioCell> = cells
        .iter()
        .map(|c| (c.global_cell_id.as_str(), c))
        .collect();
    let mut pairs = Vec::with_capacity(ms.len());
    let mut unmatched = 0;
    for m in ms {
        match by_id.get(m.global_cell_id.as_str()) {
            Some(c) => pairs.push((m, *c)),
            None => unmatched += 1,
        }
    }
    Joined { pairs, unmatched }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSpec {
    /// One window spanning all time.
    Pool,
    Fixed {
        len_s: i64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeWindow {
    /// 1-based window index.
    pub index: usize,
    pub start: i64,
    /// Exclusive.
    pub end: i64,
}

#[derive(Debug)]
pub struct Bucketed<T> {
    pub windows: BTreeMap<TimeWindow, Vec<T>>,
    /// Positions (in input order) of measurements that precede `t0`.
    pub rejects: Vec<(usize, RejectReason)>,
}

/// Groups items into half-open windows `[t0 + (t-1)·len, t0 + t·len)`.
pub fn bucket_by_window<T: Clone>(
    items: &[T],
    timestamp: impl Fn(&T) -> i64,
    spec: WindowSpec,
    t0: i64,
) -> Result<Bucketed<T>> {
    let mut windows: BTreeMap<TimeWindow, Vec<T>> = BTreeMap::new();
    let mut rejects = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let ts = timestamp(item);
        if ts < t0 {
            rejects.push((i, RejectReason::BeforeWindowStart));
            continue;
        }
        let w = match spec {
            WindowSpec::Pool => TimeWindow {
                index: 1,
                start: t0,
                end: i64::MAX,
            },
            WindowSpec::Fixed { len_s } => {
                if len_s <= 0 {
                    return Err(Error::Argument(format!(
                        "window length must be > 0, got {len_s}"
                    )));
                }
                let k = (ts - t0).div_euclid(len_s);
                TimeWindow {
                    index: k as usize + 1,
                    start: t0 + k * len_s,
                    end: t0 + (k + 1) * len_s,
                }
            }
        };
        windows.entry(w).or_default().push(item.clone());
    }
    Ok(Bucketed { windows, rejects })
}

#[cfg(test)]
mod tests {
    use super::*;

    const M_HEADER: &str = "global_cell_id,lat,lon,timestamp,rsrp,rsrq,rssi,sinr,device_brand\n";
    const C_HEADER: &str = "global_cell_id,lat,lon,rat,channel_bandwidth_mhz,earfcn_dl\n";

    fn ms(rows: &str) -> Parsed<Measurement> {
        parse_measurements(format!("{M_HEADER}{rows}").as_bytes()).unwrap()
    }

    #[test]
    fn measurement_row_maps_fields() {
        let p = ms("cellA,59.33,18.06,1700000000,-97,-11,,,brandX\n");
        assert!(p.rejects.is_empty());
        let m = &p.records[0];
        assert_eq!(m.global_cell_id, "cellA");
        assert_eq!(
            m.location,
            GeoPoint {
                lat: 59.33,
                lon: 18.06
            }
        );
        assert_eq!(m.timestamp, 1_700_000_000);
        assert_eq!(m.rsrp_dbm, -97.0);
        assert_eq!(m.rsrq_db, Some(-11.0));
        assert_eq!(m.rssi_dbm, None);
        assert_eq!(m.sinr_db, None);
        assert_eq!(m.device_brand.as_deref(), Some("brandX"));
    }

    #[test]
    fn measurement_row_rejects() {
        let p = ms("cellA,95,18.06,1700000000,-97,-11,,,brandX\n\
                    cellA,59.3,18.06,1700000000,-20,-11,,,brandX\n\
                    cellA,59.3,18.06,1700000000,abc,,,,\n\
                    cellA,59.3,18.06,0,-97,,,,\n\
                    cellA,59.3,18.06\n\
                    cellA,59.3,18.06,1700000000,-97,,,,\n");
        let reasons: Vec<String> = p.rejects.iter().map(|r| r.reason.to_string()).collect();
        assert_eq!(reasons[0], "latitude out of range");
        assert_eq!(reasons[1], "rsrp out of plausible range");
        assert_eq!(p.rejects[2].reason, RejectReason::MalformedNumber("rsrp"));
        assert_eq!(p.rejects[3].reason, RejectReason::NonPositiveTimestamp);
        assert!(matches!(
            p.rejects[4].reason,
            RejectReason::WrongFieldCount { .. }
        ));
        assert_eq!(p.rejects[0].line, 2);
        assert_eq!(p.records.len() + p.rejects.len(), 6);
    }

    #[test]
    fn missing_column_is_file_error() {
        let err =
            parse_measurements("global_cell_id,lat,lon,timestamp,rsrq\n".as_bytes()).unwrap_err();
        assert!(
            matches!(err, Error::MissingColumn(ref c) if c == "rsrp"),
            "{err}"
        );
    }

    #[test]
    fn cell_rows() {
        let p = parse_cell_inventory(
            format!("{C_HEADER}cellA,59.335,18.07,LTE,20,6300\ncellB,59.3,18.0,UMTS,5,10\n")
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(p.records.len(), 1);
        let c = &p.records[0];
        assert_eq!(
            (c.rat, c.channel_bandwidth_mhz, c.earfcn_dl),
            (Rat::Lte, 20.0, 6300)
        );
        assert_eq!(p.rejects[0].reason.to_string(), "unsupported RAT \"UMTS\"");
        assert!(p.rejects[0]
            .reason
            .to_string()
            .starts_with("unsupported RAT"));
    }

    #[test]
    fn duplicate_cell_is_file_error() {
        let err = parse_cell_inventory(
            format!("{C_HEADER}cellA,59.335,18.07,LTE,20,6300\ncellA,59.3,18.0,NR,100,630000\n")
                .as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateCellId(ref id) if id == "cellA"));
        assert!(err.to_string().contains("cellA"));
    }

    #[test]
    fn join_counts() {
        let meas =
            ms("cellA,59.33,18.06,1700000000,-97,,,,\ncellZ,59.33,18.06,1700000000,-97,,,,\n")
                .records;
        let cells =
            parse_cell_inventory(format!("{C_HEADER}cellA,59.335,18.07,LTE,20,6300\n").as_bytes())
                .unwrap()
                .records;
        let j = join_to_cells(&meas, &cells);
        assert_eq!(j.pairs.len(), 1);
        assert_eq!(j.pairs[0].1.global_cell_id, "cellA");
        assert_eq!(j.unmatched, 1);
        let j = join_to_cells(&meas, &[]);
        assert_eq!((j.pairs.len(), j.unmatched), (0, 2));
    }

    #[test]
    fn windows_are_half_open() {
        let ts = [10i64, 3600, 3599, 7300];
        let b = bucket_by_window(&ts, |t| *t, WindowSpec::Fixed { len_s: 3600 }, 0).unwrap();
        let idx: Vec<(usize, Vec<i64>)> = b
            .windows
            .iter()
            .map(|(w, v)| (w.index, v.clone()))
            .collect();
        assert_eq!(
            idx,
            vec![(1, vec![10, 3599]), (2, vec![3600]), (3, vec![7300])]
        );
        let w2 = b.windows.keys().nth(1).unwrap();
        assert_eq!((w2.start, w2.end), (3600, 7200));

        let pooled = bucket_by_window(&ts, |t| *t, WindowSpec::Pool, 0).unwrap();
        assert_eq!(pooled.windows.len(), 1);
        assert_eq!(pooled.windows.values().next().unwrap().len(), 4);

        let early = bucket_by_window(&ts, |t| *t, WindowSpec::Fixed { len_s: 3600 }, 100).unwrap();
        assert_eq!(early.rejects, vec![(0, RejectReason::BeforeWindowStart)]);
        assert!(bucket_by_window(&ts, |t| *t, WindowSpec::Fixed { len_s: 0 }, 0).is_err());
    }

    #[test]
    fn tile_attributes() {
        let p = parse_tile_attributes(
            "hex_id,terrain_type,functional_area\n3:-2,urban,residential\nxx,a,b\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(p.records[0].0, crate::hexgrid::HexCellId::new(3, -2));
        assert_eq!(p.rejects[0].reason, RejectReason::MalformedHexId);
    }
}
