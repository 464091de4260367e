//! Port metadata and voyage parsing, and chaining voyages into per-ship
//! trajectories.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Opaque port key. Cheap to clone; ordered and hashed by its string.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(Arc<str>);

impl PortId {
    pub fn new(id: impl AsRef<str>) -> Self {
        PortId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for PortId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for PortId {
    fn from(s: &str) -> Self {
        PortId::new(s)
    }
}

impl Serialize for PortId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for PortId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(PortId::new(s))
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: duplicate port '{id}'")]
    DuplicatePort { id: String, line: u64 },
    #[error("line {line}: {message}")]
    InvalidField { line: u64, message: String },
    #[error("unexpected header: expected '{expected}', found '{found}'")]
    Header { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortRecord {
    pub port_id: PortId,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub country: String,
    pub eco_realm: String,
    pub temperature: f64,
    pub salinity: f64,
    pub freshwater: bool,
}

/// Port metadata keyed by port id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortTable {
    ports: BTreeMap<PortId, PortRecord>,
}

impl PortTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a record, refusing duplicates; the error carries the clashing id.
    pub fn insert(&mut self, record: PortRecord) -> Result<(), PortId> {
        if self.ports.contains_key(&record.port_id) {
            return Err(record.port_id);
        }
        self.ports.insert(record.port_id.clone(), record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PortRecord> {
        self.ports.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ports.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PortRecord> {
        self.ports.values()
    }

    /// Resolves a port id to the shared key held by the table.
    pub fn resolve(&self, id: &str) -> Option<&PortId> {
        self.ports.get_key_value(id).map(|(k, _)| k)
    }

    pub fn to_csv<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(PORT_HEADER)?;
        for p in self.iter() {
            writer.write_record([
                p.port_id.as_str(),
                &p.name,
                &p.lat.to_string(),
                &p.lon.to_string(),
                &p.country,
                &p.eco_realm,
                &p.temperature.to_string(),
                &p.salinity.to_string(),
                if p.freshwater { "true" } else { "false" },
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

const PORT_HEADER: [&str; 9] = [
    "port_id",
    "name",
    "lat",
    "lon",
    "country",
    "eco_realm",
    "temperature",
    "salinity",
    "freshwater",
];

const VOYAGE_HEADER: [&str; 6] = [
    "ship_id",
    "ship_type",
    "src_port",
    "dst_port",
    "depart_time",
    "arrive_time",
];

fn check_header<R: Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), IngestError> {
    let found = reader.headers()?.clone();
    let matches = found.len() == expected.len()
        && found.iter().zip(expected).all(|(a, b)| a.trim() == *b);
    if matches {
        Ok(())
    } else {
        Err(IngestError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_f64(field: &str, name: &str, line: u64) -> Result<f64, IngestError> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::InvalidField {
            line,
            message: format!("unparsable {name} '{field}'"),
        })
}

fn parse_bool(field: &str, line: u64) -> Result<bool, IngestError> {
    match field.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "t" => Ok(true),
        "false" | "0" | "no" | "n" | "f" | "" => Ok(false),
        other => Err(IngestError::InvalidField {
            line,
            message: format!("unparsable freshwater flag '{other}'"),
        }),
    }
}

/// Parses port metadata CSV. Any malformed row is fatal.
pub fn parse_ports<R: Read>(input: R) -> Result<PortTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    check_header(&mut reader, &PORT_HEADER)?;
    let mut table = PortTable::new();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        if record.len() != PORT_HEADER.len() {
            return Err(IngestError::InvalidField {
                line,
                message: format!("expected {} fields, found {}", PORT_HEADER.len(), record.len()),
            });
        }
        let port_id = record[0].trim();
        if port_id.is_empty() {
            return Err(IngestError::InvalidField { line, message: "empty port_id".into() });
        }
        if port_id.contains(['|', ',']) {
            return Err(IngestError::InvalidField {
                line,
                message: format!("port_id '{port_id}' contains a reserved label character"),
            });
        }
        let lat = parse_f64(&record[2], "lat", line)?;
        let lon = parse_f64(&record[3], "lon", line)?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(IngestError::InvalidField {
                line,
                message: format!("lat {lat} out of range [-90, 90]"),
            });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(IngestError::InvalidField {
                line,
                message: format!("lon {lon} out of range [-180, 180]"),
            });
        }
        let eco_realm = record[5].trim().to_string();
        if eco_realm.is_empty() {
            return Err(IngestError::InvalidField { line, message: "empty eco_realm".into() });
        }
        let port = PortRecord {
            port_id: PortId::new(port_id),
            name: record[1].trim().to_string(),
            lat,
            lon,
            country: record[4].trim().to_string(),
            eco_realm,
            temperature: parse_f64(&record[6], "temperature", line)?,
            salinity: parse_f64(&record[7], "salinity", line)?,
            freshwater: parse_bool(&record[8], line)?,
        };
        table.insert(port).map_err(|id| IngestError::DuplicatePort {
            id: id.to_string(),
            line,
        })?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Voyage {
    pub ship_id: String,
    pub ship_type: String,
    pub src_port: PortId,
    pub dst_port: PortId,
    pub depart_time: DateTime<Utc>,
    pub arrive_time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct VoyageSet {
    pub voyages: Vec<Voyage>,
    pub rejects: Vec<Reject>,
}

impl VoyageSet {
    pub fn len(&self) -> usize {
        self.voyages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voyages.is_empty()
    }

    /// Writes the rejects report, one `line_no,reason` per line.
    pub fn write_rejects<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.rejects {
            writeln!(out, "{},{}", r.line, r.reason.replace([',', '\n'], ";"))?;
        }
        Ok(())
    }
}

/// Accepts RFC 3339 timestamps, naive `YYYY-MM-DDTHH:MM:SS` (taken as UTC)
/// and bare dates.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

/// Parses voyage CSV. Rows with unknown ports, bad times or self-loops are
/// skipped and recorded in the rejects report.
pub fn parse_voyages<R: Read>(input: R, ports: &PortTable) -> Result<VoyageSet, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    check_header(&mut reader, &VOYAGE_HEADER)?;
    let mut set = VoyageSet::default();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        let mut reject = |reason: String| set.rejects.push(Reject { line, reason });
        if record.len() != VOYAGE_HEADER.len() {
            reject(format!("expected {} fields, found {}", VOYAGE_HEADER.len(), record.len()));
            continue;
        }
        let (Some(src), Some(dst)) = (ports.resolve(record[2].trim()), ports.resolve(record[3].trim()))
        else {
            let unknown = if ports.contains(record[2].trim()) { &record[3] } else { &record[2] };
            reject(format!("unknown port {}", unknown.trim()));
            continue;
        };
        if src == dst {
            reject(format!("src_port equals dst_port {src}"));
            continue;
        }
        let (Some(depart), Some(arrive)) = (parse_timestamp(&record[4]), parse_timestamp(&record[5]))
        else {
            reject("malformed time".to_string());
            continue;
        };
        if depart > arrive {
            reject("depart_time after arrive_time".to_string());
            continue;
        }
        set.voyages.push(Voyage {
            ship_id: record[0].trim().to_string(),
            ship_type: record[1].trim().to_string(),
            src_port: src.clone(),
            dst_port: dst.clone(),
            depart_time: depart,
            arrive_time: arrive,
        });
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub port: PortId,
    pub ship_type: String,
    /// 1-12, month of departure of the voyage that produced this hop.
    pub month: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub ship_id: String,
    pub hops: Vec<Hop>,
}

impl Trajectory {
    /// Builds a trajectory with blank metadata, used by fixtures and tests.
    pub fn from_ports(ship_id: impl Into<String>, ports: &[&str]) -> Self {
        Trajectory {
            ship_id: ship_id.into(),
            hops: ports
                .iter()
                .map(|p| Hop { port: PortId::new(p), ship_type: String::new(), month: 1 })
                .collect(),
        }
    }

    pub fn ports(&self) -> impl Iterator<Item = &PortId> + '_ {
        self.hops.iter().map(|h| &h.port)
    }

    pub fn transitions(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        TrajectorySet { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    pub fn total_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::transitions).sum()
    }

    /// Writes one row per hop: `ship_id,trajectory,hop,port_id,ship_type,month`.
    pub fn to_csv<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["ship_id", "trajectory", "hop", "port_id", "ship_type", "month"])?;
        for (ti, t) in self.trajectories.iter().enumerate() {
            for (hi, h) in t.hops.iter().enumerate() {
                writer.write_record([
                    t.ship_id.as_str(),
                    &ti.to_string(),
                    &hi.to_string(),
                    h.port.as_str(),
                    &h.ship_type,
                    &h.month.to_string(),
                ])?;
            }
        }
        writer.flush()?;
        Ok(())
    }

    pub fn from_csv<R: Read>(input: R) -> Result<Self, IngestError> {
        let mut reader = csv::Reader::from_reader(input);
        let mut trajectories: Vec<Trajectory> = Vec::new();
        let mut current: Option<usize> = None;
        for record in reader.records() {
            let record = record?;
            let line = line_of(&record);
            let bad = |what: &str| IngestError::InvalidField { line, message: format!("bad {what}") };
            let ti: usize = record.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("trajectory"))?;
            let month: u8 = record.get(5).and_then(|s| s.parse().ok()).ok_or_else(|| bad("month"))?;
            if current != Some(ti) {
                trajectories.push(Trajectory { ship_id: record[0].to_string(), hops: Vec::new() });
                current = Some(ti);
            }
            trajectories.last_mut().expect("pushed above").hops.push(Hop {
                port: PortId::new(&record[3]),
                ship_type: record[4].to_string(),
                month,
            });
        }
        Ok(TrajectorySet { trajectories })
    }
}

/// Chains each ship's voyages (sorted by departure) into hop sequences.
///
/// A chain is split when a voyage does not start where the previous one
/// ended, or when the idle gap exceeds `max_gap_days`.
pub fn build_trajectories(voyages: &VoyageSet, max_gap_days: Option<f64>) -> TrajectorySet {
    let mut by_ship: BTreeMap<&str, Vec<&Voyage>> = BTreeMap::new();
    for v in &voyages.voyages {
        by_ship.entry(v.ship_id.as_str()).or_default().push(v);
    }
    let mut out = Vec::new();
    for (ship, mut list) in by_ship {
        // stable: equal departures keep input order
        list.sort_by_key(|v| v.depart_time);
        let mut hops: Vec<Hop> = Vec::new();
        let mut last: Option<&Voyage> = None;
        for v in list {
            let hop_of = |port: &PortId| Hop {
                port: port.clone(),
                ship_type: v.ship_type.clone(),
                month: v.depart_time.month() as u8,
            };
            let continues = last.is_some_and(|prev| {
                prev.dst_port == v.src_port
                    && max_gap_days.is_none_or(|gap| {
                        let idle = (v.depart_time - prev.arrive_time).num_seconds() as f64 / 86_400.0;
                        idle <= gap
                    })
            });
            if !continues {
                flush(&mut out, ship, &mut hops);
                hops.push(hop_of(&v.src_port));
            }
            if hops.last().map(|h| &h.port) != Some(&v.dst_port) {
                hops.push(hop_of(&v.dst_port));
            }
            last = Some(v);
        }
        flush(&mut out, ship, &mut hops);
    }
    TrajectorySet { trajectories: out }
}

fn flush(out: &mut Vec<Trajectory>, ship: &str, hops: &mut Vec<Hop>) {
    if hops.is_empty() {
        return;
    }
    let mut taken = std::mem::take(hops);
    taken.dedup_by(|b, a| a.port == b.port);
    out.push(Trajectory { ship_id: ship.to_string(), hops: taken });
}
