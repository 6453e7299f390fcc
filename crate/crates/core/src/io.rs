//! Delimited-text readers and writers for publications, gazetteers, points
//! and reject reports.
//!
//! All files are UTF-8, comma-separated, with a header row. Column names are
//! matched case-insensitively and surrounding whitespace is ignored.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use csv::StringRecord;

use crate::density::WeightedPoint;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::ingest::{Address, AddressReject, GazetteerEntry, PublicationRecord, Unresolved};

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

pub(crate) fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::file(path, e))
}

/// Column positions resolved from a header row.
struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(header: &StringRecord) -> Self {
        Self(
            header
                .iter()
                .enumerate()
                .map(|(i, name)| (name.trim().to_ascii_lowercase(), i))
                .collect(),
        )
    }

    fn required(&self, name: &str) -> Result<usize> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::parse(1, format!("missing required column {name:?}")))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.0.get(name).copied()
    }
}

fn field(row: &StringRecord, idx: usize) -> &str {
    row.get(idx).unwrap_or("")
}

fn optional_field(row: &StringRecord, idx: Option<usize>) -> Option<String> {
    idx.map(|i| field(row, i))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn parse_f64(row: &StringRecord, idx: usize, line: u64, what: &str) -> Result<f64> {
    let s = field(row, idx);
    s.parse()
        .map_err(|_| Error::parse(line, format!("{what} {s:?} is not a number")))
}

fn line_of(row: &StringRecord, fallback: u64) -> u64 {
    row.position().map_or(fallback, |p| p.line())
}

/// Reads `pub_id,citations,city[,country][,raw_address]`, one row per
/// (publication, address). Rows sharing a `pub_id` are gathered into one
/// record, in order of first appearance.
pub fn read_publications<R: Read>(input: R) -> Result<Vec<PublicationRecord>> {
    let mut rdr = reader(input);
    let cols = Columns::new(rdr.headers()?);
    let id_col = cols.required("pub_id")?;
    let cit_col = cols.required("citations")?;
    let city_col = cols.required("city")?;
    let country_col = cols.optional("country");
    let raw_col = cols.optional("raw_address");

    let mut records: Vec<PublicationRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let line = line_of(&row, n as u64 + 2);
        let id = field(&row, id_col);
        if id.is_empty() {
            return Err(Error::parse(line, "empty pub_id"));
        }
        let cit_text = field(&row, cit_col);
        let citations: u64 = cit_text
            .parse()
            .map_err(|_| Error::parse(line, format!("citations {cit_text:?} is not a count")))?;
        let address = Address {
            city: field(&row, city_col).to_string(),
            country: optional_field(&row, country_col),
            raw: optional_field(&row, raw_col),
        };
        match by_id.get(id) {
            Some(&i) => {
                let rec = &mut records[i];
                if rec.citations != citations {
                    return Err(Error::parse(
                        line,
                        format!(
                            "publication {id} has conflicting citation counts {} and {citations}",
                            rec.citations
                        ),
                    ));
                }
                rec.addresses.push(address);
            }
            None => {
                by_id.insert(id.to_string(), records.len());
                records.push(PublicationRecord {
                    id: id.to_string(),
                    citations,
                    addresses: vec![address],
                });
            }
        }
    }
    Ok(records)
}

pub fn read_publications_file(path: &Path) -> Result<Vec<PublicationRecord>> {
    read_publications(open(path)?).map_err(|e| with_path(e, path))
}

/// Reads `city,country,lat,lon,primary`. `country` and `primary` may be
/// empty; `primary` accepts `1`/`0`/`true`/`false`.
pub fn read_gazetteer<R: Read>(input: R) -> Result<Vec<GazetteerEntry>> {
    let mut rdr = reader(input);
    let cols = Columns::new(rdr.headers()?);
    let city_col = cols.required("city")?;
    let lat_col = cols.required("lat")?;
    let lon_col = cols.required("lon")?;
    let country_col = cols.optional("country");
    let primary_col = cols.optional("primary");

    let mut entries = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let line = line_of(&row, n as u64 + 2);
        let lat = parse_f64(&row, lat_col, line, "lat")?;
        let lon = parse_f64(&row, lon_col, line, "lon")?;
        let location = GeoPoint::new(lat, lon).map_err(|e| Error::parse(line, e.to_string()))?;
        let primary = match primary_col.map(|i| field(&row, i).to_ascii_lowercase()) {
            None => false,
            Some(s) => match s.as_str() {
                "" | "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(Error::parse(line, format!("primary flag {other:?}"))),
            },
        };
        let country = optional_field(&row, country_col);
        let entry =
            GazetteerEntry::new(field(&row, city_col), country.as_deref(), location, primary)
                .map_err(|e| Error::parse(line, e.to_string()))?;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn read_gazetteer_file(path: &Path) -> Result<Vec<GazetteerEntry>> {
    read_gazetteer(open(path)?).map_err(|e| with_path(e, path))
}

/// Reads `lat,lon,weight`.
pub fn read_points<R: Read>(input: R) -> Result<Vec<WeightedPoint>> {
    let mut rdr = reader(input);
    let cols = Columns::new(rdr.headers()?);
    let lat_col = cols.required("lat")?;
    let lon_col = cols.required("lon")?;
    let w_col = cols.required("weight")?;
    let mut points = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let line = line_of(&row, n as u64 + 2);
        let lat = parse_f64(&row, lat_col, line, "lat")?;
        let lon = parse_f64(&row, lon_col, line, "lon")?;
        let w = parse_f64(&row, w_col, line, "weight")?;
        let p = GeoPoint::new(lat, lon)
            .and_then(|g| WeightedPoint::new(g, w))
            .map_err(|e| Error::parse(line, e.to_string()))?;
        points.push(p);
    }
    Ok(points)
}

pub fn read_points_file(path: &Path) -> Result<Vec<WeightedPoint>> {
    read_points(open(path)?).map_err(|e| with_path(e, path))
}

/// Writes `lat,lon,weight` with round-trip exact numbers.
pub fn write_points<W: Write>(out: W, points: &[WeightedPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lat", "lon", "weight"])?;
    for p in points {
        w.write_record([
            p.location.lat().to_string(),
            p.location.lon().to_string(),
            p.weight().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the combined reject report: addresses without a usable city and
/// city keys that could not be placed.
///
/// Columns: `kind,pub_id,city_key,weight,reason`.
pub fn write_rejects<W: Write>(
    out: W,
    address_rejects: &[AddressReject],
    unresolved: &[Unresolved],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "pub_id", "city_key", "weight", "reason"])?;
    for r in address_rejects {
        let what = r.address.raw.as_deref().unwrap_or(&r.address.city);
        w.write_record(["address", &r.pub_id, what, "", &r.reason])?;
    }
    for u in unresolved {
        w.write_record([
            "city",
            "",
            &u.occurrence.city_key,
            &u.occurrence.weight.to_string(),
            &u.reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}
