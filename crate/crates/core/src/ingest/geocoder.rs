use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::warn;
use thiserror::Error;

use crate::density::WeightedPoint;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;

use super::{CityOccurrence, Gazetteer, Lookup};

/// Failure talking to an external geocoding service.
#[derive(Debug, Error)]
#[error("geocoder failure: {0}")]
pub struct GeocodeError(pub String);

/// Source of coordinates for city keys the gazetteer does not know.
pub trait Geocoder {
    /// Name recorded as the `source` of cached answers.
    fn source(&self) -> &str;

    /// `Ok(None)` means the service answered but knows no such place.
    fn geocode(&mut self, city_key: &str) -> Result<Option<GeoPoint>, GeocodeError>;
}

/// Wraps a [`Geocoder`] with a persistent answer cache and a minimum delay
/// between upstream requests.
///
/// The cache file is append-only delimited text with header
/// `city_key,lat,lon,source,timestamp`; "not found" answers are stored with
/// empty coordinates. Failed requests are not cached.
pub struct CachedGeocoder<G> {
    inner: G,
    cache: HashMap<String, Option<GeoPoint>>,
    path: Option<PathBuf>,
    min_interval: Duration,
    last_request: Option<Instant>,
    upstream_queries: usize,
}

impl<G: Geocoder> CachedGeocoder<G> {
    /// In-memory cache only.
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            cache: HashMap::new(),
            path: None,
            min_interval: Duration::ZERO,
            last_request: None,
            upstream_queries: 0,
        }
    }

    /// Loads `path` if it exists; new answers are appended to it.
    pub fn with_cache_file(inner: G, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut this = Self::new(inner);
        if path.exists() {
            this.cache = load_cache(&path)?;
        }
        this.path = Some(path);
        Ok(this)
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    /// Requests sent to the wrapped geocoder so far.
    pub fn upstream_queries(&self) -> usize {
        self.upstream_queries
    }

    pub fn cached(&self, city_key: &str) -> Option<Option<GeoPoint>> {
        self.cache.get(city_key).copied()
    }

    pub fn into_inner(self) -> G {
        self.inner
    }

    fn throttle(&mut self) {
        if let Some(last) = self.last_request {
            let elapsed = last.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        self.last_request = Some(Instant::now());
    }

    fn append(&self, key: &str, answer: Option<GeoPoint>) -> std::io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if fresh {
            w.write_record(["city_key", "lat", "lon", "source", "timestamp"])?;
        }
        let (lat, lon) = match answer {
            Some(p) => (p.lat().to_string(), p.lon().to_string()),
            None => (String::new(), String::new()),
        };
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        w.write_record([key, &lat, &lon, self.inner.source(), &ts.to_string()])?;
        w.flush()
    }
}

impl<G: Geocoder> Geocoder for CachedGeocoder<G> {
    fn source(&self) -> &str {
        self.inner.source()
    }

    fn geocode(&mut self, city_key: &str) -> Result<Option<GeoPoint>, GeocodeError> {
        if let Some(hit) = self.cache.get(city_key) {
            return Ok(*hit);
        }
        self.throttle();
        self.upstream_queries += 1;
        let answer = self.inner.geocode(city_key)?;
        self.cache.insert(city_key.to_string(), answer);
        if let Err(e) = self.append(city_key, answer) {
            warn!("could not append to geocoder cache: {e}");
        }
        Ok(answer)
    }
}

/// A cache file used on its own as a read-only geocoder.
impl Geocoder for HashMap<String, Option<GeoPoint>> {
    fn source(&self) -> &str {
        "cache"
    }

    fn geocode(&mut self, city_key: &str) -> Result<Option<GeoPoint>, GeocodeError> {
        Ok(self.get(city_key).copied().flatten())
    }
}

/// Reads a geocoder cache file. Later lines win over earlier ones.
pub fn load_cache(path: &Path) -> Result<HashMap<String, Option<GeoPoint>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let mut cache = HashMap::new();
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let line = n as u64 + 2;
        let key = row.get(0).unwrap_or("").to_string();
        if key.is_empty() {
            return Err(Error::parse(line, "empty city_key in geocoder cache"));
        }
        let lat = row.get(1).unwrap_or("");
        let lon = row.get(2).unwrap_or("");
        let answer = if lat.is_empty() && lon.is_empty() {
            None
        } else {
            let lat: f64 = lat
                .parse()
                .map_err(|_| Error::parse(line, "bad latitude"))?;
            let lon: f64 = lon
                .parse()
                .map_err(|_| Error::parse(line, "bad longitude"))?;
            Some(GeoPoint::new(lat, lon).map_err(|e| Error::parse(line, e.to_string()))?)
        };
        cache.insert(key, answer);
    }
    Ok(cache)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCity {
    pub city_key: String,
    pub point: WeightedPoint,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unresolved {
    pub occurrence: CityOccurrence,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resolution {
    pub points: Vec<ResolvedCity>,
    pub unresolved: Vec<Unresolved>,
    pub warnings: Vec<String>,
}

impl Resolution {
    pub fn weighted_points(&self) -> Vec<WeightedPoint> {
        self.points.iter().map(|r| r.point).collect()
    }

    pub fn resolved_weight(&self) -> f64 {
        self.points.iter().map(|r| r.point.weight()).sum()
    }

    pub fn unresolved_weight(&self) -> f64 {
        self.unresolved.iter().map(|u| u.occurrence.weight).sum()
    }
}

/// Merges occurrences per city key (summing weights, first-appearance order),
/// then places each key via the gazetteer, falling back to `fallback` once
/// per key the gazetteer cannot place.
pub fn resolve_cities(
    occurrences: &[CityOccurrence],
    gazetteer: &Gazetteer,
    mut fallback: Option<&mut dyn Geocoder>,
) -> Resolution {
    let mut merged: Vec<CityOccurrence> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for occ in occurrences {
        match index.get(occ.city_key.as_str()) {
            Some(&i) => merged[i].weight += occ.weight,
            None => {
                index.insert(&occ.city_key, merged.len());
                merged.push(occ.clone());
            }
        }
    }

    let mut out = Resolution::default();
    for occ in merged {
        let mut miss_reason = match gazetteer.lookup(&occ.city_key) {
            Lookup::Hit(location) => {
                out.push(occ, location, "gazetteer");
                continue;
            }
            Lookup::PrimaryOfMany {
                location,
                candidates,
            } => {
                let msg = format!(
                    "{:?} matches {candidates} gazetteer entries; using the primary one",
                    occ.city_key
                );
                warn!("{msg}");
                out.warnings.push(msg);
                out.push(occ, location, "gazetteer");
                continue;
            }
            Lookup::Ambiguous { candidates } => {
                format!("ambiguous: {candidates} gazetteer entries, none primary")
            }
            Lookup::Miss => "not in gazetteer".to_string(),
        };
        if let Some(geocoder) = fallback.as_deref_mut() {
            match geocoder.geocode(&occ.city_key) {
                Ok(Some(location)) => {
                    let source = geocoder.source().to_string();
                    out.push(occ, location, &source);
                    continue;
                }
                Ok(None) => miss_reason.push_str(&format!("; not found by {}", geocoder.source())),
                Err(e) => miss_reason.push_str(&format!("; {e}")),
            }
        }
        out.unresolved.push(Unresolved {
            occurrence: occ,
            reason: miss_reason,
        });
    }
    out
}

impl Resolution {
    fn push(&mut self, occ: CityOccurrence, location: GeoPoint, source: &str) {
        let point =
            WeightedPoint::new(location, occ.weight).expect("occurrence weights are positive");
        self.points.push(ResolvedCity {
            city_key: occ.city_key,
            point,
            source: source.to_string(),
        });
    }
}
