//! From publication records to weighted points.
//!
//! Records are first cut down to the most highly cited ones
//! ([`select_top_percentile`]), then each record's addresses are turned into
//! city occurrences ([`count_city_occurrences`]), and finally occurrences are
//! merged per city and placed on the map ([`resolve_cities`]).

mod gazetteer;
mod geocoder;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use gazetteer::{Gazetteer, GazetteerEntry, Lookup};
pub use geocoder::{
    load_cache, resolve_cities, CachedGeocoder, GeocodeError, Geocoder, Resolution, ResolvedCity,
    Unresolved,
};

/// One affiliation of a publication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Address {
    /// City token as delivered by the upstream extraction.
    pub city: String,
    pub country: Option<String>,
    /// Full affiliation string, used to recognise identical addresses.
    pub raw: Option<String>,
}

impl Address {
    pub fn new(city: impl Into<String>) -> Self {
        Self {
            city: city.into(),
            country: None,
            raw: None,
        }
    }

    pub fn with_raw(city: impl Into<String>, raw: impl Into<String>) -> Self {
        Self {
            city: city.into(),
            country: None,
            raw: Some(raw.into()),
        }
    }

    pub fn with_country(mut self, country: impl Into<String>) -> Self {
        self.country = Some(country.into());
        self
    }

    /// Normalized city key, qualified as `city|country` when a country is
    /// known.
    pub fn city_key(&self) -> Result<String> {
        let city = normalize_city_key(&self.city)?;
        match self
            .country
            .as_deref()
            .map(str::trim)
            .filter(|c| !c.is_empty())
        {
            Some(country) => Ok(format!("{city}|{}", normalize_city_key(country)?)),
            None => Ok(city),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: String,
    pub citations: u64,
    pub addresses: Vec<Address>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    /// Every distinct address counts once.
    Full,
    /// Each record has total weight one, split evenly over its distinct cities.
    Fractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityOccurrence {
    pub city_key: String,
    pub weight: f64,
}

impl CityOccurrence {
    pub fn new(city_key: impl Into<String>, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "occurrence weight must be positive, got {weight}"
            )));
        }
        Ok(Self {
            city_key: city_key.into(),
            weight,
        })
    }
}

/// An address that could not be turned into a city occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressReject {
    pub pub_id: String,
    pub address: Address,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountOutcome {
    pub occurrences: Vec<CityOccurrence>,
    pub rejects: Vec<AddressReject>,
}

/// Trim, case-fold, strip diacritics and collapse internal whitespace.
pub fn normalize_city_key(raw: &str) -> Result<String> {
    let folded: String = raw
        .trim()
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c == '|' { ' ' } else { c })
        .collect();
    let key = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    if key.is_empty() {
        return Err(Error::InvalidArgument(format!("empty city name {raw:?}")));
    }
    Ok(key)
}

/// Keeps the records at or above the citation count of rank `⌈p·N/100⌉`.
///
/// Every record tied with the threshold is kept, so the result can be larger
/// than `p` percent. Output is ordered by citations, highest first; ties keep
/// their input order.
pub fn select_top_percentile(
    records: &[PublicationRecord],
    percent: f64,
) -> Result<Vec<PublicationRecord>> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must be in (0, 100], got {percent}"
        )));
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted: Vec<&PublicationRecord> = records.iter().collect();
    sorted.sort_by_key(|r| std::cmp::Reverse(r.citations));
    let n = sorted.len();
    // The epsilon keeps exact products such as 0.7·1000/100 from rounding up.
    let rank = ((percent * n as f64 / 100.0) - 1e-9)
        .ceil()
        .clamp(1.0, n as f64) as usize;
    let threshold = sorted[rank - 1].citations;
    Ok(sorted
        .into_iter()
        .take_while(|r| r.citations >= threshold)
        .cloned()
        .collect())
}

/// Turns one record's addresses into weighted city occurrences.
///
/// Occurrences come out in order of first appearance, one per city key.
pub fn count_city_occurrences(record: &PublicationRecord, mode: CountingMode) -> CountOutcome {
    let mut outcome = CountOutcome::default();
    let mut seen_raw: HashSet<&str> = HashSet::new();
    // (key, number of distinct addresses in that city)
    let mut cities: Vec<(String, u32)> = Vec::new();

    for address in &record.addresses {
        if let Some(raw) = address.raw.as_deref() {
            if !seen_raw.insert(raw) {
                continue;
            }
        }
        let key = match address.city_key() {
            Ok(key) => key,
            Err(_) => {
                outcome.rejects.push(AddressReject {
                    pub_id: record.id.clone(),
                    address: address.clone(),
                    reason: "no city in address".into(),
                });
                continue;
            }
        };
        match cities.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += 1,
            None => cities.push((key, 1)),
        }
    }

    let share = 1.0 / cities.len() as f64;
    outcome.occurrences = cities
        .into_iter()
        .map(|(city_key, n)| CityOccurrence {
            city_key,
            weight: match mode {
                CountingMode::Full => f64::from(n),
                CountingMode::Fractional => share,
            },
        })
        .collect();
    outcome
}
