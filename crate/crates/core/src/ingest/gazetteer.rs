use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

use super::normalize_city_key;

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerEntry {
    /// Normalized city name.
    pub city: String,
    /// Normalized country code or name, if known.
    pub country: Option<String>,
    pub location: GeoPoint,
    /// Preferred entry when the city name is looked up without a country.
    pub primary: bool,
}

impl GazetteerEntry {
    /// Normalizes `city` and `country`.
    pub fn new(
        city: &str,
        country: Option<&str>,
        location: GeoPoint,
        primary: bool,
    ) -> Result<Self> {
        let country = match country.map(str::trim).filter(|c| !c.is_empty()) {
            Some(c) => Some(normalize_city_key(c)?),
            None => None,
        };
        Ok(Self {
            city: normalize_city_key(city)?,
            country,
            location,
            primary,
        })
    }

    /// `city|country`, or the bare city when no country is set.
    pub fn key(&self) -> String {
        match &self.country {
            Some(c) => format!("{}|{c}", self.city),
            None => self.city.clone(),
        }
    }
}

/// Result of a gazetteer lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Hit(GeoPoint),
    /// Several entries share the bare name; the primary one was chosen.
    PrimaryOfMany {
        location: GeoPoint,
        candidates: usize,
    },
    /// Several entries share the bare name and none is marked primary.
    Ambiguous {
        candidates: usize,
    },
    Miss,
}

/// Offline city → coordinate table.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    by_key: HashMap<String, usize>,
    by_city: HashMap<String, Vec<usize>>,
}

impl Gazetteer {
    pub fn from_entries(entries: Vec<GazetteerEntry>) -> Result<Self> {
        let mut by_key = HashMap::with_capacity(entries.len());
        let mut by_city: HashMap<String, Vec<usize>> = HashMap::new();
        for (idx, e) in entries.iter().enumerate() {
            if by_key.insert(e.key(), idx).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate gazetteer key {:?}",
                    e.key()
                )));
            }
            by_city.entry(e.city.clone()).or_default().push(idx);
        }
        Ok(Self {
            entries,
            by_key,
            by_city,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    /// Looks up a normalized key. Qualified keys (`city|country`) must match
    /// exactly; bare keys fall back to the entries sharing that city name.
    pub fn lookup(&self, key: &str) -> Lookup {
        if let Some(&idx) = self.by_key.get(key) {
            // A bare key can also be the exact key of a country-less entry;
            // that still competes with same-named entries below.
            if key.contains('|') || self.by_city.get(key).is_none_or(|v| v.len() == 1) {
                return Lookup::Hit(self.entries[idx].location);
            }
        }
        if key.contains('|') {
            return Lookup::Miss;
        }
        let Some(candidates) = self.by_city.get(key) else {
            return Lookup::Miss;
        };
        if candidates.len() == 1 {
            return Lookup::Hit(self.entries[candidates[0]].location);
        }
        let primaries: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&i| self.entries[i].primary)
            .collect();
        match primaries.as_slice() {
            [only] => Lookup::PrimaryOfMany {
                location: self.entries[*only].location,
                candidates: candidates.len(),
            },
            _ => Lookup::Ambiguous {
                candidates: candidates.len(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(
        city: &str,
        country: Option<&str>,
        lat: f64,
        lon: f64,
        primary: bool,
    ) -> GazetteerEntry {
        GazetteerEntry::new(city, country, GeoPoint::new(lat, lon).unwrap(), primary).unwrap()
    }

    fn cambridges(primary_uk: bool) -> Gazetteer {
        Gazetteer::from_entries(vec![
            entry("Cambridge", Some("GB"), 52.2053, 0.1218, primary_uk),
            entry("Cambridge", Some("US"), 42.3736, -71.1097, false),
            entry("Leiden", None, 52.1601, 4.4970, false),
        ])
        .unwrap()
    }

    #[test]
    fn qualified_keys_match_exactly() {
        let g = cambridges(true);
        assert_eq!(
            g.lookup("cambridge|us"),
            Lookup::Hit(GeoPoint::new(42.3736, -71.1097).unwrap())
        );
        assert_eq!(g.lookup("cambridge|fr"), Lookup::Miss);
    }

    #[test]
    fn bare_homonym_prefers_primary() {
        let g = cambridges(true);
        assert_eq!(
            g.lookup("cambridge"),
            Lookup::PrimaryOfMany {
                location: GeoPoint::new(52.2053, 0.1218).unwrap(),
                candidates: 2
            }
        );
        assert_eq!(
            cambridges(false).lookup("cambridge"),
            Lookup::Ambiguous { candidates: 2 }
        );
    }

    #[test]
    fn unique_bare_name() {
        let g = cambridges(true);
        assert_eq!(
            g.lookup("leiden"),
            Lookup::Hit(GeoPoint::new(52.1601, 4.4970).unwrap())
        );
        assert_eq!(g.lookup("atlantis"), Lookup::Miss);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let dup = Gazetteer::from_entries(vec![
            entry("Paris", Some("FR"), 48.85, 2.35, true),
            entry("paris", Some("fr"), 48.86, 2.35, false),
        ]);
        assert!(dup.is_err());
    }
}
