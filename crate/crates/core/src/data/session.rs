//! Raw charging sessions and their CSV / JSON-lines formats.
//!
//! Field names are `site_id, station_id, connect_utc, disconnect_utc,
//! energy_kwh`. JSON-lines input also accepts ACN-Data export names
//! (`siteID`, `stationID`, `connectionTime`, `disconnectTime`,
//! `kWhDelivered`), and timestamps may be RFC 3339 or RFC 2822
//! (`Wed, 25 Apr 2018 11:08:04 GMT`).

use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    #[serde(alias = "siteID", deserialize_with = "de_string")]
    pub site_id: String,
    #[serde(alias = "stationID", deserialize_with = "de_string")]
    pub station_id: String,
    #[serde(alias = "connectionTime", with = "timestamp")]
    pub connect_utc: DateTime<Utc>,
    #[serde(alias = "disconnectTime", with = "timestamp")]
    pub disconnect_utc: DateTime<Utc>,
    #[serde(alias = "kWhDelivered")]
    pub energy_kwh: f64,
}

impl SessionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.disconnect_utc < self.connect_utc {
            return Err(Error::data(format!(
                "session at {} on {} disconnects before it connects",
                self.connect_utc, self.station_id
            )));
        }
        if !self.energy_kwh.is_finite() || self.energy_kwh < 0.0 {
            return Err(Error::data(format!(
                "session at {} on {} has invalid energy {}",
                self.connect_utc, self.station_id, self.energy_kwh
            )));
        }
        Ok(())
    }

    pub fn duration_secs(&self) -> i64 {
        (self.disconnect_utc - self.connect_utc).num_seconds()
    }
}

/// ACN exports carry numeric site ids.
fn de_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        S(String),
        I(i64),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::S(s) => s,
        Raw::I(i) => i.to_string(),
    })
}

pub(crate) mod timestamp {
    use super::*;

    pub fn parse(s: &str) -> Option<DateTime<Utc>> {
        let s = s.trim();
        DateTime::parse_from_rfc3339(s)
            .or_else(|_| DateTime::parse_from_rfc2822(s))
            .map(|d| d.with_timezone(&Utc))
            .ok()
            .or_else(|| {
                chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
                    .ok()
                    .map(|n| n.and_utc())
            })
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).ok_or_else(|| serde::de::Error::custom(format!("unparseable timestamp `{raw}`")))
    }
}

/// Reads sessions from `.csv` or `.jsonl`/`.json` by extension.
pub fn read_sessions(path: &Path) -> Result<Vec<SessionRecord>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let sessions = match ext {
        "jsonl" | "json" | "ndjson" => read_sessions_jsonl(std::io::BufReader::new(file))?,
        _ => read_sessions_csv(file)?,
    };
    Ok(sessions)
}

pub fn read_sessions_csv<R: std::io::Read>(reader: R) -> Result<Vec<SessionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let s: SessionRecord = rec?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

pub fn read_sessions_jsonl<R: BufRead>(reader: R) -> Result<Vec<SessionRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SessionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("line {}: {e}", lineno + 1)))?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_sessions_csv<W: std::io::Write>(writer: W, sessions: &[SessionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in sessions {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Drops sessions connecting at or after `end` (e.g. a pandemic cutoff).
pub fn truncate_sessions(sessions: Vec<SessionRecord>, end: Option<DateTime<Utc>>) -> Vec<SessionRecord> {
    match end {
        Some(end) => sessions.into_iter().filter(|s| s.connect_utc < end).collect(),
        None => sessions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let csv_text = "site_id,station_id,connect_utc,disconnect_utc,energy_kwh\n\
                        a,s1,2019-01-01T10:00:00Z,2019-01-01T11:00:00Z,5.0\n";
        let s = read_sessions_csv(csv_text.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].energy_kwh, 5.0);
        let mut buf = Vec::new();
        write_sessions_csv(&mut buf, &s).unwrap();
        assert_eq!(read_sessions_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn jsonl_accepts_acn_field_names() {
        let line = r#"{"siteID": 2, "stationID": "2-39-78-362", "connectionTime": "Wed, 25 Apr 2018 11:08:04 GMT", "disconnectTime": "Wed, 25 Apr 2018 13:20:10 GMT", "kWhDelivered": 7.932}"#;
        let s = read_sessions_jsonl(line.as_bytes()).unwrap();
        assert_eq!(s[0].site_id, "2");
        assert_eq!(s[0].duration_secs(), 2 * 3600 + 12 * 60 + 6);
    }

    #[test]
    fn invalid_sessions_rejected() {
        let bad_order = "site_id,station_id,connect_utc,disconnect_utc,energy_kwh\n\
                         a,s1,2019-01-01T11:00:00Z,2019-01-01T10:00:00Z,5.0\n";
        assert!(read_sessions_csv(bad_order.as_bytes()).is_err());
        let negative = "site_id,station_id,connect_utc,disconnect_utc,energy_kwh\n\
                        a,s1,2019-01-01T10:00:00Z,2019-01-01T11:00:00Z,-1\n";
        assert!(read_sessions_csv(negative.as_bytes()).is_err());
    }
}
