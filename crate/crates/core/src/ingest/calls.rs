use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{site_index, ErrorReport, IngestConfig, ParseMode, TowerId, TowerSite};
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallerGroup {
    Refugee,
    NonRefugee,
}

impl CallerGroup {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "refugee" | "1" => Some(CallerGroup::Refugee),
            "non-refugee" | "nonrefugee" | "0" => Some(CallerGroup::NonRefugee),
            _ => None,
        }
    }
}

/// Inbound/outbound flag. Parsed for validation only; sampling in the source
/// data makes it unreliable, so nothing downstream reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallDirection {
    Inbound,
    Outbound,
}

impl CallDirection {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "in" | "inbound" => Some(CallDirection::Inbound),
            "out" | "outbound" => Some(CallDirection::Outbound),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub caller_id: String,
    pub caller_group: CallerGroup,
    pub timestamp: NaiveDateTime,
    pub tower_id: TowerId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub rows: usize,
    pub kept: usize,
    pub non_refugee: usize,
    pub non_voice: usize,
    pub unresolved_site: usize,
    pub bad_timestamp: usize,
    pub out_of_period: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CallIngest {
    pub calls: Vec<CallRecord>,
    pub stats: CallStats,
    pub report: ErrorReport,
}

const CALL_HEADER: [&str; 7] = [
    "caller_id",
    "caller_group",
    "callee_group",
    "event_type",
    "call_type",
    "timestamp",
    "site_id",
];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .ok()
}

/// Reads the call file and inner-joins it against the surviving towers.
/// Only refugee voice calls are kept.
pub fn parse_calls(path: &Path, towers: &[TowerSite], cfg: &IngestConfig) -> Result<CallIngest> {
    let index = site_index(towers);
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let cols: Vec<usize> = CALL_HEADER
        .iter()
        .map(|n| {
            headers.iter().position(|h| h == *n).ok_or_else(|| Error::Parse {
                path: path.into(),
                line: 1,
                message: format!("missing column {n:?}"),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = CallIngest::default();
    let mut record = csv::StringRecord::new();
    let mut line = 1usize;
    loop {
        line += 1;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                out.stats.rows += 1;
                out.stats.malformed += 1;
                if cfg.parse_mode == ParseMode::Strict {
                    return Err(Error::Parse {
                        path: path.into(),
                        line,
                        message: e.to_string(),
                    });
                }
                out.report.push(path, line, e.to_string());
                continue;
            }
        }
        out.stats.rows += 1;
        let field = |i: usize| record.get(cols[i]);
        let (Some(caller), Some(group), Some(callee), Some(event), Some(direction), Some(ts), Some(site)) =
            (field(0), field(1), field(2), field(3), field(4), field(5), field(6))
        else {
            out.stats.malformed += 1;
            let msg = format!("expected {} fields, got {}", CALL_HEADER.len(), record.len());
            if cfg.parse_mode == ParseMode::Strict {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: msg,
                });
            }
            out.report.push(path, line, msg);
            continue;
        };
        let group = CallerGroup::parse(group);
        let valid_flags = CallerGroup::parse(callee).is_some() && CallDirection::parse(direction).is_some();
        if caller.is_empty() || group.is_none() || !valid_flags {
            out.stats.malformed += 1;
            let msg = "invalid caller id, group or call_type".to_owned();
            if cfg.parse_mode == ParseMode::Strict {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: msg,
                });
            }
            out.report.push(path, line, msg);
            continue;
        }
        if group != Some(CallerGroup::Refugee) {
            out.stats.non_refugee += 1;
            continue;
        }
        if !event.eq_ignore_ascii_case("voice") {
            out.stats.non_voice += 1;
            continue;
        }
        let Some(timestamp) = parse_timestamp(ts) else {
            out.stats.bad_timestamp += 1;
            continue;
        };
        if let Some((first, last)) = cfg.period {
            let day = timestamp.date();
            if day < first || day > last {
                out.stats.out_of_period += 1;
                continue;
            }
        }
        let Some(tower_id) = index.get(site) else {
            out.stats.unresolved_site += 1;
            continue;
        };
        out.calls.push(CallRecord {
            caller_id: caller.to_owned(),
            caller_group: CallerGroup::Refugee,
            timestamp,
            tower_id: tower_id.clone(),
        });
    }
    out.stats.kept = out.calls.len();
    Ok(out)
}

/// Joined-call artifact: `caller_id,timestamp,tower_id`.
pub fn write_joined_calls(calls: &[CallRecord], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["caller_id", "timestamp", "tower_id"])?;
    for c in calls {
        wr.write_record([
            c.caller_id.as_str(),
            &c.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            c.tower_id.0.as_str(),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<joined calls>", e))?;
    Ok(())
}

pub fn read_joined_calls(path: &Path) -> Result<Vec<CallRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    let mut line = 1;
    while rd.read_record(&mut rec)? {
        line += 1;
        let timestamp = rec.get(1).and_then(parse_timestamp).ok_or_else(|| Error::Parse {
            path: path.into(),
            line,
            message: "bad timestamp".into(),
        })?;
        out.push(CallRecord {
            caller_id: rec[0].to_owned(),
            caller_group: CallerGroup::Refugee,
            timestamp,
            tower_id: TowerId(rec[2].to_owned()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::ingest::Partition;

    fn towers() -> Vec<TowerSite> {
        vec![
            TowerSite {
                tower_id: TowerId::from("A"),
                location: GeoPoint { lat: 41.0, lon: 28.9 },
                merged_site_ids: vec!["A".into(), "A2".into()],
                partition: Partition::Europe,
            },
            TowerSite {
                tower_id: TowerId::from("B"),
                location: GeoPoint { lat: 41.0, lon: 29.1 },
                merged_site_ids: vec!["B".into()],
                partition: Partition::Asia,
            },
        ]
    }

    fn parse(body: &str) -> CallIngest {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calls.csv");
        std::fs::write(&p, format!("caller_id,caller_group,callee_group,event_type,call_type,timestamp,site_id\n{body}")).unwrap();
        parse_calls(&p, &towers(), &IngestConfig::default()).unwrap()
    }

    #[test]
    fn merged_site_resolves_to_canonical_tower() {
        let r = parse("u1,refugee,non-refugee,voice,out,2017-01-01 23:10:00,A2\n");
        assert_eq!(r.calls.len(), 1);
        assert_eq!(r.calls[0].tower_id, TowerId::from("A"));
    }

    #[test]
    fn dropped_site_excluded_by_inner_join() {
        let r = parse("u1,refugee,refugee,voice,in,2017-01-01 23:10:00,GONE\n");
        assert!(r.calls.is_empty());
        assert_eq!(r.stats.unresolved_site, 1);
    }

    #[test]
    fn non_refugee_and_sms_rows_excluded() {
        let r = parse(
            "u1,non-refugee,refugee,voice,in,2017-01-01 23:10:00,A\n\
             u2,refugee,refugee,sms,in,2017-01-01 23:10:00,A\n\
             u3,refugee,refugee,voice,in,2017-01-01 23:10:00,B\n",
        );
        assert_eq!(r.calls.len(), 1);
        assert_eq!(r.calls[0].caller_id, "u3");
        assert_eq!(r.stats.non_refugee, 1);
        assert_eq!(r.stats.non_voice, 1);
    }

    #[test]
    fn call_type_does_not_affect_retention() {
        let r = parse(
            "u1,refugee,refugee,voice,in,2017-01-01 23:10:00,A\n\
             u1,refugee,refugee,voice,out,2017-01-01 23:11:00,A\n",
        );
        assert_eq!(r.calls.len(), 2);
    }

    #[test]
    fn bad_timestamps_counted() {
        let r = parse(
            "u1,refugee,refugee,voice,in,2017-13-01 23:10:00,A\n\
             u1,refugee,refugee,voice,in,yesterday,A\n",
        );
        assert!(r.calls.is_empty());
        assert_eq!(r.stats.bad_timestamp, 2);
    }

    #[test]
    fn joined_calls_round_trip() {
        let r = parse("u1,refugee,refugee,voice,in,2017-01-01 23:10:00,A2\nu2,refugee,refugee,voice,in,2017-01-02 03:00:00,B\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        write_joined_calls(&r.calls, std::fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(read_joined_calls(&p).unwrap(), r.calls);
    }
}
