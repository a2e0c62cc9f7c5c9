//! Per-frame traffic status records.
//!
//! One line per frame: the timestamp in milliseconds followed by one
//! `lane_id:bitmap:queue` field per lane, space separated. Bitmaps list blocks
//! from the stop line outward, `1` for occupied.
//!
//! ```text
//! 41200 north:110100:2 south:000000:0
//! ```

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

/// Number of consecutively occupied blocks starting at the stop line.
pub fn queue_length(occupancy: &[bool]) -> usize {
    occupancy.iter().take_while(|&&b| b).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneStatus {
    pub lane_id: String,
    pub occupancy: Vec<bool>,
    pub queue_length: usize,
}

impl LaneStatus {
    pub fn new(lane_id: impl Into<String>, occupancy: Vec<bool>) -> Self {
        Self {
            lane_id: lane_id.into(),
            queue_length: queue_length(&occupancy),
            occupancy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficStatusReport {
    pub timestamp_ms: u64,
    pub lanes: Vec<LaneStatus>,
}

impl fmt::Display for TrafficStatusReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.timestamp_ms)?;
        for lane in &self.lanes {
            write!(f, " {}:", lane.lane_id)?;
            for &b in &lane.occupancy {
                f.write_str(if b { "1" } else { "0" })?;
            }
            write!(f, ":{}", lane.queue_length)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid report record: {0}")]
pub struct ReportParseError(String);

impl FromStr for TrafficStatusReport {
    type Err = ReportParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |m: &str| ReportParseError(m.to_string());
        let mut fields = s.split_whitespace();
        let timestamp_ms = fields
            .next()
            .ok_or_else(|| err("empty record"))?
            .parse()
            .map_err(|_| err("bad timestamp"))?;
        let mut lanes = Vec::new();
        for field in fields {
            let mut parts = field.rsplitn(3, ':');
            let (Some(queue), Some(bits), Some(id)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("lane field must be id:bitmap:queue"));
            };
            let occupancy = bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(err("bitmap must be 0/1")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let queue_length = queue.parse().map_err(|_| err("bad queue length"))?;
            lanes.push(LaneStatus {
                lane_id: id.to_string(),
                occupancy,
                queue_length,
            });
        }
        Ok(Self {
            timestamp_ms,
            lanes,
        })
    }
}

/// Writes one record per line and flushes after each.
pub struct ReportWriter<W> {
    sink: W,
    written: u64,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(sink: W) -> Self {
        Self { sink, written: 0 }
    }

    pub fn emit(&mut self, report: &TrafficStatusReport) -> io::Result<()> {
        writeln!(self.sink, "{report}")?;
        self.sink.flush()?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}
