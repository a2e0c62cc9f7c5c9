//! Frame ingestion, per-block detection and status reporting.

mod detector;
mod report;
mod stream;

use std::io::{self, Write};

use thiserror::Error;

pub use detector::{
    BlockFeatures, BlockObservation, Detector, DetectorConfig, DetectorError, LaneBlocks, Phase,
    UpdatePolicy,
};
pub use report::{queue_length, LaneStatus, ReportParseError, ReportWriter, TrafficStatusReport};
pub use stream::{ingest, Downsample, Frame, PgmDirReader, RawFrameReader, StreamError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("output: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunSummary {
    pub frames: u64,
    pub reports: u64,
    /// Initialization attempts that failed and were retried on later frames.
    pub init_failures: Vec<String>,
}

/// Drives `frames` through the detector, emitting one report per frame once
/// the model is ready. When `features` is given, every block's feature vector
/// is written as `sequence,lane_id,block,f1,...,f8`.
pub fn run<I, W>(
    detector: &mut Detector,
    frames: I,
    reports: &mut ReportWriter<W>,
    mut features: Option<&mut dyn Write>,
) -> Result<RunSummary, RunError>
where
    I: IntoIterator<Item = Result<Frame, StreamError>>,
    W: Write,
{
    let mut summary = RunSummary::default();
    for frame in frames {
        let frame = frame?;
        summary.frames += 1;
        let blocks = detector.extract(&frame)?;
        if let Some(sink) = features.as_deref_mut() {
            for b in &blocks {
                let lane_id = &detector.lanes()[b.lane].layout.lane_id;
                writeln!(sink, "{},{},{},{}", frame.sequence, lane_id, b.block_index, b.features)?;
            }
        }
        let was_ready = detector.phase() == Phase::Ready;
        match detector.observe_blocks(frame.sequence, frame.timestamp_ms, &blocks) {
            Ok(observations) => {
                if was_ready {
                    reports.emit(&detector.report(frame.timestamp_ms, &observations))?;
                    summary.reports += 1;
                }
            }
            Err(e) if e.is_recoverable() => {
                summary
                    .init_failures
                    .push(format!("frame {}: {e}", frame.sequence));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(summary)
}
