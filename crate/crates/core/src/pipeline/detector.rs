//! The detector state machine.
//!
//! While collecting, block features are buffered until `init_samples` are
//! available; then K-means seeds batch EM and the fitted components are tagged
//! lane/vehicle. From then on every frame is classified against the model as
//! it stood before the frame, after which the frame's features are folded in
//! with online EM.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::classifier::{assign_class_tags, classify, ClassDecision, ClassifyError, Label};
use crate::clustering::{kmeans, ClusterError, KmeansParams};
use crate::features::{extract_features, FeatureError, FeatureParams, FeatureVector, Patch};
use crate::geometry::{rasterize_blocks, BlockRect, LaneLayout, RasterError};
use crate::gmm::{fit_em, EmOptions, GmmError, GmmModel};
use crate::pipeline::report::{LaneStatus, TrafficStatusReport};
use crate::pipeline::stream::Frame;

const SNAPSHOT_HEADER: &str = "lanewatch-snapshot v1";

/// Reseeded K-means attempts after a component collapses during batch EM.
const COLLAPSE_RETRIES: u64 = 3;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("initialization failed: {0}")]
    InitCluster(#[from] ClusterError),
    #[error("initialization failed: {0}")]
    InitEm(#[from] GmmError),
    #[error("initialization failed: {0}")]
    InitTags(#[from] ClassifyError),
    #[error("frame is {got_w}x{got_h}, detector expects {want_w}x{want_h}")]
    FrameSize {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
}

impl DetectorError {
    /// Initialization failures leave the detector collecting; feeding more
    /// frames retries.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            DetectorError::InitCluster(_) | DetectorError::InitEm(_) | DetectorError::InitTags(_)
        )
    }
}

/// Which classified samples feed the online update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdatePolicy {
    All,
    /// Only samples with `|f(x)|` above the margin.
    Margin(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub frame_width: u32,
    pub frame_height: u32,
    pub features: FeatureParams,
    /// Buffered block samples needed before the first fit; also the ring
    /// buffer capacity.
    pub init_samples: usize,
    pub lambda: f64,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub em: EmOptions,
    pub update_policy: UpdatePolicy,
    /// One model per lane instead of one shared model.
    pub per_lane_models: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            frame_width: 352,
            frame_height: 288,
            features: FeatureParams::default(),
            init_samples: 2000,
            lambda: 0.05,
            seed: 0,
            kmeans_restarts: 3,
            em: EmOptions::default(),
            update_policy: UpdatePolicy::All,
            per_lane_models: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Collecting,
    Ready,
}

#[derive(Debug, Clone)]
pub struct LaneBlocks {
    pub layout: LaneLayout,
    pub blocks: Vec<BlockRect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockObservation {
    pub lane: usize,
    pub lane_id: String,
    pub block_index: usize,
    pub features: FeatureVector,
    pub decision: ClassDecision,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct ModelSlot {
    buffer: VecDeque<FeatureVector>,
    model: Option<GmmModel>,
}

/// Features of one block within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFeatures {
    pub lane: usize,
    pub block_index: usize,
    pub features: FeatureVector,
}

pub struct Detector {
    config: DetectorConfig,
    lanes: Vec<LaneBlocks>,
    slots: Vec<ModelSlot>,
    phase: Phase,
    next_sequence: u64,
}

impl Detector {
    pub fn new(config: DetectorConfig, layouts: Vec<LaneLayout>) -> Result<Self, DetectorError> {
        let lanes = layouts
            .into_iter()
            .map(|layout| {
                let blocks = rasterize_blocks(&layout, config.frame_width, config.frame_height)?;
                Ok(LaneBlocks { layout, blocks })
            })
            .collect::<Result<Vec<_>, RasterError>>()?;
        let slot_count = if config.per_lane_models { lanes.len() } else { 1 };
        let slots = (0..slot_count)
            .map(|_| ModelSlot {
                buffer: VecDeque::with_capacity(config.init_samples),
                model: None,
            })
            .collect();
        Ok(Self {
            config,
            lanes,
            slots,
            phase: Phase::Collecting,
            next_sequence: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn lanes(&self) -> &[LaneBlocks] {
        &self.lanes
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Sequence number following the last observed frame.
    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    /// Model used for `lane`, once fitted.
    pub fn model(&self, lane: usize) -> Option<&GmmModel> {
        self.slots[self.slot_of(lane)].model.as_ref()
    }

    pub fn buffered(&self) -> usize {
        self.slots.iter().map(|s| s.buffer.len()).sum()
    }

    fn slot_of(&self, lane: usize) -> usize {
        if self.config.per_lane_models {
            lane
        } else {
            0
        }
    }

    /// Feature vector of every block, lanes in configuration order and blocks
    /// from the stop line outward.
    pub fn extract(&self, frame: &Frame) -> Result<Vec<BlockFeatures>, DetectorError> {
        if (frame.width, frame.height) != (self.config.frame_width, self.config.frame_height) {
            return Err(DetectorError::FrameSize {
                got_w: frame.width,
                got_h: frame.height,
                want_w: self.config.frame_width,
                want_h: self.config.frame_height,
            });
        }
        let mut out = Vec::new();
        for (lane, lb) in self.lanes.iter().enumerate() {
            for b in &lb.blocks {
                let patch = Patch::crop(
                    &frame.pixels,
                    frame.width as usize,
                    b.x as usize,
                    b.y as usize,
                    b.width as usize,
                    b.height as usize,
                );
                out.push(BlockFeatures {
                    lane,
                    block_index: b.index,
                    features: extract_features(&patch, &self.config.features)?,
                });
            }
        }
        Ok(out)
    }

    /// Processes one frame. Returns no observations while collecting.
    pub fn observe_frame(&mut self, frame: &Frame) -> Result<Vec<BlockObservation>, DetectorError> {
        let blocks = self.extract(frame)?;
        self.observe_blocks(frame.sequence, frame.timestamp_ms, &blocks)
    }

    /// Same as [`Detector::observe_frame`] with the frame's block features
    /// already extracted.
    pub fn observe_blocks(
        &mut self,
        sequence: u64,
        timestamp_ms: u64,
        blocks: &[BlockFeatures],
    ) -> Result<Vec<BlockObservation>, DetectorError> {
        self.next_sequence = sequence + 1;
        let capacity = self.config.init_samples.max(1);
        for b in blocks {
            let slot = self.slot_of(b.lane);
            let buffer = &mut self.slots[slot].buffer;
            if buffer.len() == capacity {
                buffer.pop_front();
            }
            buffer.push_back(b.features);
        }

        match self.phase {
            Phase::Collecting => {
                if self.slots.iter().all(|s| s.buffer.len() >= self.config.init_samples) {
                    self.initialize()?;
                }
                Ok(Vec::new())
            }
            Phase::Ready => {
                let mut observations = Vec::with_capacity(blocks.len());
                for b in blocks {
                    let model = self.model(b.lane).expect("ready phase has fitted models");
                    let decision = classify(&b.features, model).expect("ready models are tagged");
                    observations.push(BlockObservation {
                        lane: b.lane,
                        lane_id: self.lanes[b.lane].layout.lane_id.clone(),
                        block_index: b.block_index,
                        features: b.features,
                        decision,
                        timestamp_ms,
                    });
                }
                for obs in &observations {
                    let admit = match self.config.update_policy {
                        UpdatePolicy::All => true,
                        UpdatePolicy::Margin(m) => obs.decision.discriminant.abs() > m,
                    };
                    if admit {
                        let slot = self.slot_of(obs.lane);
                        let model = self.slots[slot].model.as_mut().expect("fitted");
                        model.update_online(&obs.features, self.config.lambda);
                    }
                }
                Ok(observations)
            }
        }
    }

    fn initialize(&mut self) -> Result<(), DetectorError> {
        let mut fitted = Vec::with_capacity(self.slots.len());
        for (i, slot) in self.slots.iter().enumerate() {
            let points: Vec<FeatureVector> = slot.buffer.iter().copied().collect();
            let base_seed = self.config.seed.wrapping_add(i as u64);
            let mut attempt = 0;
            let model = loop {
                let params = KmeansParams {
                    restarts: self.config.kmeans_restarts,
                    max_iter: 100,
                    seed: base_seed.wrapping_add(attempt * 0x9E37_79B9),
                };
                let init = kmeans(&points, &params)?;
                match fit_em(&points, &init, &self.config.em) {
                    Ok(fit) => break fit.model,
                    Err(GmmError::Collapse { .. }) if attempt < COLLAPSE_RETRIES => attempt += 1,
                    Err(e) => return Err(e.into()),
                }
            };
            fitted.push(assign_class_tags(&model)?);
        }
        for (slot, model) in self.slots.iter_mut().zip(fitted) {
            slot.model = Some(model);
        }
        self.phase = Phase::Ready;
        Ok(())
    }

    /// Occupancy report for one frame's observations.
    pub fn report(&self, timestamp_ms: u64, observations: &[BlockObservation]) -> TrafficStatusReport {
        let mut occupancy: Vec<Vec<bool>> = self.lanes.iter().map(|l| vec![false; l.blocks.len()]).collect();
        for obs in observations {
            occupancy[obs.lane][obs.block_index] = obs.decision.label == Label::Vehicle;
        }
        TrafficStatusReport {
            timestamp_ms,
            lanes: self
                .lanes
                .iter()
                .zip(occupancy)
                .map(|(l, occ)| LaneStatus::new(l.layout.lane_id.clone(), occ))
                .collect(),
        }
    }

    /// Full learning state as text: phase, models and sample buffers.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SNAPSHOT_HEADER}");
        let _ = writeln!(out, "next_sequence {}", self.next_sequence);
        let _ = writeln!(
            out,
            "phase {}",
            match self.phase {
                Phase::Collecting => "collecting",
                Phase::Ready => "ready",
            }
        );
        let layout: Vec<String> = self.lanes.iter().map(|l| l.blocks.len().to_string()).collect();
        let _ = writeln!(out, "layout {}", layout.join(","));
        let _ = writeln!(out, "slots {}", self.slots.len());
        for slot in &self.slots {
            let _ = writeln!(out, "buffer {}", slot.buffer.len());
            for f in &slot.buffer {
                let vals: Vec<String> = f.0.iter().map(|v| format!("{v:.16e}")).collect();
                let _ = writeln!(out, "{}", vals.join(","));
            }
            match &slot.model {
                None => out.push_str("model none\n"),
                Some(m) => {
                    out.push_str("model\n");
                    out.push_str(&m.to_text());
                    out.push_str("end\n");
                }
            }
        }
        out
    }

    /// Rebuilds a detector from [`Detector::snapshot`] output. The lane
    /// configuration must rasterize to the same block layout.
    pub fn restore(config: DetectorConfig, layouts: Vec<LaneLayout>, text: &str) -> Result<Self, DetectorError> {
        let mut det = Detector::new(config, layouts)?;
        let mut cur = Cursor {
            lines: text.lines().collect(),
            pos: 0,
        };

        let (line, header) = cur.take("")?;
        if header.trim() != SNAPSHOT_HEADER {
            return Err(snapshot_err(line, "unknown snapshot header"));
        }
        let (line, v) = cur.take("next_sequence")?;
        det.next_sequence = v.parse().map_err(|_| snapshot_err(line, "bad sequence"))?;
        let (line, v) = cur.take("phase")?;
        det.phase = match v.as_str() {
            "collecting" => Phase::Collecting,
            "ready" => Phase::Ready,
            _ => return Err(snapshot_err(line, "bad phase")),
        };
        let (line, v) = cur.take("layout")?;
        let expected: Vec<String> = det.lanes.iter().map(|l| l.blocks.len().to_string()).collect();
        if v != expected.join(",") {
            return Err(snapshot_err(line, "lane layout differs from the configuration"));
        }
        let (line, v) = cur.take("slots")?;
        if v.parse::<usize>().ok() != Some(det.slots.len()) {
            return Err(snapshot_err(line, "model slot count differs from the configuration"));
        }
        for s in 0..det.slots.len() {
            let (line, v) = cur.take("buffer")?;
            let n: usize = v.parse().map_err(|_| snapshot_err(line, "bad buffer length"))?;
            let mut buffer = VecDeque::with_capacity(n.max(det.config.init_samples));
            for _ in 0..n {
                let (line, v) = cur.take("")?;
                buffer.push_back(
                    v.parse::<FeatureVector>()
                        .map_err(|e| snapshot_err(line, &e.to_string()))?,
                );
            }
            let (line, v) = cur.take("model")?;
            let model = match v.as_str() {
                "none" => None,
                "" => {
                    let start = cur.pos;
                    let end = (start..cur.lines.len())
                        .find(|&i| cur.lines[i].trim() == "end")
                        .ok_or_else(|| snapshot_err(line, "model block without `end`"))?;
                    let body = cur.lines[start..end].join("\n");
                    cur.pos = end + 1;
                    let model = GmmModel::from_text(&body, start + 1).map_err(|e| DetectorError::Snapshot {
                        line: start + 1,
                        message: e.to_string(),
                    })?;
                    Some(model)
                }
                _ => return Err(snapshot_err(line, "expected `model` or `model none`")),
            };
            det.slots[s] = ModelSlot { buffer, model };
        }
        if det.phase == Phase::Ready && det.slots.iter().any(|s| s.model.is_none()) {
            return Err(snapshot_err(cur.pos, "ready snapshot without a model"));
        }
        Ok(det)
    }
}

fn snapshot_err(line: usize, message: &str) -> DetectorError {
    DetectorError::Snapshot {
        line: line + 1,
        message: message.to_string(),
    }
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl Cursor<'_> {
    /// Next line, which must start with `key`; returns its 0-based index and
    /// the remainder.
    fn take(&mut self, key: &str) -> Result<(usize, String), DetectorError> {
        let line = self.pos;
        let l = self
            .lines
            .get(line)
            .ok_or_else(|| snapshot_err(line, &format!("missing `{key}`")))?;
        self.pos += 1;
        let rest = if key.is_empty() {
            Some(*l)
        } else {
            l.strip_prefix(key)
                .filter(|r| r.is_empty() || r.starts_with(' '))
                .map(str::trim)
        };
        rest.map(|r| (line, r.to_string()))
            .ok_or_else(|| snapshot_err(line, &format!("expected `{key}`")))
    }
}
