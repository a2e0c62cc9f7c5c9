#![allow(dead_code)]

//! Synthetic traffic scenes with a scripted occupancy schedule.
//!
//! Background is a flat gray with sigma = 3 noise. Every occupied block is
//! painted with uniform random texture over [20, 235] (sigma around 62).

use lanewatch::geometry::{parse_lane_config, rasterize_blocks, BlockRect, LaneLayout};
use lanewatch::pipeline::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const WIDTH: u32 = 352;
pub const HEIGHT: u32 = 288;
pub const FPS: u32 = 5;

pub const TWO_LANES: &str = "\
# two approach lanes, stop line at the bottom of the frame
lane west
quad 40,280 160,280 140,30 80,30
blocks 6
stopline front

lane east
quad 190,280 310,280 270,30 210,30
blocks 6
stopline front
";

pub fn lanes() -> Vec<LaneLayout> {
    parse_lane_config(TWO_LANES, WIDTH, HEIGHT).unwrap()
}

pub fn blocks() -> Vec<Vec<BlockRect>> {
    lanes()
        .iter()
        .map(|l| rasterize_blocks(l, WIDTH, HEIGHT).unwrap())
        .collect()
}

pub struct Scene {
    rng: ChaCha8Rng,
    blocks: Vec<Vec<BlockRect>>,
    background: u8,
    noise: Normal<f64>,
    /// Current per-lane occupancy, block 0 at the stop line.
    pub occupancy: Vec<Vec<bool>>,
}

impl Scene {
    pub fn new(seed: u64) -> Self {
        let blocks = blocks();
        let occupancy = blocks.iter().map(|b| vec![false; b.len()]).collect();
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            blocks,
            background: 110,
            noise: Normal::new(0.0, 3.0).unwrap(),
            occupancy,
        }
    }

    /// Picks a fresh queue per lane: a prefix of random length and, now and
    /// then, one isolated vehicle behind a gap.
    pub fn reshuffle(&mut self) {
        for lane in self.occupancy.iter_mut() {
            let n = lane.len();
            let q = self.rng.random_range(0..=n);
            lane.iter_mut().enumerate().for_each(|(i, b)| *b = i < q);
            if q + 2 <= n && self.rng.random_bool(0.3) {
                let i = self.rng.random_range(q + 1..n);
                lane[i] = true;
            }
        }
    }

    pub fn set_occupancy(&mut self, occupancy: Vec<Vec<bool>>) {
        self.occupancy = occupancy;
    }

    /// Renders the current occupancy.
    pub fn render(&mut self, sequence: u64) -> Frame {
        let mut pixels = Vec::with_capacity((WIDTH * HEIGHT) as usize);
        for _ in 0..WIDTH * HEIGHT {
            let v = self.background as f64 + self.noise.sample(&mut self.rng);
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
        for (lane, rects) in self.blocks.iter().enumerate() {
            for r in rects {
                if !self.occupancy[lane][r.index] {
                    continue;
                }
                for y in r.y..r.y + r.height {
                    for x in r.x..r.x + r.width {
                        pixels[(y * WIDTH + x) as usize] = self.rng.random_range(20..=235);
                    }
                }
            }
        }
        Frame {
            pixels,
            width: WIDTH,
            height: HEIGHT,
            timestamp_ms: sequence * 1000 / FPS as u64,
            sequence,
        }
    }
}

/// A scripted stream: occupancy changes every `hold` frames.
pub fn scripted_stream(seed: u64, frames: u64, hold: u64) -> Vec<(Frame, Vec<Vec<bool>>)> {
    let mut scene = Scene::new(seed);
    (0..frames)
        .map(|seq| {
            if seq % hold == 0 {
                scene.reshuffle();
            }
            let f = scene.render(seq);
            (f, scene.occupancy.clone())
        })
        .collect()
}

/// Raw Y-plane bytes of a frame sequence.
pub fn raw_bytes<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> Vec<u8> {
    frames.into_iter().flat_map(|f| f.pixels.iter().copied()).collect()
}
