//! Lane configuration and block rasterization.
//!
//! A lane is declared as a convex quadrilateral (usually a trapezoid narrowing
//! with distance from the camera). It is cut into `block_count` slices of equal
//! length along the lane axis, and each slice is replaced by the largest
//! axis-aligned integer rectangle that fits inside it.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Smallest block edge, in pixels, accepted by the rasterizer.
pub const MIN_BLOCK_SIDE: u32 = 8;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("lane {lane}: {message}")]
    Invalid { lane: String, message: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("lane {lane}: block {index} is {width}x{height} px, below the {min}x{min} minimum")]
    BlockTooSmall {
        lane: String,
        index: usize,
        width: u32,
        height: u32,
        min: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// Which end of the lane touches the stop line. Block 0 sits there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopLineEnd {
    Front,
    Rear,
}

impl FromStr for StopLineEnd {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front" => Ok(StopLineEnd::Front),
            "rear" => Ok(StopLineEnd::Rear),
            other => Err(format!("expected `front` or `rear`, got `{other}`")),
        }
    }
}

impl fmt::Display for StopLineEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopLineEnd::Front => "front",
            StopLineEnd::Rear => "rear",
        })
    }
}

/// A lane outline. `quad` is ordered front-left, front-right, rear-right,
/// rear-left.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneLayout {
    pub lane_id: String,
    pub quad: [Point; 4],
    pub block_count: usize,
    pub stop_line_end: StopLineEnd,
}

/// Axis-aligned detection block covering pixels `x..x+width`, `y..y+height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub index: usize,
}

impl BlockRect {
    pub fn overlaps(&self, other: &BlockRect) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    pub fn center(&self) -> Point {
        Point::new(
            self.x as f64 + self.width as f64 / 2.0,
            self.y as f64 + self.height as f64 / 2.0,
        )
    }
}

impl LaneLayout {
    /// Checks the lane against a `frame_w` x `frame_h` frame.
    pub fn validate(&self, frame_w: u32, frame_h: u32) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            lane: self.lane_id.clone(),
            message,
        };
        if self.block_count == 0 {
            return Err(invalid("block count must be at least 1".into()));
        }
        for p in &self.quad {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.y >= 0.0
                && p.x < frame_w as f64
                && p.y < frame_h as f64;
            if !inside {
                return Err(invalid(format!(
                    "point ({}, {}) outside the {frame_w}x{frame_h} frame",
                    p.x, p.y
                )));
            }
        }
        if !is_simple(&self.quad) {
            return Err(invalid("quad edges intersect each other".into()));
        }
        if !is_convex(&self.quad) {
            return Err(invalid("quad must be convex".into()));
        }
        Ok(())
    }

    /// Lane axis length: distance between the front and rear edge midpoints.
    pub fn axis_length(&self) -> f64 {
        let [fl, fr, rr, rl] = self.quad;
        let front = fl.lerp(fr, 0.5);
        let rear = rl.lerp(rr, 0.5);
        ((rear.x - front.x).powi(2) + (rear.y - front.y).powi(2)).sqrt()
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn is_simple(quad: &[Point; 4]) -> bool {
    // Only opposite edges can cross in a quadrilateral.
    !segments_cross(quad[0], quad[1], quad[2], quad[3])
        && !segments_cross(quad[1], quad[2], quad[3], quad[0])
}

fn is_convex(quad: &[Point; 4]) -> bool {
    let turns: Vec<f64> = (0..4)
        .map(|i| cross(quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]))
        .collect();
    turns.iter().all(|&t| t > EPS) || turns.iter().all(|&t| t < -EPS)
}

/// Parses a lane configuration document and validates every lane against the
/// frame size.
///
/// ```text
/// # comment
/// lane north-1
/// quad 60,100 120,100 120,220 60,220
/// blocks 3
/// stopline front
/// ```
pub fn parse_lane_config(
    text: &str,
    frame_w: u32,
    frame_h: u32,
) -> Result<Vec<LaneLayout>, ConfigError> {
    struct Partial {
        id: String,
        line: usize,
        quad: Option<[Point; 4]>,
        blocks: Option<usize>,
        stopline: Option<StopLineEnd>,
    }

    fn finish(p: Partial) -> Result<LaneLayout, ConfigError> {
        let missing = |field: &str| ConfigError::Parse {
            line: p.line,
            message: format!("lane `{}` is missing `{field}`", p.id),
        };
        Ok(LaneLayout {
            quad: p.quad.ok_or_else(|| missing("quad"))?,
            block_count: p.blocks.ok_or_else(|| missing("blocks"))?,
            stop_line_end: p.stopline.ok_or_else(|| missing("stopline"))?,
            lane_id: p.id,
        })
    }

    let mut lanes = Vec::new();
    let mut current: Option<Partial> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ConfigError::Parse { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let key = words.next().unwrap_or_default();
        let args: Vec<&str> = words.collect();

        if key == "lane" {
            if args.len() != 1 {
                return Err(err("expected `lane <id>`".into()));
            }
            let id = args[0];
            if id.contains(':') {
                return Err(err(format!("lane id `{id}` must not contain `:`")));
            }
            if let Some(prev) = current.take() {
                lanes.push(finish(prev)?);
            }
            if lanes.iter().any(|l: &LaneLayout| l.lane_id == id) {
                return Err(err(format!("duplicate lane id `{id}`")));
            }
            current = Some(Partial {
                id: id.to_string(),
                line,
                quad: None,
                blocks: None,
                stopline: None,
            });
            continue;
        }

        let lane = current
            .as_mut()
            .ok_or_else(|| err(format!("`{key}` before any `lane` record")))?;
        match key {
            "quad" => {
                if lane.quad.is_some() {
                    return Err(err("duplicate `quad`".into()));
                }
                if args.len() != 4 {
                    return Err(err(format!("`quad` takes 4 points, got {}", args.len())));
                }
                let mut quad = [Point::new(0.0, 0.0); 4];
                for (slot, arg) in quad.iter_mut().zip(&args) {
                    *slot = parse_point(arg).map_err(&err)?;
                }
                lane.quad = Some(quad);
            }
            "blocks" => {
                if lane.blocks.is_some() {
                    return Err(err("duplicate `blocks`".into()));
                }
                let [n] = args[..] else {
                    return Err(err("expected `blocks <n>`".into()));
                };
                let n = n
                    .parse::<usize>()
                    .map_err(|_| err(format!("invalid block count `{n}`")))?;
                lane.blocks = Some(n);
            }
            "stopline" => {
                if lane.stopline.is_some() {
                    return Err(err("duplicate `stopline`".into()));
                }
                let [end] = args[..] else {
                    return Err(err("expected `stopline front|rear`".into()));
                };
                lane.stopline = Some(end.parse().map_err(&err)?);
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    if let Some(prev) = current.take() {
        lanes.push(finish(prev)?);
    }

    for lane in &lanes {
        lane.validate(frame_w, frame_h)?;
    }
    Ok(lanes)
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let coord = |v: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|c| c.is_finite())
            .ok_or_else(|| format!("invalid coordinate `{v}`"))
    };
    Ok(Point::new(coord(x)?, coord(y)?))
}

/// Horizontal extent of a convex polygon at height `y`.
fn extent_at(poly: &[Point; 4], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..4 {
        let a = poly[i];
        let b = poly[(i + 1) % 4];
        let (ymin, ymax) = if a.y <= b.y { (a.y, b.y) } else { (b.y, a.y) };
        if y < ymin - EPS || y > ymax + EPS {
            continue;
        }
        if (b.y - a.y).abs() < EPS {
            lo = lo.min(a.x.min(b.x));
            hi = hi.max(a.x.max(b.x));
        } else {
            let t = ((y - a.y) / (b.y - a.y)).clamp(0.0, 1.0);
            let x = a.x + (b.x - a.x) * t;
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Largest-area integer rectangle inside a convex quadrilateral, as
/// `(x, y, width, height)`.
///
/// For a convex region the left boundary is convex in `y` and the right one
/// concave, so the usable x-range over `[top, bottom]` is set by the two end
/// rows alone.
fn largest_inscribed_rect(poly: &[Point; 4]) -> (u32, u32, u32, u32) {
    let ymin = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let top = (ymin - EPS).ceil().max(0.0) as i64;
    let bottom = (ymax + EPS).floor() as i64;
    if bottom <= top {
        return (0, 0, 0, 0);
    }
    let rows: Vec<Option<(f64, f64)>> = (top..=bottom).map(|y| extent_at(poly, y as f64)).collect();

    let mut best = (0u32, 0u32, 0u32, 0u32);
    let mut best_area = 0u64;
    for a in 0..rows.len() {
        let Some((la, ra)) = rows[a] else { continue };
        for b in a + 1..rows.len() {
            let Some((lb, rb)) = rows[b] else { continue };
            let x0 = (la.max(lb) - EPS).ceil();
            let x1 = (ra.min(rb) + EPS).floor();
            if x1 <= x0 {
                continue;
            }
            let width = (x1 - x0) as u32;
            let height = (b - a) as u32;
            let area = width as u64 * height as u64;
            if area > best_area {
                best_area = area;
                best = (x0 as u32, (top + a as i64) as u32, width, height);
            }
        }
    }
    best
}

/// The `k`-th of `n` equal-length slices along the lane axis, counted from the
/// front edge.
fn slice(quad: &[Point; 4], k: usize, n: usize) -> [Point; 4] {
    let [fl, fr, rr, rl] = *quad;
    let t0 = k as f64 / n as f64;
    let t1 = (k + 1) as f64 / n as f64;
    [fl.lerp(rl, t0), fr.lerp(rr, t0), fr.lerp(rr, t1), fl.lerp(rl, t1)]
}

/// Cuts a lane into `block_count` rectangles. Block 0 is at the stop line.
pub fn rasterize_blocks(
    lane: &LaneLayout,
    frame_w: u32,
    frame_h: u32,
) -> Result<Vec<BlockRect>, RasterError> {
    let n = lane.block_count;
    let mut blocks = Vec::with_capacity(n);
    for k in 0..n {
        let index = match lane.stop_line_end {
            StopLineEnd::Front => k,
            StopLineEnd::Rear => n - 1 - k,
        };
        let (x, y, width, height) = largest_inscribed_rect(&slice(&lane.quad, k, n));
        let fits = x + width <= frame_w && y + height <= frame_h;
        if width < MIN_BLOCK_SIDE || height < MIN_BLOCK_SIDE || !fits {
            return Err(RasterError::BlockTooSmall {
                lane: lane.lane_id.clone(),
                index,
                width,
                height,
                min: MIN_BLOCK_SIDE,
            });
        }
        blocks.push(BlockRect {
            x,
            y,
            width,
            height,
            index,
        });
    }
    blocks.sort_by_key(|b| b.index);
    Ok(blocks)
}
