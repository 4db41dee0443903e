use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::describe::render_description;
use super::primitive::{allocate_frames, compose_primitives, Direction, MotionKind, MotionPrimitive, SpeedClass};
use crate::camera::{CameraFrame, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Frames per trajectory.
    pub frames: usize,
    /// Medium-speed duration of one primitive, seconds.
    pub base_duration_s: f64,
    pub min_primitives: usize,
    pub max_primitives: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { frames: 120, base_duration_s: 4.0, min_primitives: 1, max_primitives: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairRepr", into = "PairRepr")]
pub struct TextTrajPair {
    pub text: String,
    pub traj: Trajectory,
}

#[derive(Serialize, Deserialize)]
struct PairRepr {
    text: String,
    duration_s: f64,
    frames: Vec<CameraFrame>,
}

impl TryFrom<PairRepr> for TextTrajPair {
    type Error = Error;

    fn try_from(r: PairRepr) -> Result<Self> {
        if r.text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        Ok(Self { text: r.text, traj: Trajectory::new(r.frames, r.duration_s)? })
    }
}

impl From<TextTrajPair> for PairRepr {
    fn from(p: TextTrajPair) -> Self {
        PairRepr { text: p.text, duration_s: p.traj.duration_s(), frames: p.traj.into_frames() }
    }
}

/// A generated pair together with the primitives that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub pair: TextTrajPair,
    pub primitives: Vec<MotionPrimitive>,
    /// Seed the description was rendered with.
    pub text_seed: u64,
}

/// Per-item seed so items can be generated independently and in any order.
pub fn item_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_primitive(rng: &mut impl Rng, kind: MotionKind) -> MotionPrimitive {
    let speed = *SpeedClass::ALL.choose(rng).expect("non-empty");
    if kind == MotionKind::Static {
        return MotionPrimitive::still(speed);
    }
    let direction = if rng.gen_bool(0.5) { Direction::Positive } else { Direction::Negative };
    let magnitude = *kind.magnitude_levels().choose(rng).expect("non-empty");
    MotionPrimitive { kind, magnitude, direction, speed }
}

/// Generates item `index` of the corpus defined by `(seed, config)`.
pub fn generate_item(index: usize, seed: u64, config: &DatasetConfig) -> Result<LabeledPair> {
    let s = item_seed(seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let count = rng.gen_range(config.min_primitives.max(1)..=config.max_primitives.max(config.min_primitives).max(1));
    let primitives: Vec<MotionPrimitive> = (0..count)
        .map(|j| {
            // the first ten items open with each kind once, so every kind is covered
            let kind = if j == 0 && index < MotionKind::ALL.len() {
                MotionKind::ALL[index]
            } else {
                *MotionKind::ALL.choose(&mut rng).expect("non-empty")
            };
            sample_primitive(&mut rng, kind)
        })
        .collect();
    let alloc = allocate_frames(&primitives, config.frames, config.base_duration_s)?;
    let traj = compose_primitives(&primitives, &alloc, config.base_duration_s)?;
    let text_seed = s % 3;
    let text = render_description(&primitives, text_seed);
    Ok(LabeledPair { pair: TextTrajPair { text, traj }, primitives, text_seed })
}

pub fn generate_labeled(n: usize, seed: u64, config: &DatasetConfig) -> Result<Vec<LabeledPair>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    (0..n).map(|i| generate_item(i, seed, config)).collect()
}

pub fn generate_dataset(n: usize, seed: u64, config: &DatasetConfig) -> Result<Vec<TextTrajPair>> {
    Ok(generate_labeled(n, seed, config)?.into_iter().map(|l| l.pair).collect())
}

pub fn write_jsonl(pairs: &[TextTrajPair], mut out: impl Write) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<TextTrajPair>> {
    let mut pairs = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line)?);
    }
    Ok(pairs)
}

pub fn save_jsonl(pairs: &[TextTrajPair], path: &std::path::Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jsonl(pairs, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_jsonl(path: &std::path::Path) -> Result<Vec<TextTrajPair>> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}
