//! Point tracks across image triplets.
//!
//! Keypoints (detector output ingested from files, or synthesized from a
//! simulated run) are matched between consecutive frames by mutual
//! L2-nearest-neighbor descriptor distance, chained across the triplet,
//! and filtered by a row-shift gate: a surviving track keeps its y
//! coordinate within `y_shift_threshold` pixels across all three frames.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::csvutil::{self, CsvError};
use crate::projection::SimulatedRun;
use crate::rng::{self, tag};

pub const TRACKS_HEADER: &str = "track_id,x1,y1,x2,y2,x3,y3";

/// Default row-shift gate in pixels; matches are dropped when any pairwise
/// y shift within the triplet reaches this value.
pub const DEFAULT_Y_SHIFT_THRESHOLD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("keypoint list for {side} is empty")]
    EmptyInput { side: &'static str },
    #[error("descriptor length mismatch: {left} vs {right}")]
    DescriptorLengthMismatch { left: usize, right: usize },
    #[error("one-hot descriptors need dim >= point count ({dim} < {required})")]
    DescriptorDimTooSmall { dim: usize, required: usize },
    #[error(transparent)]
    Csv(#[from] CsvError),
}

impl TrackError {
    pub fn code(&self) -> &'static str {
        match self {
            TrackError::EmptyInput { .. } => "EmptyInput",
            TrackError::DescriptorLengthMismatch { .. } => "DescriptorLengthMismatch",
            TrackError::DescriptorDimTooSmall { .. } => "DescriptorDimTooSmall",
            TrackError::Csv(e) => e.code(),
        }
    }
}

/// A detected keypoint with its descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub frame: usize,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub descriptor: Vec<f64>,
}

/// One point's pixel coordinates across a frame triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletTrack {
    pub x: [f64; 3],
    pub y: [f64; 3],
    /// Keypoint ids the track was chained from; `None` for tracks read
    /// from coordinate-only files or built synthetically.
    pub source_ids: Option<[usize; 3]>,
}

impl TripletTrack {
    pub fn from_coords(x: [f64; 3], y: [f64; 3]) -> Self {
        Self { x, y, source_ids: None }
    }

    /// Largest pairwise |Δy| within the triplet.
    pub fn max_y_shift(&self) -> f64 {
        let d01 = (self.y[0] - self.y[1]).abs();
        let d02 = (self.y[0] - self.y[2]).abs();
        let d12 = (self.y[1] - self.y[2]).abs();
        d01.max(d02).max(d12)
    }

    /// Content key for order-independent processing: compares the six
    /// coordinates with a total order.
    pub fn content_key(&self) -> [u64; 6] {
        let k = |v: f64| {
            // Map f64 to lexicographically ordered u64 (total order).
            let bits = v.to_bits();
            if bits >> 63 == 0 {
                bits ^ (1 << 63)
            } else {
                !bits
            }
        };
        [
            k(self.x[0]),
            k(self.y[0]),
            k(self.x[1]),
            k(self.y[1]),
            k(self.x[2]),
            k(self.y[2]),
        ]
    }
}

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn check_descriptors(list: &[Keypoint], side: &'static str) -> Result<usize, TrackError> {
    let first = list
        .first()
        .ok_or(TrackError::EmptyInput { side })?
        .descriptor
        .len();
    for kp in list {
        if kp.descriptor.len() != first {
            return Err(TrackError::DescriptorLengthMismatch {
                left: first,
                right: kp.descriptor.len(),
            });
        }
    }
    Ok(first)
}

fn nearest(query: &Keypoint, candidates: &[Keypoint]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, kp) in candidates.iter().enumerate() {
        let d = squared_l2(&query.descriptor, &kp.descriptor);
        // Strict < keeps the lowest index on ties.
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Mutual nearest-neighbor matches between two keypoint lists.
///
/// Pair `(i, j)` survives iff `b[j]` is `a[i]`'s L2-nearest descriptor and
/// `a[i]` is `b[j]`'s. Distance ties resolve to the lowest index. Output is
/// ordered by `i`.
pub fn match_mutual_nn(a: &[Keypoint], b: &[Keypoint]) -> Result<Vec<(usize, usize)>, TrackError> {
    let len_a = check_descriptors(a, "first frame")?;
    let len_b = check_descriptors(b, "second frame")?;
    if len_a != len_b {
        return Err(TrackError::DescriptorLengthMismatch { left: len_a, right: len_b });
    }
    let fwd: Vec<usize> = a.iter().map(|kp| nearest(kp, b)).collect();
    let back: Vec<usize> = b.iter().map(|kp| nearest(kp, a)).collect();
    Ok(fwd
        .iter()
        .enumerate()
        .filter(|&(i, &j)| back[j] == i)
        .map(|(i, &j)| (i, j))
        .collect())
}

/// Chain mutual matches across a triplet and apply the row-shift gate.
///
/// A track `(i, j, k)` is emitted iff `(i, j)` survives mutual matching
/// for frames 1–2, `(j, k)` for frames 2–3, and every pairwise y shift in
/// the triplet is strictly below `y_shift_threshold`. Any empty frame
/// yields an empty track list.
pub fn build_triplet_tracks(
    kp1: &[Keypoint],
    kp2: &[Keypoint],
    kp3: &[Keypoint],
    y_shift_threshold: f64,
) -> Result<Vec<TripletTrack>, TrackError> {
    if kp1.is_empty() || kp2.is_empty() || kp3.is_empty() {
        return Ok(Vec::new());
    }
    let m12 = match_mutual_nn(kp1, kp2)?;
    let m23 = match_mutual_nn(kp2, kp3)?;
    let mut second_to_third = vec![None; kp2.len()];
    for (j, k) in m23 {
        second_to_third[j] = Some(k);
    }
    let mut tracks = Vec::new();
    for (i, j) in m12 {
        let Some(k) = second_to_third[j] else { continue };
        let (p1, p2, p3) = (&kp1[i], &kp2[j], &kp3[k]);
        let track = TripletTrack {
            x: [p1.x, p2.x, p3.x],
            y: [p1.y, p2.y, p3.y],
            source_ids: Some([p1.id, p2.id, p3.id]),
        };
        if track.max_y_shift() < y_shift_threshold {
            tracks.push(track);
        }
    }
    Ok(tracks)
}

/// Keypoints grouped by frame, with a validated uniform descriptor length.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    by_frame: BTreeMap<usize, Vec<Keypoint>>,
    descriptor_len: usize,
}

impl KeypointSet {
    pub fn descriptor_len(&self) -> usize {
        self.descriptor_len
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_frame.keys().copied()
    }

    /// Keypoints of one frame; empty slice if the frame has none.
    pub fn frame(&self, frame: usize) -> &[Keypoint] {
        self.by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_len(&self) -> usize {
        self.by_frame.values().map(Vec::len).sum()
    }
}

/// Keypoint CSV schema: `frame,kp_id,x_px,y_px,d0,...,d{D-1}`.
pub fn keypoints_to_csv(set: &KeypointSet) -> String {
    let d = set.descriptor_len;
    let mut out = String::from("frame,kp_id,x_px,y_px");
    for i in 0..d {
        out.push_str(&format!(",d{i}"));
    }
    out.push('\n');
    for kps in set.by_frame.values() {
        for kp in kps {
            let mut row = format!("{},{}", kp.frame, kp.id);
            csvutil::push_f64(&mut row, kp.x);
            csvutil::push_f64(&mut row, kp.y);
            for &v in &kp.descriptor {
                csvutil::push_f64(&mut row, v);
            }
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

/// Parse a keypoint CSV, enforcing one descriptor length for the dataset.
pub fn keypoints_from_csv(text: &str) -> Result<KeypointSet, TrackError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CsvError::Header {
            expected: "frame,kp_id,x_px,y_px,d0,...".to_string(),
            found: "<empty file>".to_string(),
        })?;
    let head_fields: Vec<&str> = header.trim().split(',').collect();
    if head_fields.len() < 5 || head_fields[..4] != ["frame", "kp_id", "x_px", "y_px"] {
        return Err(CsvError::Header {
            expected: "frame,kp_id,x_px,y_px,d0,...".to_string(),
            found: header.trim().to_string(),
        }
        .into());
    }
    let descriptor_len = head_fields.len() - 4;
    let mut by_frame: BTreeMap<usize, Vec<Keypoint>> = BTreeMap::new();
    for (idx, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 4 + descriptor_len {
            let found = fields.len().saturating_sub(4);
            return Err(TrackError::DescriptorLengthMismatch {
                left: descriptor_len,
                right: found,
            });
        }
        let frame = csvutil::parse_usize(fields[0], line, "frame")?;
        let id = csvutil::parse_usize(fields[1], line, "kp_id")?;
        let x = csvutil::parse_f64(fields[2], line, "x_px")?;
        let y = csvutil::parse_f64(fields[3], line, "y_px")?;
        let mut descriptor = Vec::with_capacity(descriptor_len);
        for (k, field) in fields[4..].iter().enumerate() {
            descriptor.push(csvutil::parse_f64(field, line, &format!("d{k}"))?);
        }
        by_frame.entry(frame).or_default().push(Keypoint { frame, id, x, y, descriptor });
    }
    Ok(KeypointSet { by_frame, descriptor_len })
}

/// Track CSV schema: `track_id,x1,y1,x2,y2,x3,y3`; ids are row order.
pub fn tracks_to_csv(tracks: &[TripletTrack]) -> String {
    let mut out = String::from(TRACKS_HEADER);
    out.push('\n');
    for (id, t) in tracks.iter().enumerate() {
        let mut row = id.to_string();
        for f in 0..3 {
            csvutil::push_f64(&mut row, t.x[f]);
            csvutil::push_f64(&mut row, t.y[f]);
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn tracks_from_csv(text: &str) -> Result<Vec<TripletTrack>, TrackError> {
    let mut tracks = Vec::new();
    for (line, fields) in csvutil::rows(text, TRACKS_HEADER)? {
        csvutil::expect_fields(&fields, 7, line)?;
        let _id = csvutil::parse_usize(fields[0], line, "track_id")?;
        let mut x = [0.0; 3];
        let mut y = [0.0; 3];
        for f in 0..3 {
            x[f] = csvutil::parse_f64(fields[1 + 2 * f], line, &format!("x{}", f + 1))?;
            y[f] = csvutil::parse_f64(fields[2 + 2 * f], line, &format!("y{}", f + 1))?;
        }
        tracks.push(TripletTrack::from_coords(x, y));
    }
    Ok(tracks)
}

/// Synthesize keypoints from a simulated run.
///
/// Each observation becomes a keypoint whose descriptor is the one-hot
/// vector of its point id, optionally perturbed with `N(0, sigma²)` per
/// element to exercise mismatches. `descriptor_dim` must cover every
/// point id present.
pub fn synthetic_keypoints(
    run: &SimulatedRun,
    descriptor_dim: usize,
    descriptor_sigma: f64,
    seed: u64,
) -> Result<KeypointSet, TrackError> {
    use rand_distr::{Distribution, Normal};

    let max_id = run
        .observations
        .iter()
        .flatten()
        .map(|o| o.point_id)
        .max()
        .map_or(0, |m| m + 1);
    if descriptor_dim < max_id {
        return Err(TrackError::DescriptorDimTooSmall { dim: descriptor_dim, required: max_id });
    }
    let mut by_frame: BTreeMap<usize, Vec<Keypoint>> = BTreeMap::new();
    for (frame, per_frame) in run.observations.iter().enumerate() {
        let kps = by_frame.entry(frame).or_default();
        for obs in per_frame {
            let mut descriptor = vec![0.0; descriptor_dim];
            descriptor[obs.point_id] = 1.0;
            if descriptor_sigma > 0.0 {
                let mut r =
                    rng::stream(seed, &[tag::DESCRIPTOR, frame as u64, obs.point_id as u64]);
                let normal = Normal::new(0.0, descriptor_sigma).expect("sigma >= 0");
                for v in descriptor.iter_mut() {
                    *v += normal.sample(&mut r);
                }
            }
            kps.push(Keypoint {
                frame,
                id: obs.point_id,
                x: obs.x,
                y: obs.y,
                descriptor,
            });
        }
    }
    Ok(KeypointSet { by_frame, descriptor_len: descriptor_dim })
}
