use serde::{Deserialize, Serialize};

use super::tracker::PitchTrack;

pub const MEDIAN_KERNEL: usize = 9;
/// Segments shorter than this many 10 ms frames merge into their predecessor.
pub const MIN_SEGMENT_FRAMES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSegment {
    pub start: usize,
    pub end: usize,
    pub shift: i32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftPlan {
    pub segments: Vec<ShiftSegment>,
}

impl ShiftPlan {
    pub fn constant(frames: usize, shift: i32) -> Self {
        ShiftPlan {
            segments: vec![ShiftSegment {
                start: 0,
                end: frames,
                shift,
            }],
        }
    }

    pub fn n_frames(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn flatten(&self) -> Vec<i32> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat(s.shift).take(s.end - s.start))
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.segments.iter().all(|s| s.shift == 0)
    }
}

/// Rounded semitone interval from `b` to `a` per frame; zero wherever either
/// track is unvoiced.
pub fn compute_shift_track(a: &PitchTrack, b: &PitchTrack) -> Vec<i32> {
    assert_eq!(a.len(), b.len(), "pitch tracks differ in length");
    a.f0.iter()
        .zip(&b.f0)
        .map(|(&f1, &f2)| {
            if f1 > 0.0 && f2 > 0.0 {
                (12.0 * (f1 / f2).log2()).round() as i32
            } else {
                0
            }
        })
        .collect()
}

/// Median over a window that shrinks symmetrically near the edges.
pub fn median_filter(raw: &[i32], kernel: usize) -> Vec<i32> {
    let n = raw.len();
    let half = kernel / 2;
    let mut buf = Vec::with_capacity(kernel);
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            buf.clear();
            buf.extend_from_slice(&raw[i - h..=i + h]);
            buf.sort_unstable();
            buf[h]
        })
        .collect()
}

pub fn run_lengths(values: &[i32]) -> Vec<ShiftSegment> {
    let mut out: Vec<ShiftSegment> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.shift == v => seg.end = i + 1,
            _ => out.push(ShiftSegment {
                start: i,
                end: i + 1,
                shift: v,
            }),
        }
    }
    out
}

/// Left-to-right merging into the predecessor until nothing changes.
pub fn merge_segments(mut segments: Vec<ShiftSegment>) -> Vec<ShiftSegment> {
    loop {
        let mut out: Vec<ShiftSegment> = Vec::with_capacity(segments.len());
        for seg in &segments {
            match out.last_mut() {
                Some(prev)
                    if (seg.shift - prev.shift).abs() <= 1 || seg.end - seg.start < MIN_SEGMENT_FRAMES =>
                {
                    prev.end = seg.end
                }
                _ => out.push(*seg),
            }
        }
        if out == segments {
            return out;
        }
        segments = out;
    }
}

pub fn smooth_shift_track(raw: &[i32]) -> ShiftPlan {
    ShiftPlan {
        segments: merge_segments(run_lengths(&median_filter(raw, MEDIAN_KERNEL))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: usize, end: usize, shift: i32) -> ShiftSegment {
        ShiftSegment { start, end, shift }
    }

    fn track(f: &[f64]) -> PitchTrack {
        PitchTrack {
            hop_s: 0.01,
            f0: f.to_vec(),
            confidence: vec![1.0; f.len()],
        }
    }

    #[test]
    fn shift_rule() {
        assert_eq!(compute_shift_track(&track(&[440.0; 3]), &track(&[220.0; 3])), vec![12; 3]);
        assert_eq!(compute_shift_track(&track(&[330.0]), &track(&[330.0])), vec![0]);
        assert_eq!(compute_shift_track(&track(&[261.63]), &track(&[220.0])), vec![3]);
        assert_eq!(compute_shift_track(&track(&[0.0, 440.0]), &track(&[220.0, 0.0])), vec![0, 0]);
    }

    #[test]
    fn isolated_outlier_removed() {
        let mut raw = vec![3; 100];
        raw[50] = 10;
        assert_eq!(smooth_shift_track(&raw).segments, vec![seg(0, 100, 3)]);
    }

    #[test]
    fn merge_examples() {
        let merged = merge_segments(vec![seg(0, 40, 3), seg(40, 48, 4), seg(48, 100, 3)]);
        assert_eq!(merged, vec![seg(0, 100, 3)]);
        let kept = vec![seg(0, 50, 0), seg(50, 100, 5)];
        assert_eq!(merge_segments(kept.clone()), kept);
        let lead = vec![seg(0, 3, 9), seg(3, 100, 0)];
        assert_eq!(merge_segments(lead.clone()), lead);
        assert_eq!(merge_segments(vec![seg(0, 50, 0), seg(50, 55, 8), seg(55, 100, 4)]), vec![seg(0, 55, 0), seg(55, 100, 4)]);
    }

    #[test]
    fn median_edges_shrink() {
        assert_eq!(median_filter(&[5, 0, 0, 0], 9), vec![5, 0, 0, 0]);
        assert_eq!(median_filter(&[1, 9, 1], 3), vec![1, 1, 1]);
    }
}
