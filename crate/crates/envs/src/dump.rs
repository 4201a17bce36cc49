//! File dumps for inspection: binary PGM frames and waveform CSVs.

use std::fmt::Write as _;

use muse_core::raster::to_pgm;

pub fn frame_pgm(image: &[f64], side: usize) -> Vec<u8> {
    to_pgm(image, side, side)
}

/// One row per sample, one column per receiver: `sample,r0,r1,...`.
pub fn waveform_csv(waves: &[Vec<i16>]) -> String {
    let mut out = String::from("sample");
    for j in 0..waves.len() {
        let _ = write!(out, ",r{j}");
    }
    out.push('\n');
    let n = waves.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..n {
        let _ = write!(out, "{i}");
        for w in waves {
            let _ = write!(out, ",{}", w.get(i).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    out
}

/// `step,reward,done,sound...` rows of a recorded rollout.
pub fn rollout_csv(rows: &[(f64, bool, Vec<f64>)]) -> String {
    let mut out = String::from("step,reward,done");
    if let Some((_, _, s)) = rows.first() {
        for j in 0..s.len() {
            let _ = write!(out, ",s{j}");
        }
    }
    out.push('\n');
    for (i, (r, d, s)) in rows.iter().enumerate() {
        let _ = write!(out, "{i},{r},{}", u8::from(*d));
        for v in s {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
