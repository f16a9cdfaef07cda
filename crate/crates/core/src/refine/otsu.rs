//! Otsu's threshold over a fixed 256-bin histogram of `[0, 1]` values.
//!
//! Bin `i` covers `(i/256, (i+1)/256]`, with bin 0 also holding exact zeros.
//! Candidate `k` puts bins `< k` in the background, i.e. values `<= k/256`,
//! so a value is foreground exactly when it is `> k/256`.

pub const BINS: usize = 256;

/// Offset below the smallest value used when no split separates anything.
pub const DEGENERATE_EPS: f64 = 1e-9;

pub fn histogram_bin(v: f64) -> usize {
    ((v * BINS as f64).ceil() - 1.0).clamp(0.0, (BINS - 1) as f64) as usize
}

/// Threshold maximizing between-class variance; values strictly above it are
/// foreground. Ties go to the lowest candidate. When every candidate has zero
/// between-class variance (all values in one bin) the threshold sits just
/// below the smallest value so everything is foreground. `None` for no input.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let min = values.iter().copied().reduce(f64::min)?;
    let mut hist = [0u64; BINS];
    for &v in values {
        hist[histogram_bin(v)] += 1;
    }
    match best_split(&hist) {
        Some(k) => Some(k as f64 / BINS as f64),
        None => Some(min - DEGENERATE_EPS),
    }
}

/// Between-class variance of split `k`, up to the constant factor `1/N²`,
/// as the exact fraction `(N·S₀ − W₀·S)² / (W₀·W₁)`.
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    /// Strict `self > other`, exact when the cross products fit in `u128`.
    fn beats(&self, other: &Score) -> bool {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a > b,
            _ => self.num as f64 / self.den as f64 > other.num as f64 / other.den as f64,
        }
    }
}

fn best_split(hist: &[u64; BINS]) -> Option<usize> {
    let n: u64 = hist.iter().sum();
    let total: u128 = hist.iter().enumerate().map(|(i, &h)| i as u128 * h as u128).sum();
    let mut best: Option<(usize, Score)> = None;
    let (mut w0, mut s0) = (0u64, 0u128);
    for k in 0..BINS {
        if k > 0 {
            w0 += hist[k - 1];
            s0 += (k - 1) as u128 * hist[k - 1] as u128;
        }
        if w0 == 0 || w0 == n {
            continue;
        }
        let diff = (n as i128 * s0 as i128 - w0 as i128 * total as i128).unsigned_abs();
        let score = Score { num: diff * diff, den: w0 as u128 * (n - w0) as u128 };
        if score.num == 0 {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| score.beats(b)) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k)
}
