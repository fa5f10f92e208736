//! Indel-distance similarity and its best-substring variant. Inputs are
//! compared after canonical normalization (trim, collapse whitespace,
//! uppercase); lengths are counted in characters.

use crate::entity::canonical_name;

fn chars(s: &str) -> Vec<char> {
    canonical_name(s).chars().collect()
}

fn lcs_len(a: &[char], b: &[char]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for &ca in a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Score from an insert/delete distance `d` over total length `t`.
fn score(d: usize, t: usize) -> f64 {
    if t == 0 {
        return 100.0;
    }
    100.0 * (1.0 - d as f64 / t as f64)
}

/// Minimum number of single-character insertions and deletions turning `a`
/// into `b` (a substitution costs two).
pub fn indel_distance(a: &str, b: &str) -> usize {
    let (a, b) = (chars(a), chars(b));
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

/// `100 * (1 - D / (|a| + |b|))`; 100 when both are empty.
pub fn indel_ratio(a: &str, b: &str) -> f64 {
    let (a, b) = (chars(a), chars(b));
    let t = a.len() + b.len();
    score(t - 2 * lcs_len(&a, &b), t)
}

/// Best indel ratio of `short` against any window of `long`, scanning each
/// start position once and extending the window a character at a time.
fn best_window(short: &[char], long: &[char]) -> f64 {
    if short.is_empty() {
        return 100.0;
    }
    let m = short.len();
    let mut best = 0.0f64;
    let mut row = vec![0usize; m + 1];
    for start in 0..long.len() {
        row.iter_mut().for_each(|v| *v = 0);
        // row[k] = LCS(short[..k], long[start..end])
        for (w, &c) in long[start..].iter().enumerate() {
            let mut diag = 0;
            for k in 0..m {
                let up = row[k + 1];
                row[k + 1] = if short[k] == c { diag + 1 } else { up.max(row[k]) };
                diag = up;
            }
            let t = m + w + 1;
            let s = score(t - 2 * row[m], t);
            if s > best {
                best = s;
            }
            if best == 100.0 {
                return best;
            }
        }
    }
    best
}

/// Best indel ratio between the shorter string and any contiguous substring of
/// the longer one. Equal lengths take the better of both directions, so the
/// function is symmetric.
pub fn partial_ratio(a: &str, b: &str) -> f64 {
    let (a, b) = (chars(a), chars(b));
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => best_window(&a, &b),
        std::cmp::Ordering::Greater => best_window(&b, &a),
        std::cmp::Ordering::Equal => best_window(&a, &b).max(best_window(&b, &a)),
    }
}
