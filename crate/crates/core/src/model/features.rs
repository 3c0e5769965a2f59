//! Attention bias features as plain values.
//!
//! Positions are 1-based here, matching how they enter the features. Inside
//! the graph the same windows are built with [`Primitive::Window`] so that
//! gradients reach earlier attention rows.
//!
//! [`Primitive::Window`]: crate::autodiff::Primitive::Window

/// `[log(1+j), log(1+i), log(1+I)]` for target step `j`, source position `i`
/// and source length `I`.
pub fn position_features(j: usize, i: usize, src_len: usize) -> [f64; 3] {
    [
        (j as f64).ln_1p(),
        (i as f64).ln_1p(),
        (src_len as f64).ln_1p(),
    ]
}

/// Previous attention row read at offsets `-k..=k` around position `i`.
pub fn markov_features(alpha_prev: &[f64], i: usize, k: usize) -> Vec<f64> {
    window(alpha_prev, i, k, k)
}

/// Cumulative attention (per source position) read at offsets `-k..=reach`
/// around position `i`, zero-padded to length `2k+1`.
pub fn fertility_features(alpha_cumulative: &[f64], i: usize, k: usize, reach: usize) -> Vec<f64> {
    window(alpha_cumulative, i, k, reach.min(k))
}

fn window(v: &[f64], i: usize, k: usize, reach: usize) -> Vec<f64> {
    assert!(i >= 1, "positions are 1-based");
    (0..=2 * k)
        .map(|d| {
            if d > k + reach {
                return 0.0;
            }
            let pos = (i + d).checked_sub(k + 1);
            pos.and_then(|p| v.get(p)).copied().unwrap_or(0.0)
        })
        .collect()
}

/// Column sums of the attention rows seen so far.
pub fn cumulative_attention(rows: &[Vec<f64>], src_len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; src_len];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc
}
