//! Chain diagnostics.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Linear-interpolated quantile (type 7) of unsorted data.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Effective sample size by Geyer's initial positive sequence. A constant
/// chain counts as fully independent.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c0 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    if c0 == 0.0 || !c0.is_finite() {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = if k == 0 { 1.0 } else { rho(2 * k) };
        pair += rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        // Monotone sequence estimator.
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        k += 1;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10())
}

/// Potential scale reduction over the two halves of one chain.
pub fn split_rhat(x: &[f64]) -> f64 {
    let half = x.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let (a, b) = (&x[..half], &x[x.len() - half..]);
    let w = (variance(a) + variance(b)) / 2.0;
    let (ma, mb) = (mean(a), mean(b));
    let grand = (ma + mb) / 2.0;
    let between = half as f64 * ((ma - grand).powi(2) + (mb - grand).powi(2));
    if w == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (half as f64 - 1.0) / half as f64 * w + between / half as f64;
    (var_plus / w).sqrt()
}
