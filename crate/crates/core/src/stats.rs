//! Plug-in estimators over small discrete alphabets.

/// Symbol counts over `0..alphabet`.
pub fn counts(symbols: impl IntoIterator<Item = u8>, alphabet: usize) -> Vec<u64> {
    let mut out = vec![0u64; alphabet];
    for s in symbols {
        out[usize::from(s)] += 1;
    }
    out
}

/// Empirical Shannon entropy in bits. Zero for an empty sample.
pub fn entropy_bits(symbols: &[u8], alphabet: usize) -> f64 {
    let n = symbols.len() as f64;
    if symbols.is_empty() {
        return 0.0;
    }
    counts(symbols.iter().copied(), alphabet)
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Empirical mutual information `I(X; Y)` in bits for paired samples.
pub fn mutual_information_bits(xs: &[u8], ys: &[u8], x_alphabet: usize, y_alphabet: usize) -> f64 {
    assert_eq!(xs.len(), ys.len(), "paired samples must have equal length");
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mut joint = vec![0u64; x_alphabet * y_alphabet];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[usize::from(x) * y_alphabet + usize::from(y)] += 1;
    }
    let px = counts(xs.iter().copied(), x_alphabet);
    let py = counts(ys.iter().copied(), y_alphabet);
    let mut mi = 0.0;
    for x in 0..x_alphabet {
        for y in 0..y_alphabet {
            let c = joint[x * y_alphabet + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            mi += pxy * (pxy * n * n / (px[x] as f64 * py[y] as f64)).log2();
        }
    }
    mi.max(0.0)
}

/// Binomial standard deviation of a frequency estimate.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `count / total`, or zero when `total` is zero.
pub fn fraction(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}
