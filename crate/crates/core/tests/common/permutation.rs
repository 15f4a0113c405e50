//! Exact two-sided Mann-Whitney p-values by enumerating every way of
//! splitting the pooled sample into groups of the original sizes.

/// Pairs where `a` is larger, ties counting one half.
pub fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

pub fn exact_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = a.len();
    let total = pooled.len();
    let observed = u_statistic(a, b);
    let (mut below, mut above, mut count) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let (mut ga, mut gb) = (Vec::new(), Vec::new());
        for (i, &v) in pooled.iter().enumerate() {
            if mask >> i & 1 == 1 {
                ga.push(v);
            } else {
                gb.push(v);
            }
        }
        let u = u_statistic(&ga, &gb);
        count += 1;
        if u <= observed {
            below += 1;
        }
        if u >= observed {
            above += 1;
        }
    }
    let tail = below.min(above) as f64 / count as f64;
    (2.0 * tail).min(1.0)
}
