//! Brute-force reference implementations.

/// `A_t = Σ_k (γλ)^(k−t)·δ_k` up to the end of `t`'s episode in the segment.
pub fn gae_oracle(
    r: &[f64],
    v: &[f64],
    term: &[bool],
    trunc: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if term[t] {
                0.0
            } else if t + 1 == n {
                bootstrap
            } else if trunc[t] {
                0.0
            } else {
                v[t + 1]
            };
            r[t] + gamma * next - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut k = t;
            loop {
                total += (gamma * lam).powi((k - t) as i32) * delta[k];
                if term[k] || trunc[k] || k + 1 == n {
                    break;
                }
                k += 1;
            }
            total
        })
        .collect()
}

/// Column-wise minimum of an `n × b` row-major matrix by exhaustive scan.
pub fn brute_min(values: &[f64], n: usize, b: usize) -> Vec<f64> {
    (0..b)
        .map(|j| {
            let mut best = f64::INFINITY;
            for i in 0..n {
                if values[i * b + j] < best {
                    best = values[i * b + j];
                }
            }
            best
        })
        .collect()
}

/// GAE as the λ-weighted mixture of k-step advantage estimates, each
/// truncated at the end of `t`'s episode inside the segment.
pub fn gae_weighted_oracle(
    r: &[f64],
    v: &[f64],
    term: &[bool],
    trunc: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Vec<f64> {
    let n = r.len();
    let tail = |j: usize| {
        if term[j] {
            0.0
        } else if j + 1 == n {
            bootstrap
        } else if trunc[j] {
            0.0
        } else {
            v[j + 1]
        }
    };
    (0..n)
        .map(|t| {
            let mut end = t;
            while !(term[end] || trunc[end] || end + 1 == n) {
                end += 1;
            }
            let horizon = end - t + 1;
            let k_step = |k: usize| {
                let mut g = 0.0;
                for l in 0..k {
                    g += gamma.powi(l as i32) * r[t + l];
                }
                g + gamma.powi(k as i32) * tail(t + k - 1) - v[t]
            };
            let mut total = 0.0;
            for k in 1..horizon {
                total += (1.0 - lam) * lam.powi(k as i32 - 1) * k_step(k);
            }
            total + lam.powi(horizon as i32 - 1) * k_step(horizon)
        })
        .collect()
}
