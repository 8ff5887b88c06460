//! Independent reference implementations used as test oracles. Nothing in
//! here calls into the production code paths it is compared against.
#![allow(dead_code, clippy::needless_range_loop, clippy::manual_div_ceil)]

use facemap::corpus::LabelSet;
use facemap::knngraph::SparseRowGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Top-k by cosine over the full similarity matrix with a full sort.
pub fn knn_full_sort(rows: &[Vec<f64>], k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = rows.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sim: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    dot / (norm(&rows[i]) * norm(&rows[j]))
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut cand: Vec<(usize, f64)> =
                (0..n).filter(|&j| j != i).map(|j| (j, sim[i][j])).collect();
            cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            cand.truncate(k);
            cand.retain(|e| e.1 > 0.0);
            cand.sort_by_key(|e| e.0);
            cand
        })
        .collect()
}

/// Stationary distribution of the teleporting walk by Gaussian elimination
/// on the dense balance equations, one of which is replaced by `sum p = 1`.
pub fn dense_stationary(p: &SparseRowGraph, teleport: f64) -> Vec<f64> {
    let n = p.node_count();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        let (cols, ws) = p.row(i);
        if cols.is_empty() {
            for j in 0..n {
                g[i][j] += (1.0 - teleport) / n as f64;
            }
        }
        for (&j, &w) in cols.iter().zip(ws) {
            g[i][j] += (1.0 - teleport) * w;
        }
        for j in 0..n {
            g[i][j] += teleport / n as f64;
        }
    }
    // Unknown p satisfies p (G - I) = 0; transpose to A x = b.
    let mut a = vec![vec![0.0; n + 1]; n];
    for r in 0..n {
        for c in 0..n {
            a[r][c] = g[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[n - 1][c] = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Line-by-line transcription of the switch-point pseudocode with 1-based
/// arrays. Returns `None` when the row is too short, else `(q*, z)` with
/// `z[q]` for `q` in `1..=K` (index 0 unused).
pub fn reference_switch_point(probs: &[f64], omega: usize) -> Option<(usize, Vec<f64>)> {
    let k = probs.len();
    if k < omega + 2 {
        return None;
    }
    let mut p_r = vec![0.0; k + 1];
    p_r[1..=k].copy_from_slice(probs);
    let mut dp = vec![0.0; k];
    for j in 1..=k - 1 {
        dp[j] = p_r[j] - p_r[j + 1];
    }
    let mut z = vec![0.0; k + 1];
    let mut candidates = Vec::new();
    let mut j = k - omega - 1;
    while j >= 1 {
        let mut mu_hat = 0.0;
        for t in j..=j + omega - 1 {
            mu_hat += dp[t];
        }
        mu_hat /= omega as f64;
        let count = (k - j - 1) as f64;
        let mut mu_bar = 0.0;
        for t in j..=k - 2 {
            mu_bar += dp[t];
        }
        mu_bar /= count;
        let mut var = 0.0;
        for t in j..=k - 2 {
            var += (dp[t] - mu_bar) * (dp[t] - mu_bar);
        }
        let sigma_bar = (var / count).sqrt();
        let q = j + (omega + 1) / 2;
        let gap = (mu_hat - mu_bar).abs();
        z[q] = if sigma_bar > 0.0 {
            gap / sigma_bar
        } else if gap > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        candidates.push(q);
        j -= 1;
    }
    let mut best = candidates[0];
    for &q in &candidates {
        if z[q] > z[best] || (z[q] == z[best] && q > best) {
            best = q;
        }
    }
    Some((best, z))
}

/// Random row-stochastic digraph without self-loops.
pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, density: f64) -> SparseRowGraph {
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut row = Vec::new();
            for j in (0..n).filter(|&j| j != i) {
                if rng.random::<f64>() < density {
                    row.push((j, rng.random_range(0.05..1.0)));
                }
            }
            let sum: f64 = row.iter().map(|e| e.1).sum();
            row.iter_mut().for_each(|e| e.1 /= sum);
            row
        })
        .collect();
    SparseRowGraph::from_rows(n, rows, true).unwrap()
}

/// Random assignment of `n` nodes to at most `m` raw cluster ids.
pub fn random_assignment(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..m)).collect()
}

/// Every set partition of `n` elements as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for c in 0..=next {
            prefix.push(c);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        grow(&mut Vec::with_capacity(n), n, &mut out);
    }
    out
}

/// Map equation by codebook entropies, from the graph, an assignment and
/// visit rates, without any shared helper.
pub fn codelength_by_entropy(p: &SparseRowGraph, assign: &[usize], visit: &[f64]) -> f64 {
    let m = assign.iter().max().unwrap() + 1;
    let mut exit = vec![0.0; m];
    let mut inside = vec![Vec::new(); m];
    for a in 0..p.node_count() {
        inside[assign[a]].push(visit[a]);
        let (cols, ws) = p.row(a);
        for (&b, &w) in cols.iter().zip(ws) {
            if assign[b] != assign[a] {
                exit[assign[a]] += visit[a] * w;
            }
        }
    }
    let h = |xs: &[f64], total: f64| -> f64 {
        xs.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -(x / total) * (x / total).log2())
            .sum()
    };
    let q: f64 = exit.iter().sum();
    let mut l = if q > 0.0 { q * h(&exit, q) } else { 0.0 };
    for i in 0..m {
        let mut book = vec![exit[i]];
        book.extend(&inside[i]);
        let usage: f64 = book.iter().sum();
        if usage > 0.0 {
            l += usage * h(&book, usage);
        }
    }
    l
}

/// Naive metric reference: element and pair loops straight from the
/// definitions. Returns `(F_P, F_B, N_S)`.
pub fn naive_metrics(pred: &[usize], truth: &[usize]) -> (f64, f64, usize) {
    let n = pred.len();
    let (mut both, mut same_pred, mut same_true) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sp = pred[i] == pred[j];
            let st = truth[i] == truth[j];
            if sp {
                same_pred += 1.0;
            }
            if st {
                same_true += 1.0;
            }
            if sp && st {
                both += 1.0;
            }
        }
    }
    let f = |p: f64, r: f64| {
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    };
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let fp = f(div(both, same_pred), div(both, same_true));

    let (mut bp, mut br) = (0.0, 0.0);
    for e in 0..n {
        let (mut inter, mut csize, mut tsize) = (0.0, 0.0, 0.0);
        for o in 0..n {
            let sc = pred[o] == pred[e];
            let st = truth[o] == truth[e];
            if sc {
                csize += 1.0;
            }
            if st {
                tsize += 1.0;
            }
            if sc && st {
                inter += 1.0;
            }
        }
        bp += inter / csize;
        br += inter / tsize;
    }
    let fb = f(bp / n as f64, br / n as f64);

    let mut ns = 0;
    for e in 0..n {
        let csize = (0..n).filter(|&o| pred[o] == pred[e]).count();
        let tsize = (0..n).filter(|&o| truth[o] == truth[e]).count();
        if csize == 1 && tsize >= 2 {
            ns += 1;
        }
    }
    (fp, fb, ns)
}

/// Identity F-score by scanning every (cluster, identity) pair of ids.
pub fn naive_identity(pred: &[usize], truth: &[usize], theta: f64) -> f64 {
    let n = pred.len();
    let clusters = pred.iter().max().unwrap() + 1;
    let identities = truth.iter().max().unwrap() + 1;
    let mut matched = 0.0;
    for c in 0..clusters {
        for t in 0..identities {
            let inter = (0..n).filter(|&i| pred[i] == c && truth[i] == t).count() as f64;
            let cs = (0..n).filter(|&i| pred[i] == c).count() as f64;
            let ts = (0..n).filter(|&i| truth[i] == t).count() as f64;
            if cs > 0.0 && ts > 0.0 && inter / cs > theta && inter / ts > theta {
                matched += 1.0;
            }
        }
    }
    let pre = matched / clusters as f64;
    let rec = matched / identities as f64;
    if pre + rec > 0.0 {
        2.0 * pre * rec / (pre + rec)
    } else {
        0.0
    }
}

pub fn labels(ids: &[usize]) -> LabelSet {
    LabelSet::new(ids.iter().map(|i| format!("id{i}")).collect()).unwrap()
}
