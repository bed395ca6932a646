use super::params::Metric;
use super::Row;

fn distance(a: &Row, b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
    }
}

/// Genuine fraction among the k nearest points. Every point tied with the
/// k-th distance is included, so the result does not depend on storage order.
pub(super) fn score(z: &Row, k: usize, metric: Metric, points: &[Vec<f64>], genuine: &[bool]) -> f64 {
    let d: Vec<f64> = points.iter().map(|p| distance(z, p, metric)).collect();
    let k = k.min(d.len()).max(1);
    let mut sorted = d.clone();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    let kth = *kth;
    let (mut hits, mut total) = (0usize, 0usize);
    for (dist, &g) in d.iter().zip(genuine) {
        if *dist <= kth {
            total += 1;
            hits += usize::from(g);
        }
    }
    hits as f64 / total as f64
}
