#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

/// Two-sample chi-square homogeneity statistic over the union of observed
/// categories, with its degrees of freedom.
pub fn two_sample_chi2(a: &HashMap<u64, u64>, b: &HashMap<u64, u64>) -> (f64, usize) {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let cats: BTreeSet<u64> = a.keys().chain(b.keys()).copied().collect();
    let (na, nb) = (na as f64, nb as f64);
    let mut stat = 0.0;
    for c in &cats {
        let (x, y) = (
            *a.get(c).unwrap_or(&0) as f64,
            *b.get(c).unwrap_or(&0) as f64,
        );
        let total = x + y;
        let ea = total * na / (na + nb);
        let eb = total * nb / (na + nb);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    (stat, cats.len().saturating_sub(1).max(1))
}

/// Upper 1% point of the chi-square distribution (Wilson-Hilferty).
pub fn chi2_critical_001(df: usize) -> f64 {
    let d = df as f64;
    let z = 2.326_347_874_040_841;
    d * (1.0 - 2.0 / (9.0 * d) + z * (2.0 / (9.0 * d)).sqrt()).powi(3)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
