use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use super::MetricsError;

fn check(normal: &[f64], anomaly: &[f64]) -> Result<(), MetricsError> {
    if normal.is_empty() || anomaly.is_empty() {
        return Err(MetricsError::DegenerateLabels {
            normals: normal.len(),
            anomalies: anomaly.len(),
        });
    }
    if let Some(v) = normal.iter().chain(anomaly).find(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteScore(*v));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Twice the Mann-Whitney count: 2 per anomaly above a normal, 1 per tie.
fn twice_count(normal: &[f64], anomaly: &[f64]) -> u128 {
    let n = sorted(normal);
    anomaly
        .iter()
        .map(|&a| {
            let below = n.partition_point(|&x| x < a) as u128;
            let not_above = n.partition_point(|&x| x <= a) as u128;
            below + not_above
        })
        .sum()
}

/// Probability that an anomaly outscores a normal clip, ties counting half.
pub fn auc(normal: &[f64], anomaly: &[f64]) -> Result<f64, MetricsError> {
    check(normal, anomaly)?;
    let pairs = 2 * normal.len() as u128 * anomaly.len() as u128;
    Ok(ratio_f64(&BigRational::new(twice_count(normal, anomaly).into(), pairs.into())))
}

fn ratio_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite ratio")
}

/// Exact ROC operating points `(false positives, true positives)` from the
/// strictest threshold down, one point per distinct score.
fn roc_points(normal: &[f64], anomaly: &[f64]) -> Vec<(u64, u64)> {
    let mut all: Vec<(f64, bool)> = normal
        .iter()
        .map(|&s| (s, false))
        .chain(anomaly.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut pts = vec![(0u64, 0u64)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp, tp));
    }
    pts
}

/// Area under the ROC curve over false-positive rates `[0, p]`, divided by
/// `p`. Tied scores give linear ROC segments. The area is exact and
/// rounded once, so `pauc(.., 1.0)` equals [`auc`] bit for bit.
pub fn pauc(normal: &[f64], anomaly: &[f64], p: f64) -> Result<f64, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::InvalidP(p));
    }
    check(normal, anomaly)?;
    let (n, m) = (normal.len() as u64, anomaly.len() as u64);
    let limit = BigRational::from_float(p).expect("finite p") * BigRational::from_integer(n.into());
    // Twice the area in (false positive, true positive) count units.
    let mut twice_area = BigRational::from_integer(0.into());
    let pts = roc_points(normal, anomaly);
    for w in pts.windows(2) {
        let ((f0, t0), (f1, t1)) = (w[0], w[1]);
        if f1 == f0 {
            continue;
        }
        let r = |v: u64| BigRational::from_integer(BigInt::from(v));
        if r(f1) <= limit {
            twice_area += r(f1 - f0) * r(t0 + t1);
            continue;
        }
        if r(f0) < limit {
            let dx = &limit - r(f0);
            let t_at = r(t0) + r(t1 - t0) * &dx / r(f1 - f0);
            twice_area += dx * (r(t0) + t_at);
        }
        break;
    }
    let denom = BigRational::from_integer(BigInt::from(2u64) * BigInt::from(n) * BigInt::from(m));
    Ok(ratio_f64(&(twice_area / (denom * BigRational::from_float(p).expect("finite p")))))
}
