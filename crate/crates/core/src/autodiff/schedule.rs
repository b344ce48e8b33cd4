use super::AutodiffError;

/// Single-cycle cosine annealing from `lr0` at epoch 0 to `eta_min` at
/// `total_epochs`. Endpoints are exact.
pub fn cosine_anneal(
    lr0: f64,
    eta_min: f64,
    epoch: usize,
    total_epochs: usize,
) -> Result<f64, AutodiffError> {
    if total_epochs == 0 || epoch > total_epochs {
        return Err(AutodiffError::InvalidSchedule {
            epoch,
            total: total_epochs,
        });
    }
    if epoch == 0 {
        return Ok(lr0);
    }
    if epoch == total_epochs {
        return Ok(eta_min);
    }
    let phase = std::f64::consts::PI * epoch as f64 / total_epochs as f64;
    Ok(eta_min + 0.5 * (lr0 - eta_min) * (1.0 + phase.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(cosine_anneal(0.001, 0.0, 0, 150).unwrap(), 0.001);
        assert_eq!(cosine_anneal(0.001, 0.0, 150, 150).unwrap(), 0.0);
        let mid = cosine_anneal(0.003, 0.001, 75, 150).unwrap();
        assert!((mid - 0.002).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            cosine_anneal(0.1, 0.0, 11, 10),
            Err(AutodiffError::InvalidSchedule { .. })
        ));
        assert!(cosine_anneal(0.1, 0.0, 0, 0).is_err());
    }

    #[test]
    fn monotone_decreasing() {
        let v: Vec<f64> = (0..=40).map(|e| cosine_anneal(1.0, 0.0, e, 40).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }
}
