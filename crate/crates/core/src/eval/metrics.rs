use crate::error::{ensure, Error, Result};

/// 1-based position of `truth` in `ranking`.
pub fn rank_of(ranking: &[usize], truth: usize) -> Result<usize> {
    ranking
        .iter()
        .position(|&l| l == truth)
        .map(|p| p + 1)
        .ok_or_else(|| Error::Contract(format!("location {truth} missing from ranking")))
}

/// 1 when `truth` is among the first `k` entries.
pub fn acc_at_k(ranking: &[usize], truth: usize, k: usize) -> Result<u8> {
    ensure!(ranking.len() >= k, "ranking of {} shorter than k = {k}", ranking.len());
    Ok((rank_of(ranking, truth)? <= k) as u8)
}

/// With a single relevant item, average precision is its reciprocal rank.
pub fn average_precision(ranking: &[usize], truth: usize) -> Result<f64> {
    Ok(1.0 / rank_of(ranking, truth)? as f64)
}

pub fn map_single_truth(results: &[(Vec<usize>, usize)]) -> Result<f64> {
    if results.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = results
        .iter()
        .map(|(r, t)| average_precision(r, *t))
        .sum::<Result<f64>>()?;
    Ok(total / results.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accuracy_cases() {
        let r = [4, 2, 0, 1, 3, 5, 9, 6, 7, 8];
        assert_eq!(acc_at_k(&r, 4, 1).unwrap(), 1);
        assert_eq!(acc_at_k(&r, 2, 1).unwrap(), 0);
        assert_eq!(acc_at_k(&r, 9, 10).unwrap(), 1);
        assert!(acc_at_k(&r, 11, 1).is_err());
        assert!(acc_at_k(&r[..3], 4, 5).is_err());
    }

    #[test]
    fn map_cases() {
        assert_eq!(map_single_truth(&[(vec![0, 1], 0), (vec![1, 0], 1)]).unwrap(), 1.0);
        assert_eq!(map_single_truth(&[(vec![1, 0, 2], 0)]).unwrap(), 0.5);
    }

    /// Average precision from its general definition: mean of precision@k
    /// over the positions k holding a relevant item.
    fn ap_oracle(ranking: &[usize], relevant: &[usize]) -> f64 {
        let mut hits = 0;
        let mut sum = 0.0;
        for (k, l) in ranking.iter().enumerate() {
            if relevant.contains(l) {
                hits += 1;
                sum += hits as f64 / (k + 1) as f64;
            }
        }
        sum / relevant.len() as f64
    }

    #[test]
    fn map_matches_general_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.gen_range(1..12);
            let cases: Vec<(Vec<usize>, usize)> = (0..rng.gen_range(1..6))
                .map(|_| {
                    let mut r: Vec<usize> = (0..n).collect();
                    r.shuffle(&mut rng);
                    (r, rng.gen_range(0..n))
                })
                .collect();
            let oracle = cases.iter().map(|(r, t)| ap_oracle(r, &[*t])).sum::<f64>() / cases.len() as f64;
            assert_eq!(map_single_truth(&cases).unwrap(), oracle);
        }
    }
}
