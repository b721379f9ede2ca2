//! OSPA distance and gated detection counts.

use serde::{Deserialize, Serialize};

use crate::array::Position;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OspaConfig {
    pub order_p: f64,
    pub cutoff_c: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self {
            order_p: 2.0,
            cutoff_c: 10.0,
        }
    }
}

impl OspaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.order_p >= 1.0) || !(self.cutoff_c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "OSPA needs p >= 1 and c > 0, got p = {}, c = {}",
                self.order_p, self.cutoff_c
            )));
        }
        Ok(())
    }
}

/// OSPA distance between two finite point sets.
pub fn ospa(truth: &[Position], estimate: &[Position], cfg: &OspaConfig) -> f64 {
    let (small, large) = if truth.len() <= estimate.len() {
        (truth, estimate)
    } else {
        (estimate, truth)
    };
    let n = large.len();
    if n == 0 {
        return 0.0;
    }
    let c = cfg.cutoff_c;
    let p = cfg.order_p;
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| large.iter().map(|b| (a - b).norm().min(c).powf(p)).collect())
        .collect();
    let assigned = if small.is_empty() { 0.0 } else { min_cost_assignment(&cost).1 };
    let total = assigned + c.powf(p) * (n - small.len()) as f64;
    (total / n as f64).powf(1.0 / p).min(c)
}

/// Minimum-cost assignment of every row to a distinct column
/// (rows ≤ columns), Hungarian algorithm with potentials, `O(n²m)`.
///
/// Returns the column of each row and the total cost.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows <= columns");
    // 1-based arrays; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    // sum in row order so the total does not depend on internal bookkeeping
    let total = col_of.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (col_of, total)
}

/// Gated detection outcome of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionStats {
    /// Some truth object has no estimate within the gate.
    pub miss: bool,
    pub missed_objects: usize,
    /// Estimates not within the gate of any truth object.
    pub false_alarms: usize,
}

pub fn detection_stats(truth: &[Position], estimate: &[Position], gate: f64) -> DetectionStats {
    let near = |a: &Position, b: &Position| (a - b).norm() <= gate;
    let missed_objects = truth.iter().filter(|t| !estimate.iter().any(|e| near(t, e))).count();
    let false_alarms = estimate.iter().filter(|e| !truth.iter().any(|t| near(t, e))).count();
    DetectionStats {
        miss: missed_objects > 0,
        missed_objects,
        false_alarms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Position> {
        v.iter().map(|(x, y)| Position::new(*x, *y)).collect()
    }

    /// OSPA by enumerating every injection of the smaller set.
    fn brute_force_ospa(x: &[Position], y: &[Position], cfg: &OspaConfig) -> f64 {
        let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
        let n = large.len();
        if n == 0 {
            return 0.0;
        }
        fn search(i: usize, small: &[Position], large: &[Position], used: &mut Vec<bool>, acc: f64, cfg: &OspaConfig, best: &mut f64) {
            if i == small.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..large.len() {
                if !used[j] {
                    used[j] = true;
                    let d = (small[i] - large[j]).norm().min(cfg.cutoff_c).powf(cfg.order_p);
                    search(i + 1, small, large, used, acc + d, cfg, best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        search(0, small, large, &mut vec![false; n], 0.0, cfg, &mut best);
        let total = best + cfg.cutoff_c.powf(cfg.order_p) * (n - small.len()) as f64;
        (total / n as f64).powf(1.0 / cfg.order_p)
    }

    #[test]
    fn basic_values() {
        let cfg = OspaConfig::default();
        let x = pts(&[(0.0, 0.0), (3.0, 4.0)]);
        assert_eq!(ospa(&x, &x, &cfg), 0.0);
        assert_eq!(ospa(&pts(&[(0.0, 0.0)]), &[], &cfg), 10.0);
        assert_eq!(ospa(&[], &[], &cfg), 0.0);
        // one matched at distance 5 plus one missing: sqrt((25 + 100)/2)
        let v = ospa(&pts(&[(0.0, 0.0), (50.0, 0.0)]), &pts(&[(3.0, 4.0)]), &cfg);
        assert!((v - (62.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hungarian_on_known_matrix() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let (cols, total) = min_cost_assignment(&cost);
        assert_eq!(total, 5.0);
        assert_eq!(cols, vec![1, 0, 2]);
    }

    #[test]
    fn detection_gating() {
        let truth = pts(&[(0.0, 30.0)]);
        assert_eq!(
            detection_stats(&truth, &truth, 5.0),
            DetectionStats { miss: false, missed_objects: 0, false_alarms: 0 }
        );
        let far = detection_stats(&truth, &pts(&[(6.0, 30.0)]), 5.0);
        assert!(far.miss);
        assert_eq!(far.false_alarms, 1);
        let two = detection_stats(&truth, &pts(&[(1.0, 30.0), (-1.0, 31.0)]), 5.0);
        assert!(!two.miss);
        assert_eq!(two.false_alarms, 0);
    }

    fn point_set(max: usize) -> impl Strategy<Value = Vec<Position>> {
        prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 0..=max)
            .prop_map(|v| v.into_iter().map(|(x, y)| Position::new(x, y)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn matches_brute_force(x in point_set(6), y in point_set(6)) {
            let cfg = OspaConfig::default();
            let fast = ospa(&x, &y, &cfg);
            let slow = brute_force_ospa(&x, &y, &cfg);
            prop_assert!((fast - slow).abs() <= 1e-12, "{} vs {}", fast, slow);
            prop_assert!((fast - ospa(&y, &x, &cfg)).abs() <= 1e-12);
            prop_assert!(fast <= cfg.cutoff_c);
        }

        #[test]
        fn triangle_inequality(x in point_set(4), y in point_set(4), z in point_set(4)) {
            let cfg = OspaConfig::default();
            prop_assert!(ospa(&x, &z, &cfg) <= ospa(&x, &y, &cfg) + ospa(&y, &z, &cfg) + 1e-9);
        }

        #[test]
        fn moving_a_matched_point_away_never_helps(d1 in 0.0..15.0f64, extra in 0.0..15.0f64) {
            let cfg = OspaConfig::default();
            let truth = vec![Position::new(0.0, 0.0)];
            let near = ospa(&truth, &[Position::new(d1, 0.0)], &cfg);
            let far = ospa(&truth, &[Position::new(d1 + extra, 0.0)], &cfg);
            prop_assert!(far >= near);
        }
    }
}
