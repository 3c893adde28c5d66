use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::rule::PathId;

/// Sliding means of `window` consecutive values.
pub fn smoothed(history: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || history.len() < window {
        return Vec::new();
    }
    history.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// Per-path θ histories and the paths found stable so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityWindow {
    pub window: usize,
    pub epsilon: f64,
    history: BTreeMap<PathId, Vec<f64>>,
    stabilized: BTreeSet<PathId>,
}

impl StabilityWindow {
    pub fn new(window: usize, epsilon: f64) -> Self {
        Self { window, epsilon, history: BTreeMap::new(), stabilized: BTreeSet::new() }
    }

    pub fn history(&self, path: PathId) -> &[f64] {
        self.history.get(&path).map_or(&[], Vec::as_slice)
    }

    pub fn is_stabilized(&self, path: PathId) -> bool {
        self.stabilized.contains(&path)
    }

    pub fn stabilized(&self) -> &BTreeSet<PathId> {
        &self.stabilized
    }

    /// Appends θ and reports whether the path is stable: true once the latest
    /// smoothed pair satisfies Q_{i+1} + 3ε ≥ Q_i, and forever after.
    pub fn update(&mut self, path: PathId, theta: f64) -> bool {
        let h = self.history.entry(path).or_default();
        h.push(theta);
        if self.stabilized.contains(&path) {
            return true;
        }
        let q = smoothed(h, self.window);
        let stable = match q.as_slice() {
            [.., prev, last] => last + 3.0 * self.epsilon >= *prev,
            _ => false,
        };
        if stable {
            self.stabilized.insert(path);
        }
        stable
    }
}

pub fn update_stability(window: &mut StabilityWindow, path: PathId, theta: f64) -> bool {
    window.update(path, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feed(values: &[f64]) -> Vec<bool> {
        let mut w = StabilityWindow::new(3, 0.01);
        values.iter().map(|&v| update_stability(&mut w, PathId(1), v)).collect()
    }

    #[test]
    fn examples() {
        let q = smoothed(&[0.60, 0.62, 0.61, 0.64], 3);
        assert!((q[0] - 0.610).abs() < 1e-12 && (q[1] - 0.623_333_333_333).abs() < 1e-9);
        assert_eq!(feed(&[0.60, 0.62, 0.61, 0.64]), vec![false, false, false, true]);
        let q = smoothed(&[0.80, 0.70, 0.60, 0.50], 3);
        assert!((q[0] - 0.70).abs() < 1e-12 && (q[1] - 0.60).abs() < 1e-12);
        assert_eq!(feed(&[0.80, 0.70, 0.60, 0.50]), vec![false; 4]);
        assert_eq!(feed(&[0.5, 0.5, 0.5]), vec![false; 3]);
    }

    proptest! {
        #[test]
        fn monotone(values in prop::collection::vec(0.0f64..1.0, 1..30)) {
            let flags = feed(&values);
            if let Some(first) = flags.iter().position(|&f| f) {
                prop_assert!(flags[first..].iter().all(|&f| f));
                prop_assert!(first >= 3);
            }
        }
    }
}
