//! Sliding window of closed sessions backing the percentile threshold and the
//! classifier's training batches.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{percentile_t_beta, short_return_label};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReturnWindow {
    entries: VecDeque<(Vec<f64>, f64)>,
    capacity: usize,
    refresh_every: usize,
    beta: f64,
    closed: u64,
    since_refresh: usize,
    t_beta: Option<f64>,
}

impl ReturnWindow {
    pub fn new(capacity: usize, refresh_every: usize, beta: f64) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity.min(1 << 14)),
            capacity,
            refresh_every,
            beta,
            closed: 0,
            since_refresh: 0,
            t_beta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn t_beta(&self) -> Option<f64> {
        self.t_beta
    }

    /// Restores a threshold (e.g. from a checkpoint).
    pub fn set_t_beta(&mut self, t_beta: f64) {
        self.t_beta = Some(t_beta);
    }

    /// Records a closed session. The threshold is recomputed after every
    /// session until `refresh_every` sessions have been seen, then every
    /// `refresh_every` sessions.
    pub fn observe(&mut self, features: Vec<f64>, returning_time: f64) -> Result<()> {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((features, returning_time));
        self.closed += 1;
        self.since_refresh += 1;
        if self.closed <= self.refresh_every as u64 || self.since_refresh >= self.refresh_every {
            let times: Vec<f64> = self.entries.iter().map(|e| e.1).collect();
            self.t_beta = Some(percentile_t_beta(&times, self.beta)?);
            self.since_refresh = 0;
        }
        Ok(())
    }

    /// Features and short-return labels of `n` sessions drawn uniformly with
    /// replacement.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Array2<f64>, Vec<f64>)> {
        let t_beta = self
            .t_beta
            .ok_or(Error::EmptyInput("closed sessions for classifier batch"))?;
        if self.entries.is_empty() || n == 0 {
            return Err(Error::EmptyInput("closed sessions for classifier batch"));
        }
        let dim = self.entries[0].0.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n * dim);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let (f, t) = &self.entries[rand::Rng::random_range(&mut rng, 0..self.entries.len())];
            x.extend_from_slice(f);
            y.push(short_return_label(*t, t_beta));
        }
        Ok((Array2::from_shape_vec((n, dim), x).expect("equal feature sizes"), y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refresh_schedule() {
        let mut w = ReturnWindow::new(100, 3, 60.0);
        assert_eq!(w.t_beta(), None);
        w.observe(vec![0.0], 5.0).unwrap();
        assert_eq!(w.t_beta(), Some(5.0));
        w.observe(vec![0.0], 1.0).unwrap();
        w.observe(vec![0.0], 1.0).unwrap();
        assert_eq!(w.t_beta(), Some(1.0));
        // past the warm-up, only every third session refreshes
        w.observe(vec![0.0], 9.0).unwrap();
        w.observe(vec![0.0], 9.0).unwrap();
        assert_eq!(w.t_beta(), Some(1.0));
        w.observe(vec![0.0], 9.0).unwrap();
        assert_eq!(w.t_beta(), Some(9.0));
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = ReturnWindow::new(2, 1, 50.0);
        for t in [1.0, 7.0, 8.0] {
            w.observe(vec![t], t).unwrap();
        }
        assert_eq!(w.len(), 2);
        assert_eq!(w.t_beta(), Some(7.0));
        let (x, y) = w.sample(10, 0).unwrap();
        assert!(x.iter().all(|&v| v == 7.0 || v == 8.0));
        assert!(y.iter().all(|&l| l == 0.0));
    }
}
