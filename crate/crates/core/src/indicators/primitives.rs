//! Streaming building blocks. Each returns `None` until its window is full.
//!
//! Window statistics are recomputed from the buffer on every step (oldest to
//! newest) instead of being maintained by add/subtract, so long streams carry
//! no accumulated drift and match a direct batch evaluation.

use std::collections::VecDeque;

pub(crate) trait Stream {
    fn next(&mut self, x: f64) -> Option<f64>;

    fn feed(&mut self, x: Option<f64>) -> Option<f64> {
        x.and_then(|v| self.next(v))
    }
}

#[derive(Debug, Clone)]
struct Window {
    n: usize,
    buf: VecDeque<f64>,
}

impl Window {
    fn new(n: usize) -> Self {
        Self {
            n,
            buf: VecDeque::with_capacity(n + 1),
        }
    }

    fn push(&mut self, x: f64) -> bool {
        self.buf.push_back(x);
        if self.buf.len() > self.n {
            self.buf.pop_front();
        }
        self.buf.len() == self.n
    }

    fn sum(&self) -> f64 {
        self.buf.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Sma(Window);

impl Sma {
    pub fn new(n: usize) -> Self {
        Self(Window::new(n))
    }
}

impl Stream for Sma {
    fn next(&mut self, x: f64) -> Option<f64> {
        self.0.push(x).then(|| self.0.sum() / self.0.n as f64)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RollingSum(Window);

impl RollingSum {
    pub fn new(n: usize) -> Self {
        Self(Window::new(n))
    }
}

impl Stream for RollingSum {
    fn next(&mut self, x: f64) -> Option<f64> {
        self.0.push(x).then(|| self.0.sum())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RollingMax(Window);

impl RollingMax {
    pub fn new(n: usize) -> Self {
        Self(Window::new(n))
    }
}

impl Stream for RollingMax {
    fn next(&mut self, x: f64) -> Option<f64> {
        self.0
            .push(x)
            .then(|| self.0.buf.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RollingMin(Window);

impl RollingMin {
    pub fn new(n: usize) -> Self {
        Self(Window::new(n))
    }
}

impl Stream for RollingMin {
    fn next(&mut self, x: f64) -> Option<f64> {
        self.0
            .push(x)
            .then(|| self.0.buf.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

/// Population standard deviation over the window.
#[derive(Debug, Clone)]
pub(crate) struct RollingStd(Window);

impl RollingStd {
    pub fn new(n: usize) -> Self {
        Self(Window::new(n))
    }
}

impl Stream for RollingStd {
    fn next(&mut self, x: f64) -> Option<f64> {
        if !self.0.push(x) {
            return None;
        }
        let n = self.0.n as f64;
        let mean = self.0.sum() / n;
        let ss: f64 = self.0.buf.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some((ss / n).sqrt())
    }
}

/// EMA seeded with the simple mean of its first `n` inputs, then
/// `s = alpha * x + (1 - alpha) * s` with `alpha = 2 / (n + 1)`.
#[derive(Debug, Clone)]
pub(crate) struct Ema {
    n: usize,
    alpha: f64,
    seed: Vec<f64>,
    value: Option<f64>,
}

impl Ema {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            alpha: 2.0 / (n as f64 + 1.0),
            seed: Vec::with_capacity(n),
            value: None,
        }
    }
}

impl Stream for Ema {
    fn next(&mut self, x: f64) -> Option<f64> {
        match self.value {
            Some(s) => {
                let v = self.alpha * x + (1.0 - self.alpha) * s;
                self.value = Some(v);
            }
            None => {
                self.seed.push(x);
                if self.seed.len() == self.n {
                    self.value = Some(self.seed.iter().sum::<f64>() / self.n as f64);
                    self.seed = Vec::new();
                }
            }
        }
        self.value
    }
}

/// Emits the input seen `n` steps earlier.
#[derive(Debug, Clone)]
pub(crate) struct Lag {
    n: usize,
    buf: VecDeque<f64>,
}

impl Lag {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            buf: VecDeque::with_capacity(n + 1),
        }
    }
}

impl Stream for Lag {
    fn next(&mut self, x: f64) -> Option<f64> {
        self.buf.push_back(x);
        if self.buf.len() > self.n {
            self.buf.pop_front()
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<S: Stream>(mut s: S, xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().map(|&x| s.next(x)).collect()
    }

    #[test]
    fn sma_and_sum() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(run(Sma::new(2), &xs), vec![None, Some(1.5), Some(2.5), Some(3.5)]);
        assert_eq!(run(RollingSum::new(3), &xs), vec![None, None, Some(6.0), Some(9.0)]);
    }

    #[test]
    fn extremes_and_std() {
        let xs = [3.0, 1.0, 2.0, 5.0];
        assert_eq!(run(RollingMax::new(2), &xs), vec![None, Some(3.0), Some(2.0), Some(5.0)]);
        assert_eq!(run(RollingMin::new(2), &xs), vec![None, Some(1.0), Some(1.0), Some(2.0)]);
        assert_eq!(run(RollingStd::new(2), &xs)[1], Some(1.0));
    }

    #[test]
    fn ema_seeds_with_mean() {
        let out = run(Ema::new(3), &[1.0, 2.0, 3.0, 6.0]);
        assert_eq!(out[..2], [None, None]);
        assert_eq!(out[2], Some(2.0));
        assert_eq!(out[3], Some(0.5 * 6.0 + 0.5 * 2.0));
    }

    #[test]
    fn lag_shifts() {
        assert_eq!(run(Lag::new(2), &[1.0, 2.0, 3.0, 4.0]), vec![None, None, Some(1.0), Some(2.0)]);
        assert_eq!(run(Lag::new(0), &[1.0]), vec![Some(1.0)]);
    }
}
