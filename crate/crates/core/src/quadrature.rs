//! Gauss-Legendre rules on intervals, plain and geometrically graded toward
//! an endpoint where the integrand varies on a short scale.

use std::num::NonZeroUsize;

#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pairs: Vec<(f64, f64)>,
}

impl GaussLegendre {
    pub fn new(points: usize) -> Self {
        let deg = NonZeroUsize::new(points.max(1)).expect("nonzero");
        let rule = gauss_quad::legendre::GaussLegendre::new(deg);
        Self {
            pairs: rule.as_node_weight_pairs().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Calls `f(t, w)` for every node of the rule mapped to `[a, b]`.
    pub fn for_each(&self, a: f64, b: f64, mut f: impl FnMut(f64, f64)) {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for &(x, w) in &self.pairs {
            f(mid + half * x, half * w);
        }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each(a, b, |t, w| acc += w * f(t));
        acc
    }

    /// Nodes and weights of the rule on `[a, b]`, with the interval split
    /// into pieces that halve in length toward `toward` (either `a` or `b`)
    /// until they are shorter than `min_width`.
    pub fn graded(&self, a: f64, b: f64, toward: f64, min_width: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if !(b > a) {
            return out;
        }
        let mut pieces = Vec::new();
        let (mut lo, mut hi) = (a, b);
        let at_upper = toward >= b;
        while hi - lo > min_width.max(1e-300) && pieces.len() < 200 {
            let mid = 0.5 * (lo + hi);
            if at_upper {
                pieces.push((lo, mid));
                lo = mid;
            } else {
                pieces.push((mid, hi));
                hi = mid;
            }
        }
        pieces.push((lo, hi));
        for (p, q) in pieces {
            self.for_each(p, q, |t, w| out.push((t, w)));
        }
        out
    }

    /// Composite rule over `[a, b]` with pieces no wider than `max_width`.
    pub fn composite(&self, a: f64, b: f64, max_width: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if !(b > a) {
            return out;
        }
        let k = ((b - a) / max_width).ceil().clamp(1.0, 1e6) as usize;
        let h = (b - a) / k as f64;
        for j in 0..k {
            let lo = a + h * j as f64;
            let hi = if j + 1 == k { b } else { lo + h };
            self.for_each(lo, hi, |t, w| out.push((t, w)));
        }
        out
    }

    /// Composite rule over `[a, b]` split at the given interior breakpoints.
    pub fn split(&self, a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
        let mut cuts = vec![a];
        cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
        cuts.push(b);
        cuts.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                self.for_each(w[0], w[1], |t, wt| out.push((t, wt)));
            }
        }
        out
    }
}
