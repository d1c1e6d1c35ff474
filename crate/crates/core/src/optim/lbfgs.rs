use std::collections::VecDeque;

use crate::field::ComplexField;

#[derive(Debug, Clone)]
struct Pair {
    s: ComplexField,
    y: ComplexField,
    rho: f64,
}

/// Most recent `(s, y)` pairs, oldest first. Pairs with nonpositive
/// curvature `Re⟨y, s⟩` are refused.
#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    capacity: usize,
    pairs: VecDeque<Pair>,
    rejected: usize,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "L-BFGS memory needs capacity >= 1");
        Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
            rejected: 0,
        }
    }

    /// Stores the pair if `Re⟨y, s⟩ > 0`; returns whether it was kept.
    pub fn push(&mut self, s: ComplexField, y: ComplexField) -> bool {
        let curvature = y.re_dot(&s);
        if !(curvature > 0.0) || !curvature.is_finite() {
            self.rejected += 1;
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            s,
            y,
            rho: 1.0 / curvature,
        });
        true
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// `Re⟨y_i, s_i⟩` for every stored pair, oldest first.
    pub fn curvatures(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.y.re_dot(&p.s)).collect()
    }
}

/// Two-loop recursion. With an empty memory the scaling is 1 and the result
/// is `-g`.
pub fn lbfgs_direction(g: &ComplexField, memory: &LbfgsMemory) -> ComplexField {
    let mut d = -g;
    let mut alphas = vec![0.0; memory.pairs.len()];

    for (i, pair) in memory.pairs.iter().enumerate().rev() {
        let a = pair.rho * pair.s.re_dot(&d);
        alphas[i] = a;
        d.axpy(-a, &pair.y);
    }

    let gamma = memory
        .pairs
        .back()
        .map_or(1.0, |last| last.y.re_dot(&last.s) / last.y.norm_sqr());
    d = d.scale(gamma);

    for (pair, &a) in memory.pairs.iter().zip(&alphas) {
        let beta = pair.rho * pair.y.re_dot(&d);
        d.axpy(a - beta, &pair.s);
    }
    d
}
