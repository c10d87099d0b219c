//! Neumaier compensated summation.
//!
//! Mean squares accumulate up to ~10^10 while the interesting signal sits
//! ten digits down; compensation keeps the roundoff near one ulp of the
//! total independent of term count. Partial sums from fixed work chunks are
//! merged in ascending chunk order, which makes every parallel reduction in
//! the crate reproduce the single-threaded bit pattern for any worker count.

/// Running compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn new() -> CompensatedSum {
        CompensatedSum::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum in; order of merges is the caller's
    /// determinism contract.
    pub fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.c);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Sums an iterator with compensation.
pub fn sum_compensated(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::new();
    for x in it {
        s.add(x);
    }
    s.value()
}
