use std::io::Write;

use crate::combin::{colex_rank, normalize_subset, Combinations};
use crate::error::{invalid, Result};
use crate::numeric::{binomial_u128, fmt17};

/// Probabilities `p(α ⊆ X)` for every size-`order` subset `α` of `{0..n}`,
/// stored densely in colex order.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionMeasure {
    n: usize,
    order: usize,
    values: Vec<f64>,
}

impl InclusionMeasure {
    pub fn zeros(n: usize, order: usize) -> Result<Self> {
        let len = binomial_u128(n, order);
        if len > 50_000_000 {
            return Err(invalid(format!(
                "order-{order} measure over {n} items has {len} entries"
            )));
        }
        Ok(Self {
            n,
            order,
            values: vec![0.0; len as usize],
        })
    }

    /// Order-1 measure from per-item probabilities.
    pub fn first_order(values: Vec<f64>) -> Self {
        Self {
            n: values.len(),
            order: 1,
            values,
        }
    }

    pub fn from_fn(n: usize, order: usize, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut out = Self::zeros(n, order)?;
        for (slot, alpha) in out.values.iter_mut().zip(Combinations::new(n, order)) {
            *slot = f(&alpha);
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Values in colex order of the subsets.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, alpha: &[usize]) -> Result<f64> {
        let a = self.check(alpha)?;
        Ok(self.values[colex_rank(&a)])
    }

    pub fn add(&mut self, alpha: &[usize], weight: f64) -> Result<()> {
        let a = self.check(alpha)?;
        self.values[colex_rank(&a)] += weight;
        Ok(())
    }

    pub(crate) fn add_sorted(&mut self, alpha: &[usize], weight: f64) {
        self.values[colex_rank(alpha)] += weight;
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        Combinations::new(self.n, self.order).zip(self.values.iter().copied())
    }

    /// Clamps every value into `[0, 1]`.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.values {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// CSV dump: header `subset,probability`, hyphen-joined 1-based indices,
    /// 17 significant digits, colex order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "subset,probability")?;
        for (alpha, p) in self.iter() {
            writeln!(w, "{},{}", subset_label(&alpha), fmt17(p))?;
        }
        Ok(())
    }

    fn check(&self, alpha: &[usize]) -> Result<Vec<usize>> {
        if alpha.len() != self.order {
            return Err(invalid(format!(
                "subset of size {} in an order-{} measure",
                alpha.len(),
                self.order
            )));
        }
        normalize_subset(alpha, self.n)
            .ok_or_else(|| invalid(format!("subset {alpha:?} is not distinct indices below {}", self.n)))
    }
}

/// Hyphen-joined 1-based label, e.g. `[0, 4]` → `"1-5"`.
pub fn subset_label(alpha: &[usize]) -> String {
    alpha
        .iter()
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join("-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_is_order_insensitive() {
        let m = InclusionMeasure::from_fn(5, 2, |a| (a[0] * 10 + a[1]) as f64).unwrap();
        assert_eq!(m.get(&[3, 1]).unwrap(), 13.0);
        assert!(m.get(&[1]).is_err());
        assert!(m.get(&[2, 2]).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = InclusionMeasure::first_order(vec![0.25, 0.75]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "subset,probability\n1,2.5000000000000000e-1\n2,7.5000000000000000e-1\n"
        );
    }

    #[test]
    fn label() {
        assert_eq!(subset_label(&[0, 4, 9]), "1-5-10");
    }
}
