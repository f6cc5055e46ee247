use std::rc::Rc;

use super::{segment::check_indices, Element, Tensor, Var};
use crate::error::{Error, Result};

impl<'t, T: Element> Var<'t, T> {
    /// Mean negative log-likelihood of `labels` under a row-wise softmax of
    /// `self` (`N × C`), over `rows` when given and every row otherwise.
    /// `labels` is indexed by row and has length `N`.
    pub fn softmax_cross_entropy(&self, labels: &[usize], rows: Option<&[usize]>) -> Result<Var<'t, T>> {
        self.value().expect_rank("softmax_cross_entropy", 2)?;
        let (n, c) = (self.shape()[0], self.shape()[1]);
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: self.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let selected: Vec<usize> = match rows {
            Some(r) => {
                check_indices("softmax_cross_entropy", r, n)?;
                r.to_vec()
            }
            None => (0..n).collect(),
        };
        if selected.is_empty() {
            return Err(Error::invalid("softmax_cross_entropy over an empty selection"));
        }
        if let Some(&bad) = selected.iter().find(|&&r| labels[r] >= c) {
            return Err(Error::invalid(format!(
                "label {} of row {bad} is not below the class count {c}",
                labels[bad]
            )));
        }

        let logits = self.value();
        let inv_count = T::one() / T::from_usize(selected.len()).unwrap();
        // Softmax probabilities of the selected rows, kept for backward.
        let mut probs = Vec::with_capacity(selected.len() * c);
        let mut total = T::zero();
        for &r in &selected {
            let row = logits.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let denom: T = row.iter().map(|&v| (v - max).exp()).sum();
            let log_denom = denom.ln();
            total = total - (row[labels[r]] - max - log_denom);
            probs.extend(row.iter().map(|&v| (v - max - log_denom).exp()));
        }
        let loss = Tensor::scalar(total * inv_count);
        let labels: Rc<[usize]> = labels.into();
        self.tape
            .record("softmax_cross_entropy", Rc::new(loss), &[self], move |g, _, _| {
                let scale = g.item() * inv_count;
                let mut grad = vec![T::zero(); n * c];
                for (k, &r) in selected.iter().enumerate() {
                    let dst = &mut grad[r * c..(r + 1) * c];
                    for (j, o) in dst.iter_mut().enumerate() {
                        *o = *o + probs[k * c + j] * scale;
                    }
                    dst[labels[r]] = dst[labels[r]] - scale;
                }
                vec![Some(Tensor::from_parts(vec![n, c], grad))]
            })
    }
}
