//! Numerical kernel: reverse-mode tape, dense and tabular parameterizations,
//! Adam, and masked softmax.

mod adam;
mod dense;
mod table;
pub mod tape;

pub use adam::AdamState;
pub use dense::{Activation, DenseNet, ForwardTrace, LEAKY_SLOPE};
pub use table::TableNet;
pub use tape::{logsumexp, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("variable does not belong to this tape")]
    NoTape,
    #[error("invalid layer layout {0}")]
    BadLayout(String),
    #[error("unknown activation {0:?}")]
    UnknownActivation(String),
    #[error("no valid action in mask")]
    EmptyMask,
}

/// Log-softmax restricted to `mask`; masked entries come back as `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NnError> {
    if logits.len() != mask.len() {
        return Err(NnError::ShapeMismatch {
            expected: mask.len(),
            got: logits.len(),
        });
    }
    let valid: Vec<f64> = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .collect();
    if valid.is_empty() {
        return Err(NnError::EmptyMask);
    }
    let lse = logsumexp(&valid);
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l - lse } else { f64::NEG_INFINITY })
        .collect())
}

/// Probabilities from [`masked_log_softmax`]; masked entries are exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NnError> {
    Ok(masked_log_softmax(logits, mask)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_entries_are_zero() {
        let p = masked_softmax(&[100.0, 0.0, 0.0], &[false, true, true]).unwrap();
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = masked_softmax(&[1.0, -3.0, 2.5, 0.1], &[true; 4]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[0] && p[0] > p[3] && p[3] > p[1]);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let lp = masked_log_softmax(&[800.0, -800.0], &[true, true]).unwrap();
        assert_eq!(lp[0], 0.0);
        assert!((lp[1] + 1600.0).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_errors() {
        assert_eq!(
            masked_log_softmax(&[1.0], &[false]),
            Err(NnError::EmptyMask)
        );
    }
}
