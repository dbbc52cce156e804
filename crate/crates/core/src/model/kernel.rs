use crate::error::{Error, Result};

/// V-shaped temporal weights: one at both window ends, zero at the center,
/// linear in between.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalKernel {
    weights: Vec<f64>,
}

impl TemporalKernel {
    /// Builds the kernel for an odd window length `m >= 3`.
    pub fn new(m: usize) -> Result<Self> {
        if m < 3 || m.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "temporal kernel length must be odd and >= 3, got {m}"
            )));
        }
        let k = m / 2;
        // descending half (k-i)/k for i in 0..k, then ascending i/k for i in 0..=k
        let weights = (0..k)
            .map(|i| (k - i) as f64 / k as f64)
            .chain((0..=k).map(|i| i as f64 / k as f64))
            .collect();
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `floor(M / 2)`; also the index of the zero weight.
    pub fn center(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_f32(&self) -> Vec<f32> {
        self.weights.iter().map(|&w| w as f32).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_frame_kernel() {
        let k = TemporalKernel::new(7).unwrap();
        assert_eq!(
            k.weights_f32(),
            vec![1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0f32]
        );
        assert_eq!(k.center(), 3);
    }

    #[test]
    fn small_kernels() {
        assert_eq!(TemporalKernel::new(3).unwrap().weights(), &[1.0, 0.0, 1.0]);
        assert_eq!(
            TemporalKernel::new(5).unwrap().weights(),
            &[1.0, 0.5, 0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn rejects_even_or_short() {
        for m in [0, 1, 2, 4, 8] {
            assert!(TemporalKernel::new(m).is_err(), "m={m}");
        }
    }

    #[test]
    fn closed_form_for_odd_lengths() {
        for m in (3..=15).step_by(2) {
            let k = TemporalKernel::new(m).unwrap();
            let half = m / 2;
            assert_eq!(k.len(), m);
            for (i, &w) in k.weights().iter().enumerate() {
                let expected = (i as f64 - half as f64).abs() / half as f64;
                assert_eq!(w, expected, "m={m} i={i}");
                assert_eq!(w, k.weights()[m - 1 - i]);
            }
            assert_eq!(k.weights()[half], 0.0);
            assert_eq!(k.weights()[0], 1.0);
            assert_eq!(k.weights()[m - 1], 1.0);
        }
    }
}
