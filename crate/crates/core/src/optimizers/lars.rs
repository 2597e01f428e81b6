//! Layer-wise trust ratio scaling.

use crate::params::{norm2, ParamVector};

/// `γ̃·‖x_j‖ / (‖g_j‖ + λ‖x_j‖)`, or 0 when `‖x_j‖ = 0` or the denominator vanishes.
pub fn lars_factor(x_block: &[f64], grad_block: &[f64], trust: f64, weight_decay: f64) -> f64 {
    let xn = norm2(x_block).sqrt();
    let gn = norm2(grad_block).sqrt();
    let denom = gn + weight_decay * xn;
    if xn == 0.0 || denom == 0.0 {
        return 0.0;
    }
    trust * xn / denom
}

/// `g_j` scaled by [`lars_factor`]. The direction is unchanged.
pub fn lars_scale(grad_block: &[f64], x_block: &[f64], trust: f64, weight_decay: f64) -> Vec<f64> {
    let s = lars_factor(x_block, grad_block, trust, weight_decay);
    grad_block.iter().map(|g| s * g).collect()
}

/// Applies [`lars_scale`] to every block of `grad`, using the blocks of `x`.
pub fn apply_lars(grad: &mut ParamVector, x: &ParamVector, trust: f64, weight_decay: f64) {
    for block in x.blocks().to_vec() {
        let s = lars_factor(&x.values()[block.clone()], &grad.values()[block.clone()], trust, weight_decay);
        grad.values_mut()[block].iter_mut().for_each(|g| *g *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_and_zero_decay_gives_zero() {
        assert_eq!(lars_factor(&[1.0], &[0.0], 1.0, 0.0), 0.0);
    }

    #[test]
    fn blocks_are_scaled_independently() {
        let x = ParamVector::with_blocks(vec![2.0, 0.0, 1.0], vec![0..1, 1..3]).unwrap();
        let mut g = x.like(vec![4.0, 3.0, 4.0]);
        apply_lars(&mut g, &x, 1.0, 0.0);
        assert_eq!(g.values()[0], 2.0);
        assert!((g.values()[1] - 0.6).abs() < 1e-15);
        assert!((g.values()[2] - 0.8).abs() < 1e-15);
    }
}
