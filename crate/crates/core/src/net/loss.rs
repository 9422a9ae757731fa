use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::model::ForwardPass;
use crate::tensor::Tensor;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_phase: f64,
    pub lambda_match: f64,
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_phase: 0.08, lambda_match: 0.001, margin: 0.5 }
    }
}

fn check_pair<T>(op: &'static str, a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, alloc::format!("{} vs {} entries", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Mean squared error between target and predicted log magnitudes.
pub fn loss_magnitude<T: Real>(m: &[T], m_hat: &[T]) -> Result<f64> {
    check_pair("loss_magnitude", m, m_hat)?;
    let sum: f64 = m.iter().zip(m_hat).map(|(a, b)| (*a - *b).f64().powi(2)).sum();
    Ok(sum / m.len() as f64)
}

/// Derivative of [`loss_magnitude`] with respect to the prediction.
pub fn loss_magnitude_grad<T: Real>(m: &[T], m_hat: &[T]) -> Vec<T> {
    let k = T::of(2.0 / m.len() as f64);
    m.iter().zip(m_hat).map(|(&a, &b)| k * (b - a)).collect()
}

/// Mean squared error of phases mapped to the unit circle.
///
/// Per entry `(sin p - sin q)^2 + (cos p - cos q)^2 = 2 - 2 cos(p - q)`; the
/// right-hand form is what gets evaluated, so phases that differ by whole
/// turns give exactly zero.
pub fn loss_phase<T: Real>(p: &[T], p_hat: &[T]) -> Result<f64> {
    check_pair("loss_phase", p, p_hat)?;
    let sum: f64 = p.iter().zip(p_hat).map(|(a, b)| 2.0 - 2.0 * (a.f64() - b.f64()).cos()).sum();
    Ok(sum / p.len() as f64)
}

/// Derivative of [`loss_phase`] with respect to the prediction.
pub fn loss_phase_grad<T: Real>(p: &[T], p_hat: &[T]) -> Vec<T> {
    let k = T::of(2.0 / p.len() as f64);
    p.iter().zip(p_hat).map(|(&a, &b)| k * (b - a).sin()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingLoss<T> {
    pub value: f64,
    /// Whether the hinge is open; gradients are zero otherwise.
    pub active: bool,
    pub grad_anchor: Vec<T>,
    pub grad_positive: Vec<T>,
    pub grad_negative: Vec<T>,
}

fn unit<T: Real>(v: &[T]) -> Result<(Vec<f64>, f64)> {
    let norm = v.iter().map(|x| x.f64().powi(2)).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((v.iter().map(|x| x.f64() / norm).collect(), norm))
}

/// Pull `g` through `v -> v / |v|`.
fn through_unit<T: Real>(n: &[f64], norm: f64, g: &[f64]) -> Vec<T> {
    let dot: f64 = n.iter().zip(g).map(|(a, b)| a * b).sum();
    n.iter().zip(g).map(|(a, b)| T::of((b - a * dot) / norm)).collect()
}

/// Triplet hinge on unit-normalized embeddings:
/// `max(d(e_c, e_s) - d(e_c, e_neg) + margin, 0)`.
pub fn loss_matching<T: Real>(e_c: &[T], e_s: &[T], e_neg: &[T], margin: f64) -> Result<MatchingLoss<T>> {
    if e_c.len() != e_s.len() || e_c.len() != e_neg.len() {
        return Err(Error::shape("loss_matching", alloc::format!("embeddings of {}, {} and {}", e_c.len(), e_s.len(), e_neg.len())));
    }
    let (nc, lc) = unit(e_c)?;
    let (ns, ls) = unit(e_s)?;
    let (nn, ln) = unit(e_neg)?;
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    let (dp, dn) = (diff(&nc, &ns), diff(&nc, &nn));
    let len = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (d_pos, d_neg) = (len(&dp), len(&dn));
    let raw = d_pos - d_neg + margin;
    let d = e_c.len();
    if raw <= 0.0 {
        let zeros = alloc::vec![T::zero(); d];
        return Ok(MatchingLoss { value: 0.0, active: false, grad_anchor: zeros.clone(), grad_positive: zeros.clone(), grad_negative: zeros });
    }
    // Unit-direction of each difference; zero where the distance vanishes.
    let dir = |v: &[f64], l: f64| v.iter().map(|x| if l > 0.0 { x / l } else { 0.0 }).collect::<Vec<f64>>();
    let (up, un) = (dir(&dp, d_pos), dir(&dn, d_neg));
    let g_nc: Vec<f64> = up.iter().zip(&un).map(|(a, b)| a - b).collect();
    let g_ns: Vec<f64> = up.iter().map(|a| -a).collect();
    Ok(MatchingLoss {
        value: raw,
        active: true,
        grad_anchor: through_unit(&nc, lc, &g_nc),
        grad_positive: through_unit(&ns, ls, &g_ns),
        grad_negative: through_unit(&nn, ln, &un),
    })
}

/// `L_magnitude + lambda_phase * L_phase + lambda_match * L_matching`.
pub fn loss_total(magnitude: f64, phase: f64, matching: f64, w: &LossWeights) -> f64 {
    magnitude + w.lambda_phase * phase + w.lambda_match * matching
}

/// Gradient of a batch objective with respect to one example's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGrads<T> {
    pub output: Tensor<T>,
    pub e_s: Tensor<T>,
    pub e_c: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss<T> {
    pub magnitude: f64,
    pub phase: f64,
    pub matching: f64,
    pub total: f64,
    pub grads: Vec<ExampleGrads<T>>,
    pub hinge_active: Vec<bool>,
}

/// Batch mean of the total loss. `negatives[i]` names the example whose
/// `e_s` serves as the negative for example `i`; matching is skipped when it
/// is `None` or its weight is zero.
pub fn batch_objective<T: Real>(
    passes: &[ForwardPass<T>],
    targets: &[Tensor<T>],
    negatives: &[Option<usize>],
    w: &LossWeights,
) -> Result<BatchLoss<T>> {
    let b = passes.len();
    if b == 0 || targets.len() != b || negatives.len() != b {
        return Err(Error::shape("batch_objective", alloc::format!("{b} passes, {} targets, {} negatives", targets.len(), negatives.len())));
    }
    let inv = T::of(1.0 / b as f64);
    let mut out = BatchLoss {
        magnitude: 0.0,
        phase: 0.0,
        matching: 0.0,
        total: 0.0,
        grads: passes
            .iter()
            .map(|p| ExampleGrads {
                output: Tensor::zeros(p.output.shape()),
                e_s: Tensor::zeros(p.e_s.shape()),
                e_c: Tensor::zeros(p.e_c.shape()),
            })
            .collect(),
        hinge_active: alloc::vec![false; b],
    };
    for (i, (pass, target)) in passes.iter().zip(targets).enumerate() {
        if pass.output.shape() != target.shape() {
            return Err(Error::shape("batch_objective", alloc::format!("output {:?} vs target {:?}", pass.output.shape(), target.shape())));
        }
        let half = target.len() / 2;
        let (m, p) = target.data().split_at(half);
        let (m_hat, p_hat) = pass.output.data().split_at(half);
        out.magnitude += loss_magnitude(m, m_hat)?;
        out.phase += loss_phase(p, p_hat)?;
        let g = out.grads[i].output.data_mut();
        let lp = T::of(w.lambda_phase);
        for (slot, v) in g[..half].iter_mut().zip(loss_magnitude_grad(m, m_hat)) {
            *slot = v * inv;
        }
        for (slot, v) in g[half..].iter_mut().zip(loss_phase_grad(p, p_hat)) {
            *slot = v * lp * inv;
        }
        let Some(j) = negatives[i].filter(|_| w.lambda_match > 0.0) else { continue };
        let ml = loss_matching(pass.e_c.data(), pass.e_s.data(), passes[j].e_s.data(), w.margin)?;
        out.matching += ml.value;
        out.hinge_active[i] = ml.active;
        if ml.active {
            let k = T::of(w.lambda_match) * inv;
            let add = |t: &mut Tensor<T>, g: &[T]| t.data_mut().iter_mut().zip(g).for_each(|(a, &b)| *a += k * b);
            add(&mut out.grads[i].e_c, &ml.grad_anchor);
            add(&mut out.grads[i].e_s, &ml.grad_positive);
            add(&mut out.grads[j].e_s, &ml.grad_negative);
        }
    }
    let bf = b as f64;
    out.magnitude /= bf;
    out.phase /= bf;
    out.matching /= bf;
    out.total = loss_total(out.magnitude, out.phase, out.matching, w);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn polar(theta: f64) -> [f64; 2] {
        [theta.cos(), theta.sin()]
    }

    #[test]
    fn magnitude_cases() {
        assert_eq!(loss_magnitude(&[1.0, -2.0, 3.0], &[1.0, -2.0, 3.0]).unwrap(), 0.0);
        assert!((loss_magnitude(&[0.0; 5], &[1.5; 5]).unwrap() - 2.25).abs() < 1e-15);
        let m: Vec<f64> = (0..37).map(|i| (i as f64 * 0.7).sin()).collect();
        let h: Vec<f64> = (0..37).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut oracle = 0.0;
        for i in 0..37 {
            oracle += (m[i] - h[i]) * (m[i] - h[i]) / 37.0;
        }
        assert!((loss_magnitude(&m, &h).unwrap() - oracle).abs() < 1e-12);
        assert!(matches!(loss_magnitude(&m, &h[..3]), Err(Error::Shape { op: "loss_magnitude", .. })));
    }

    #[test]
    fn phase_cases() {
        assert_eq!(loss_phase(&[PI], &[-PI]).unwrap(), 0.0);
        assert_eq!(loss_phase(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert!((loss_phase(&[0.0; 4], &[PI / 2.0; 4]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn phase_matches_sin_cos_definition() {
        let p: Vec<f64> = (0..20).map(|i| (i as f64 * 0.9).sin() * 3.0).collect();
        let q: Vec<f64> = (0..20).map(|i| (i as f64 * 0.4).cos() * 3.0).collect();
        let n = p.len() as f64;
        let oracle: f64 = p.iter().zip(&q).map(|(a, b)| ((a.sin() - b.sin()).powi(2) + (a.cos() - b.cos()).powi(2)) / n).sum();
        assert!((loss_phase(&p, &q).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn matching_hinge_cases() {
        let c = polar(0.0);
        let at = |d: f64| polar(2.0 * (d / 2.0).asin());
        let closed = loss_matching(&c, &c, &at(1.0), 0.5).unwrap();
        assert_eq!(closed.value, 0.0);
        assert!(!closed.active);
        let open = loss_matching(&c, &at(0.6), &at(0.2), 0.5).unwrap();
        assert!((open.value - 0.9).abs() < 1e-12, "{}", open.value);
        assert_eq!(LossWeights::default().margin, 0.5);
    }

    #[test]
    fn zero_embedding_is_degenerate() {
        assert_eq!(loss_matching(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap_err(), Error::DegenerateEmbedding);
    }

    #[test]
    fn total_composition() {
        let w = LossWeights::default();
        assert_eq!((w.lambda_phase, w.lambda_match), (0.08, 0.001));
        assert!((loss_total(1.0, 0.5, 2.0, &w) - 1.042).abs() < 1e-12);
        let off = LossWeights { lambda_phase: 0.0, lambda_match: 0.0, margin: 0.5 };
        assert_eq!(loss_total(0.731, 9.0, 4.0, &off), 0.731);
    }

    #[test]
    fn matching_gradients_match_differences() {
        let (a, s, n) = ([0.3, -0.8, 0.5], [0.9, 0.1, -0.2], [0.35, -0.7, 0.6]);
        let ml = loss_matching(&a, &s, &n, 0.5).unwrap();
        assert!(ml.active);
        let h = 1e-6;
        for (which, grad) in [(0, &ml.grad_anchor), (1, &ml.grad_positive), (2, &ml.grad_negative)] {
            for k in 0..3 {
                let eval = |d: f64| {
                    let mut v = [a, s, n];
                    v[which][k] += d;
                    loss_matching(&v[0], &v[1], &v[2], 0.5).unwrap().value
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                assert!((numeric - grad[k]).abs() < 1e-7, "{which} {k}: {numeric} vs {}", grad[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn phase_is_invariant_to_whole_turns(p in proptest::collection::vec(-PI..PI, 1..20), k in -5i32..5) {
            let q: Vec<f64> = p.iter().map(|v| v + 2.0 * PI * k as f64).collect();
            prop_assert_eq!(loss_phase(&p, &q).unwrap(), 0.0);
        }

        #[test]
        fn matching_ignores_positive_rescaling(
            v in proptest::collection::vec(-1.0f64..1.0, 9),
            scale in proptest::array::uniform3(0.01f64..100.0),
        ) {
            let (a, s, n) = (&v[0..3], &v[3..6], &v[6..9]);
            prop_assume!([a, s, n].iter().all(|x| x.iter().map(|y| y * y).sum::<f64>() > 1e-3));
            let base = loss_matching(a, s, n, 0.5).unwrap().value;
            let sc = |x: &[f64], c: f64| x.iter().map(|y| y * c).collect::<Vec<f64>>();
            let scaled = loss_matching(&sc(a, scale[0]), &sc(s, scale[1]), &sc(n, scale[2]), 0.5).unwrap().value;
            prop_assert!((base - scaled).abs() < 1e-12);
        }

        #[test]
        fn losses_are_non_negative(a in proptest::collection::vec(-5.0f64..5.0, 8), b in proptest::collection::vec(-5.0f64..5.0, 8)) {
            prop_assert!(loss_magnitude(&a, &b).unwrap() >= 0.0);
            prop_assert!(loss_phase(&a, &b).unwrap() >= 0.0);
            prop_assert!(loss_matching(&a[..4], &b[..4], &a[4..], 0.5).map(|m| m.value >= 0.0).unwrap_or(true));
        }
    }
}
