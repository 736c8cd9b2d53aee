//! Layer and loss primitives with hand-written backward passes.

use super::array::DenseArray;
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities inside `ln`.
pub const PROB_EPS: f64 = 1e-12;

/// `a (n x k) * b (k x m)`.
pub fn matmul(a: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    if a.cols() != b.rows() {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = DenseArray::zeros(n, m);
    let bs = b.as_slice();
    let os = out.as_mut_slice();
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut os[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            let brow = &bs[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `y = x W + b` with `x: n x i`, `W: i x o`, `b: 1 x o`.
pub fn linear_forward(x: &DenseArray, w: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    if x.cols() != w.rows() {
        return Err(Error::dim("linear_forward", x.shape(), w.shape()));
    }
    if b.shape() != (1, w.cols()) {
        return Err(Error::dim("linear_forward(bias)", b.shape(), (1, w.cols())));
    }
    let mut y = matmul(x, w)?;
    let bias = b.as_slice();
    for r in 0..y.rows() {
        for (v, bv) in y.row_mut(r).iter_mut().zip(bias) {
            *v += bv;
        }
    }
    Ok(y)
}

/// Accumulates `dW += xᵀ dy`, `db += Σ_rows dy` and returns `dx = dy Wᵀ`.
pub fn linear_backward(
    x: &DenseArray,
    w: &DenseArray,
    dy: &DenseArray,
    dw: &mut DenseArray,
    db: &mut DenseArray,
) -> Result<DenseArray> {
    if x.rows() != dy.rows() || w.cols() != dy.cols() || x.cols() != w.rows() {
        return Err(Error::dim("linear_backward", x.shape(), dy.shape()));
    }
    dw.same_shape(w, "linear_backward(dW)")?;
    if db.shape() != (1, w.cols()) {
        return Err(Error::dim("linear_backward(db)", db.shape(), (1, w.cols())));
    }
    accumulate_weight_grad(x, dy, dw)?;
    accumulate_bias_grad(dy, db)?;
    linear_backward_input(w, dy)
}

/// `dW += xᵀ dy`.
pub fn accumulate_weight_grad(x: &DenseArray, dy: &DenseArray, dw: &mut DenseArray) -> Result<()> {
    if x.rows() != dy.rows() || dw.shape() != (x.cols(), dy.cols()) {
        return Err(Error::dim("accumulate_weight_grad", x.shape(), dy.shape()));
    }
    let m = dy.cols();
    let dws = dw.as_mut_slice();
    for r in 0..x.rows() {
        let dyr = dy.row(r);
        for (p, &xv) in x.row(r).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (g, &d) in dws[p * m..(p + 1) * m].iter_mut().zip(dyr) {
                *g += xv * d;
            }
        }
    }
    Ok(())
}

/// `db += Σ_rows dy`.
pub fn accumulate_bias_grad(dy: &DenseArray, db: &mut DenseArray) -> Result<()> {
    if db.shape() != (1, dy.cols()) {
        return Err(Error::dim("accumulate_bias_grad", db.shape(), dy.shape()));
    }
    let dbs = db.as_mut_slice();
    for r in 0..dy.rows() {
        for (g, &d) in dbs.iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
    Ok(())
}

/// `dx = dy Wᵀ` without touching parameter gradients.
pub fn linear_backward_input(w: &DenseArray, dy: &DenseArray) -> Result<DenseArray> {
    if w.cols() != dy.cols() {
        return Err(Error::dim("linear_backward_input", w.shape(), dy.shape()));
    }
    let mut dx = DenseArray::zeros(dy.rows(), w.rows());
    for r in 0..dy.rows() {
        let dyr = dy.row(r);
        let dxr = dx.row_mut(r);
        for (p, out) in dxr.iter_mut().enumerate() {
            let wrow = w.row(p);
            *out = wrow.iter().zip(dyr).map(|(a, b)| a * b).sum();
        }
    }
    Ok(dx)
}

pub fn relu(x: &DenseArray) -> DenseArray {
    let mut y = x.clone();
    for v in y.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

pub fn relu_slice(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU given its output `y`.
pub fn relu_backward(y: &DenseArray, dy: &DenseArray) -> Result<DenseArray> {
    y.same_shape(dy, "relu_backward")?;
    let mut dx = dy.clone();
    for (g, &out) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
        if out <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(dx)
}

/// `softmax(logits / tau)`.
pub fn softmax_temp(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    if logits.is_empty() {
        return Err(Error::dim("softmax_temp", (1, 0), (1, 1)));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    Ok(softmax_unscaled(&scaled))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_unscaled(logits)
}

fn softmax_unscaled(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln p[label]`, with `p` clamped below by [`PROB_EPS`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::dim("cross_entropy", (1, probs.len()), (1, label + 1)));
    }
    Ok(-probs[label].max(PROB_EPS).ln())
}

/// Gradient of `cross_entropy(softmax(z), label)` with respect to `z`.
pub fn cross_entropy_grad_logits(probs: &[f64], label: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == label { p - 1.0 } else { p })
        .collect()
}

/// Mean squared difference.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::dim("mse", (1, a.len()), (1, b.len())));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

/// Gradient of `mse(a, b)` with respect to `a`.
pub fn mse_grad(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| 2.0 * (x - y) / n).collect()
}

/// `Σ p ln(p / q)` with both sides clamped below by [`PROB_EPS`] inside the log.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::dim("kl_div", (1, p.len()), (1, q.len())));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (pi.max(PROB_EPS).ln() - qi.max(PROB_EPS).ln()))
        .sum())
}

/// `tau² · KL(softmax(z_s/tau) ‖ softmax(z_t/tau))` and its gradient w.r.t. `z_s`.
pub fn kl_temp_with_grad(student: &[f64], teacher: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    if student.len() != teacher.len() {
        return Err(Error::dim("kl_temp", (1, student.len()), (1, teacher.len())));
    }
    let p = softmax_temp(student, tau)?;
    let q = softmax_temp(teacher, tau)?;
    let kl = kl_div(&p, &q)?;
    let grad = p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| tau * pi * (pi.max(PROB_EPS).ln() - qi.max(PROB_EPS).ln() - kl))
        .collect();
    Ok((tau * tau * kl, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> DenseArray {
        DenseArray::row_vector(v.to_vec())
    }

    #[test]
    fn linear_identity() {
        let w = DenseArray::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = linear_forward(&row(&[1.0, 0.0]), &w, &row(&[0.0, 0.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn linear_hand_arithmetic() {
        let w = DenseArray::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let y = linear_forward(&row(&[2.0, 3.0]), &w, &row(&[-5.0])).unwrap();
        assert_eq!(y.as_slice(), &[0.0]);
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let w = DenseArray::zeros(3, 2);
        let err = linear_forward(&row(&[1.0, 2.0]), &w, &row(&[0.0, 0.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 2)") && msg.contains("(3, 2)"), "{msg}");
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        // L = Σ_j c_j y_j with y = x W + b, evaluated at W = I.
        let x = row(&[0.3, -1.2]);
        let w = DenseArray::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = row(&[0.1, -0.2]);
        let c = [0.7, -1.9];
        let loss = |w: &DenseArray, x: &DenseArray| -> f64 {
            let y = linear_forward(x, w, &b).unwrap();
            y.as_slice().iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let mut dw = DenseArray::zeros(2, 2);
        let mut db = DenseArray::zeros(1, 2);
        let dx = linear_backward(&x, &w, &row(&c), &mut dw, &mut db).unwrap();
        let eps = 1e-6;
        for i in 0..4 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp.as_mut_slice()[i] += eps;
            wm.as_mut_slice()[i] -= eps;
            let num = (loss(&wp, &x) - loss(&wm, &x)) / (2.0 * eps);
            let ana = dw.as_slice()[i];
            assert!((num - ana).abs() / ana.abs().max(1e-8) < 1e-6, "{num} vs {ana}");
        }
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_mut_slice()[i] += eps;
            xm.as_mut_slice()[i] -= eps;
            let num = (loss(&w, &xp) - loss(&w, &xm)) / (2.0 * eps);
            assert!((num - dx.as_slice()[i]).abs() < 1e-6);
        }
        assert_eq!(db.as_slice(), &c);
    }

    #[test]
    fn relu_and_softmax_examples() {
        assert_eq!(relu(&row(&[-1.0, 2.0])).as_slice(), &[0.0, 2.0]);
        assert_eq!(softmax_temp(&[0.0, 0.0], 3.7).unwrap(), vec![0.5, 0.5]);
        let a = softmax_temp(&[2.0, 0.0], 2.0).unwrap();
        let b = softmax(&[1.0, 0.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(softmax_temp(&[0.3, -2.0], 1.0).unwrap(), softmax(&[0.3, -2.0]));
        assert!(softmax_temp(&[1.0], 0.0).is_err());
        assert!(softmax_temp(&[1.0], -1.0).is_err());
    }

    #[test]
    fn loss_examples() {
        assert!(cross_entropy(&[0.0, 1.0], 1).unwrap().abs() < 1e-15);
        assert!((cross_entropy(&[0.5, 0.5], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(cross_entropy(&[1.0, 0.0], 1).unwrap().is_finite());
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(kl_div(&[0.7, 0.3], &[0.7, 0.3]).unwrap(), 0.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(kl_div(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_temp_grad_matches_finite_differences() {
        let zs = [0.4, -1.1];
        let zt = [1.3, 0.2];
        let tau = 1.2;
        let (_, g) = kl_temp_with_grad(&zs, &zt, tau).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            let mut p = zs;
            let mut m = zs;
            p[i] += eps;
            m[i] -= eps;
            let num = (kl_temp_with_grad(&p, &zt, tau).unwrap().0
                - kl_temp_with_grad(&m, &zt, tau).unwrap().0)
                / (2.0 * eps);
            assert!((num - g[i]).abs() < 1e-8, "{num} vs {}", g[i]);
        }
    }
}
