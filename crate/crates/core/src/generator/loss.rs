use crate::error::{Error, Result};
use crate::numerics::log_softmax_in_place;

fn check(logits: &[Vec<f64>], targets: &[usize], temperature: f64) -> Result<()> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
    }
    if logits.len() != targets.len() {
        return Err(Error::shape("rank loss levels", targets.len(), logits.len()));
    }
    for (k, (l, &t)) in logits.iter().zip(targets).enumerate() {
        if t >= l.len() {
            return Err(Error::TokenRange {
                level: k + 1,
                token: t,
                vocab: l.len(),
            });
        }
    }
    Ok(())
}

/// `−Σ_k log softmax(φ_k / τ)[s_k]` for one item block, where `logits[k]`
/// spans the level-k vocabulary.
pub fn rank_loss(logits: &[Vec<f64>], targets: &[usize], temperature: f64) -> Result<f64> {
    rank_loss_with_grad(logits, targets, temperature).map(|(l, _)| l)
}

/// Loss and its gradient with respect to each level's logits.
pub fn rank_loss_with_grad(logits: &[Vec<f64>], targets: &[usize], temperature: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    check(logits, targets, temperature)?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (l, &t) in logits.iter().zip(targets) {
        let mut z: Vec<f64> = l.iter().map(|v| v / temperature).collect();
        log_softmax_in_place(&mut z);
        loss -= z[t];
        let mut g: Vec<f64> = z.iter().map(|v| v.exp() / temperature).collect();
        g[t] -= 1.0 / temperature;
        grads.push(g);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("rank loss".into()));
    }
    Ok((loss, grads))
}
