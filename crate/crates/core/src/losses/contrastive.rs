use crate::error::{Error, Result};
use crate::geometry::{distance_backward, pairwise_distances};
use crate::losses::{check_labels, mine_hardest, LossMeta, LossOutput, TripletConfig, TripletVariant};
use crate::numerics::Matrix;

/// Contrastive loss: `d` for same-identity pairs, `[m − d]_+` otherwise,
/// averaged over pairs. The batch-hard variant uses each anchor's farthest
/// positive and nearest negative as its two pairs.
pub fn contrastive_loss(e: &Matrix, labels: &[usize], cfg: &TripletConfig) -> Result<LossOutput> {
    cfg.validate()?;
    check_labels(e, labels)?;
    let b = e.rows();
    let d = pairwise_distances(e, cfg.distance)?;

    let mut pairs = Vec::new();
    let mut meta = LossMeta::default();
    match cfg.variant {
        TripletVariant::BatchAll => {
            for i in 0..b {
                for j in i + 1..b {
                    pairs.push((i, j));
                }
            }
        }
        TripletVariant::BatchHard => {
            for (a, m) in mine_hardest(&d, labels).into_iter().enumerate() {
                match m {
                    Some((p, n)) => {
                        pairs.push((a, p));
                        pairs.push((a, n));
                    }
                    None => meta.skipped_anchors += 1,
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairs("contrastive loss has no pairs".into()));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    let mut upstream = Matrix::zeros(b, b);
    for &(i, j) in &pairs {
        if labels[i] == labels[j] {
            meta.positive_terms += 1;
            value += d[(i, j)];
            upstream[(i, j)] += scale;
        } else {
            meta.negative_terms += 1;
            let h = cfg.margin - d[(i, j)];
            if h > 0.0 {
                value += h;
                upstream[(i, j)] -= scale;
            }
        }
    }
    meta.terms = pairs.len();
    Ok(LossOutput {
        value: value * scale,
        grad_embeddings: distance_backward(e, &upstream, cfg.distance)?,
        grad_logits: None,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Rng, DEFAULT_STEP};

    fn cfg(variant: TripletVariant) -> TripletConfig {
        TripletConfig {
            margin: 0.3,
            variant,
            ..Default::default()
        }
    }

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn single_pairs() {
        let all = cfg(TripletVariant::BatchAll);
        assert_eq!(contrastive_loss(&line(&[1.0, 1.0]), &[0, 0], &all).unwrap().value, 0.0);
        let v = contrastive_loss(&line(&[0.0, 0.1]), &[0, 1], &all).unwrap().value;
        assert!((v - 0.2).abs() < 1e-6, "{v}");
        assert_eq!(contrastive_loss(&line(&[0.0, 0.5]), &[0, 1], &all).unwrap().value, 0.0);
    }

    #[test]
    fn empty_pairs() {
        let single = line(&[0.0]);
        assert!(matches!(
            contrastive_loss(&single, &[0], &cfg(TripletVariant::BatchAll)),
            Err(Error::EmptyPairs(_))
        ));
        assert!(matches!(
            contrastive_loss(&line(&[0.0, 1.0]), &[0, 0], &cfg(TripletVariant::BatchHard)),
            Err(Error::EmptyPairs(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(41);
        let e = Matrix::from_vec(16, 8, (0..128).map(|_| 0.05 * rng.normal()).collect()).unwrap();
        let labels: Vec<usize> = (0..16).map(|i| i % 4).collect();
        for variant in [TripletVariant::BatchAll, TripletVariant::BatchHard] {
            let c = cfg(variant);
            let out = contrastive_loss(&e, &labels, &c).unwrap();
            let num = finite_diff_grad(|m| Ok(contrastive_loss(m, &labels, &c)?.value), &e, DEFAULT_STEP).unwrap();
            assert!(relative_error(&out.grad_embeddings, &num) < 1e-5, "{variant:?}");
        }
    }
}
