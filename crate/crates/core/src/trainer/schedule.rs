use super::{Result, TrainConfig, TrainError};
use crate::Mask;
use rand::Rng;

/// First refinement iteration, `t_total · (1 − f_ref)`.
pub fn refinement_start(cfg: &TrainConfig) -> usize {
    cfg.t_total - (cfg.t_total as f64 * cfg.f_ref).round() as usize
}

/// Latent render size at refinement iteration `i`: grows linearly from the
/// base side at the refinement start to twice it at `t_total`.
pub fn dimension_refine(i: usize, cfg: &TrainConfig) -> Result<(usize, usize)> {
    let start = refinement_start(cfg);
    if i < start {
        return Err(TrainError::Schedule(format!(
            "iteration {i} precedes the refinement start {start}"
        )));
    }
    let window = (cfg.t_total - start).max(1) as f64;
    let rate = ((i - start) as f64 / window).min(1.0);
    let base = cfg.latent_side;
    let side = ((base as f64 * (1.0 + rate)).round() as usize).min(2 * base);
    Ok((side, side))
}

/// Top-left corners of `n` patches, uniform over the whole mask. Patches
/// that run past an edge wrap around to the opposite side, so every pixel
/// is covered with the same probability.
pub fn patch_positions<R: Rng + ?Sized>(height: usize, width: usize, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    (0..n)
        .map(|_| (rng.gen_range(0..height), rng.gen_range(0..width)))
        .collect()
}

/// Adds `n` square regenerate patches of side `k` to `m`.
pub fn add_patch<R: Rng + ?Sized>(m: &Mask, n: usize, k: usize, rng: &mut R) -> Result<Mask> {
    if k > m.height || k > m.width {
        return Err(TrainError::Config(format!(
            "patch side {k} exceeds mask {}x{}",
            m.height, m.width
        )));
    }
    let mut out = m.clone();
    if k == 0 {
        return Ok(out);
    }
    for (y0, x0) in patch_positions(m.height, m.width, n, rng) {
        for dy in 0..k {
            for dx in 0..k {
                out.set((y0 + dy) % m.height, (x0 + dx) % m.width, true);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn refinement_window_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(refinement_start(&cfg), 4500);
        assert_eq!(dimension_refine(4500, &cfg).unwrap(), (64, 64));
        assert_eq!(dimension_refine(4750, &cfg).unwrap(), (96, 96));
        assert_eq!(dimension_refine(5000, &cfg).unwrap(), (128, 128));
        assert!(dimension_refine(4499, &cfg).is_err());
    }

    #[test]
    fn wrapped_patch_covers_corners() {
        let m = Mask::new(8, 8, false);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = add_patch(&m, 1, 8, &mut rng).unwrap();
        assert_eq!(out.count(), 64);
    }
}
