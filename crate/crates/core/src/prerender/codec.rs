use super::{PrerenderError, Result};
use crate::{Mask, Tensor3};

pub const LATENT_CHANNELS: usize = 4;
/// Pixels per latent cell along each axis.
pub const LATENT_SCALE: usize = 8;

/// Image ↔ latent mapping. `encode` gets the coverage mask as well; codecs
/// that work on RGB alone ignore it.
pub trait LatentCodec: Send + Sync {
    fn encode(&self, rgb: &Tensor3, mask: &Mask) -> Result<Tensor3>;
    fn decode(&self, z: &Tensor3) -> Result<Tensor3>;
}

/// Closed-form codec: 8× area pooling of RGB mapped to `[−1, 1]`, with the
/// pooled coverage as the fourth channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StubCodec;

impl LatentCodec for StubCodec {
    fn encode(&self, rgb: &Tensor3, mask: &Mask) -> Result<Tensor3> {
        stub_encode(rgb, mask)
    }

    fn decode(&self, z: &Tensor3) -> Result<Tensor3> {
        stub_decode(z)
    }
}

fn check_image(rgb: &Tensor3, mask: &Mask) -> Result<()> {
    if rgb.channels != 3 {
        return Err(PrerenderError::Codec(format!("expected 3 channels, got {}", rgb.channels)));
    }
    if rgb.height % LATENT_SCALE != 0 || rgb.width % LATENT_SCALE != 0 {
        return Err(PrerenderError::Codec(format!(
            "image {}x{} is not a multiple of {LATENT_SCALE}",
            rgb.width, rgb.height
        )));
    }
    if mask.height != rgb.height || mask.width != rgb.width {
        return Err(PrerenderError::Codec("mask and image sizes differ".into()));
    }
    Ok(())
}

pub fn stub_encode(rgb: &Tensor3, mask: &Mask) -> Result<Tensor3> {
    check_image(rgb, mask)?;
    let (h, w) = (rgb.height / LATENT_SCALE, rgb.width / LATENT_SCALE);
    let mut z = Tensor3::zeros(LATENT_CHANNELS, h, w);
    let cell = (LATENT_SCALE * LATENT_SCALE) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 4];
            for dy in 0..LATENT_SCALE {
                for dx in 0..LATENT_SCALE {
                    let (py, px) = (y * LATENT_SCALE + dy, x * LATENT_SCALE + dx);
                    for (c, a) in acc.iter_mut().enumerate().take(3) {
                        *a += rgb.get(c, py, px);
                    }
                    if mask.get(py, px) {
                        acc[3] += 1.0;
                    }
                }
            }
            for (c, a) in acc.iter().enumerate() {
                z.set(c, y, x, 2.0 * a / cell - 1.0);
            }
        }
    }
    Ok(z)
}

/// Nearest-neighbour 8× expansion of the first three channels.
pub fn stub_decode(z: &Tensor3) -> Result<Tensor3> {
    if z.channels != LATENT_CHANNELS {
        return Err(PrerenderError::Codec(format!("expected 4 channels, got {}", z.channels)));
    }
    let (h, w) = (z.height * LATENT_SCALE, z.width * LATENT_SCALE);
    let mut img = Tensor3::zeros(3, h, w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                img.set(c, y, x, 0.5 * (z.get(c, y / LATENT_SCALE, x / LATENT_SCALE) + 1.0));
            }
        }
    }
    Ok(img)
}

/// Encodes a rendered view and checks the latent comes back `4 × l × l`.
pub fn encode_view(rgb: &Tensor3, mask: &Mask, codec: &dyn LatentCodec, l: usize) -> Result<Tensor3> {
    let z = codec.encode(rgb, mask)?;
    if z.dims() != [LATENT_CHANNELS, l, l] {
        return Err(PrerenderError::Codec(format!(
            "codec returned {:?}, expected [4, {l}, {l}]",
            z.dims()
        )));
    }
    if !z.is_finite() {
        return Err(PrerenderError::Codec("codec returned non-finite values".into()));
    }
    Ok(z)
}

/// Foreground mask at latent resolution: cells at least half covered.
pub fn latent_mask(mask: &Mask, l: usize) -> Mask {
    let (sy, sx) = (mask.height / l, mask.width / l);
    let mut out = Mask::new(l, l, false);
    for y in 0..l {
        for x in 0..l {
            let mut n = 0;
            for dy in 0..sy {
                for dx in 0..sx {
                    n += mask.get(y * sy + dy, x * sx + dx) as usize;
                }
            }
            out.set(y, x, 2 * n >= sy * sx);
        }
    }
    out
}
