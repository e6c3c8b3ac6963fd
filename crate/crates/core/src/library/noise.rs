use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Shape, Tensor};

/// One library value: a standard-normal latent stored in single precision.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTensor {
    pub noise_id: u64,
    pub shape: Shape,
    /// Row-major `(c, y, x)`.
    pub values: Vec<f32>,
}

impl NoiseTensor {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.shape, self.values.iter().map(|&v| v as f64).collect())
            .expect("noise tensor length matches its shape")
    }

    pub fn from_tensor(noise_id: u64, t: &Tensor) -> Self {
        Self {
            noise_id,
            shape: t.shape(),
            values: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(noise_id: u64, shape: Shape, bytes: &[u8]) -> Self {
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self {
            noise_id,
            shape,
            values,
        }
    }
}

/// Deterministic standard-normal tensor for `(master_seed, noise_id)`.
///
/// The master seed keys a ChaCha8 stream cipher and the noise id selects the
/// stream, so any id can be generated independently of every other id.
pub fn sample_noise(master_seed: u64, noise_id: u64, shape: Shape) -> NoiseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(noise_id);
    let values = (0..shape.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    NoiseTensor {
        noise_id,
        shape,
        values,
    }
}
