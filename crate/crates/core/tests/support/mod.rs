#![allow(dead_code)]

use qmemtime_core::oqho::{InterconnectionSpec, OqhoParams};
use qmemtime_core::RealMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Matrix with entries uniform in `[-scale, scale)`.
pub fn randm(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> RealMatrix {
    let raw = randm(rng, n, n, scale);
    (&raw + raw.transpose()) * 0.5
}

/// Two oscillators with two modes each (n_k = 4), one field channel pair
/// each (m_k = 2, r_k = 2, full selectors), moderate seeded entries, and a
/// seeded direct coupling block.
pub fn two_system_spec(seed: u64) -> InterconnectionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r1 = random_symmetric(&mut rng, 4, 0.4);
    let m1 = randm(&mut rng, 2, 4, 0.4);
    let r2 = random_symmetric(&mut rng, 4, 0.4);
    let m2 = randm(&mut rng, 2, 4, 0.4);
    let n1 = randm(&mut rng, 2, 4, 0.4);
    let n2 = randm(&mut rng, 2, 4, 0.4);
    let r12 = randm(&mut rng, 4, 4, 0.4);
    let params1 = OqhoParams::new(r1, m1, None).unwrap();
    let params2 = OqhoParams::new(r2, m2, None).unwrap();
    InterconnectionSpec::new(params1, params2, n1, n2, r12).unwrap()
}
