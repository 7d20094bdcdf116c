use rand::Rng;

use crate::tensor::{Mixer, ModelIndex, TensorParams, TensorShape};

pub(crate) fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub(crate) fn random_params(rng: &mut impl Rng, d0: usize, dims: &[usize], k: &[usize]) -> TensorParams {
    let shape = TensorShape::new(d0, dims.to_vec()).unwrap();
    let index = ModelIndex::new(k.to_vec(), &shape).unwrap();
    let cells: usize = k.iter().product();
    let core: Vec<f64> = (0..cells).flat_map(|_| random_simplex(rng, d0)).collect();
    let mixers = dims
        .iter()
        .zip(k)
        .map(|(&d, &kj)| {
            if kj == 1 {
                Mixer::trivial(d)
            } else {
                Mixer::from_rows((0..d).map(|_| random_simplex(rng, kj)).collect()).unwrap()
            }
        })
        .collect();
    TensorParams::new(shape, index, core, mixers).unwrap()
}
