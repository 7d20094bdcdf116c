use super::{ConditionalTensor, Mixer, ModelIndex, TensorParams, SIMPLEX_TOL};
use crate::error::Result;

/// Factorizes a dense conditional tensor.
///
/// Predictors along which every slice is identical (within [`SIMPLEX_TOL`])
/// collapse to `k_j = 1`. Every other predictor keeps `k_j = d_j` with an
/// identity mixer, and the core is the tensor itself restricted to those
/// predictors. The result reproduces the input exactly but `k_j` is not
/// minimal in general.
pub fn decompose(tensor: &ConditionalTensor) -> Result<TensorParams> {
    let shape = tensor.shape().clone();
    let p = shape.predictors();
    let d0 = shape.classes();
    let grid = shape.grid();

    let k: Vec<usize> = (0..p)
        .map(|j| {
            if depends_on(tensor, &grid, j) {
                shape.dims()[j]
            } else {
                1
            }
        })
        .collect();
    let index = ModelIndex::new(k, &shape)?;
    let included = index.included();

    // core cell h over the included predictors is P(. | x) with x_j = h_j on
    // included coordinates and level 0 elsewhere
    let extents: Vec<usize> = included.iter().map(|&j| shape.dims()[j]).collect();
    let cells: usize = extents.iter().product();
    let mut core = Vec::with_capacity(cells * d0);
    let mut x = vec![0usize; p];
    for mut c in 0..cells {
        for (&j, &e) in included.iter().zip(&extents).rev() {
            x[j] = c % e;
            c /= e;
        }
        core.extend_from_slice(tensor.cell(&x));
    }

    let mixers = (0..p)
        .map(|j| {
            if index.as_slice()[j] == 1 {
                Mixer::trivial(shape.dims()[j])
            } else {
                Mixer::identity(shape.dims()[j])
            }
        })
        .collect();
    TensorParams::new(shape, index, core, mixers)
}

fn depends_on(tensor: &ConditionalTensor, grid: &[Vec<usize>], j: usize) -> bool {
    let mut base = vec![0usize; grid.first().map_or(0, Vec::len)];
    grid.iter().filter(|x| x[j] != 0).any(|x| {
        base.copy_from_slice(x);
        base[j] = 0;
        tensor
            .cell(x)
            .iter()
            .zip(tensor.cell(&base))
            .any(|(a, b)| (a - b).abs() > SIMPLEX_TOL)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorShape;
    use crate::testutil::random_simplex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_tensor_collapses() {
        let shape = TensorShape::new(2, vec![3, 2, 4]).unwrap();
        let t = ConditionalTensor::from_fn(shape, |_| vec![0.4, 0.6]).unwrap();
        let params = decompose(&t).unwrap();
        assert_eq!(params.index().as_slice(), &[1, 1, 1]);
        assert_eq!(params.core(), &[0.4, 0.6]);
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = TensorShape::new(2, vec![2, 2]).unwrap();
        let t = ConditionalTensor::from_fn(shape.clone(), |_| random_simplex(&mut rng, 2)).unwrap();
        let params = decompose(&t).unwrap();
        for x in shape.grid() {
            let got = params.evaluate(&x).unwrap();
            for (a, b) in got.iter().zip(t.cell(&x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_relevant_predictor() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let shape = TensorShape::new(3, vec![4, 2, 3]).unwrap();
        let slices: Vec<Vec<f64>> = (0..4).map(|_| random_simplex(&mut rng, 3)).collect();
        let t = ConditionalTensor::from_fn(shape, |x| slices[x[0]].clone()).unwrap();
        let params = decompose(&t).unwrap();
        assert_eq!(params.index().as_slice(), &[4, 1, 1]);
    }

    #[test]
    fn rejects_non_simplex_input() {
        let shape = TensorShape::new(2, vec![2]).unwrap();
        assert!(ConditionalTensor::new(shape, vec![0.5, 0.5, 0.7, 0.7]).is_err());
    }
}
