//! Total-variation distance between conditional models under an empirical
//! design measure, and the parameter-space bounds that control it.

use super::{ConditionalModel, Mixer, ModelIndex, TensorParams};
use crate::error::{Error, Result};

/// Mean over `points` of `sum_y |P(y|x) - Q(y|x)|`. Lies in `[0, 2]`.
pub fn tv_distance<P, Q, X>(p: &P, q: &Q, points: &[X]) -> Result<f64>
where
    P: ConditionalModel + ?Sized,
    Q: ConditionalModel + ?Sized,
    X: AsRef<[usize]>,
{
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch(format!(
            "models have shapes {:?} and {:?}",
            p.shape(),
            q.shape()
        )));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no evaluation points".into()));
    }
    let d0 = p.shape().classes();
    let (mut a, mut b) = (vec![0.0; d0], vec![0.0; d0]);
    let mut total = 0.0;
    for x in points {
        p.conditional_into(x.as_ref(), &mut a)?;
        q.conditional_into(x.as_ref(), &mut b)?;
        total += a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum::<f64>();
    }
    Ok(total / points.len() as f64)
}

/// Upper bound on the distance between two models with the same latent
/// index:
/// `sum_y max_h |lambda_h(y) - lambda'_h(y)| + d0 * sum_j max_{x,h} |pi - pi'|`.
pub fn parameter_distance_bound(a: &TensorParams, b: &TensorParams) -> Result<f64> {
    if a.shape() != b.shape() || a.index() != b.index() {
        return Err(Error::ShapeMismatch(
            "distance bound needs identical shapes and model indices".into(),
        ));
    }
    let d0 = a.shape().classes();
    let core_term: f64 = (0..d0)
        .map(|y| {
            (0..a.core_cells())
                .map(|c| (a.core_cell(c)[y] - b.core_cell(c)[y]).abs())
                .fold(0.0, f64::max)
        })
        .sum();
    let mixer_term: f64 = a
        .mixers()
        .iter()
        .zip(b.mixers())
        .map(|(m, n)| {
            (0..m.levels())
                .flat_map(|v| m.row(v).iter().zip(n.row(v)).map(|(s, t)| (s - t).abs()))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(core_term + d0 as f64 * mixer_term)
}

/// The submodel of `full` that keeps predictor `j` only where `keep[j]` is
/// true. Dropped predictors are pinned to their first latent class: the core
/// of the submodel is the slice of `full`'s core at `h_j = 0`.
pub fn nested_submodel(full: &TensorParams, keep: &[bool]) -> Result<TensorParams> {
    let shape = full.shape();
    if keep.len() != shape.predictors() {
        return Err(Error::ShapeMismatch(format!(
            "keep mask has {} entries for {} predictors",
            keep.len(),
            shape.predictors()
        )));
    }
    let k: Vec<usize> = full
        .index()
        .as_slice()
        .iter()
        .zip(keep)
        .map(|(&kj, &kp)| if kp { kj } else { 1 })
        .collect();
    let index = ModelIndex::new(k, shape)?;
    let sub_included = index.included();
    let sub_extents: Vec<usize> = sub_included.iter().map(|&j| index.as_slice()[j]).collect();
    let cells: usize = sub_extents.iter().product();
    let mut h = vec![0usize; shape.predictors()];
    let mut core = Vec::with_capacity(cells * shape.classes());
    for mut c in 0..cells {
        for (&j, &e) in sub_included.iter().zip(&sub_extents).rev() {
            h[j] = c % e;
            c /= e;
        }
        core.extend_from_slice(full.lambda(&h));
    }
    let mixers = (0..shape.predictors())
        .map(|j| {
            if keep[j] {
                full.mixer(j).clone()
            } else {
                Mixer::trivial(shape.dims()[j])
            }
        })
        .collect();
    TensorParams::new(shape.clone(), index, core, mixers)
}

/// Upper bound on the distance between `full` and
/// [`nested_submodel`]`(full, keep)`:
/// `d0 * sum_{j dropped} max_x sum_{h >= 1} pi^(j)_h(x)`.
pub fn truncation_distance_bound(full: &TensorParams, keep: &[bool]) -> Result<f64> {
    if keep.len() != full.shape().predictors() {
        return Err(Error::ShapeMismatch("keep mask length".into()));
    }
    let tail: f64 = full
        .mixers()
        .iter()
        .zip(keep)
        .filter(|(_, &k)| !k)
        .map(|(m, _)| {
            (0..m.levels())
                .map(|v| m.row(v)[1..].iter().sum::<f64>())
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(full.shape().classes() as f64 * tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ConditionalTensor, TensorShape};
    use crate::testutil::random_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_models_have_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_params(&mut rng, 2, &[2, 3], &[2, 2]);
        let grid = a.shape().grid();
        assert_eq!(tv_distance(&a, &a, &grid).unwrap(), 0.0);
        assert_eq!(parameter_distance_bound(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn opposite_point_masses_are_at_distance_two() {
        let shape = TensorShape::new(2, vec![2]).unwrap();
        let p = ConditionalTensor::from_fn(shape.clone(), |_| vec![1.0, 0.0]).unwrap();
        let q = ConditionalTensor::from_fn(shape.clone(), |_| vec![0.0, 1.0]).unwrap();
        assert_eq!(tv_distance(&p, &q, &shape.grid()).unwrap(), 2.0);
    }

    #[test]
    fn distance_matches_hand_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = random_params(&mut rng, 2, &[2, 2], &[2, 2]);
        let b = random_params(&mut rng, 2, &[2, 2], &[2, 1]);
        let pts = [[0, 0], [0, 1], [1, 0], [1, 1], [1, 1]];
        let mut want = 0.0;
        for x in &pts {
            let (u, v) = (a.evaluate(x).unwrap(), b.evaluate(x).unwrap());
            want += (u[0] - v[0]).abs() + (u[1] - v[1]).abs();
        }
        want /= 5.0;
        assert!((tv_distance(&a, &b, &pts).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn single_mixer_perturbation_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = random_params(&mut rng, 3, &[2, 3], &[2, 2]);
        let delta = 1e-3;
        let mut m = a.mixer(1).clone();
        let (p0, p1) = (m.get(2, 0), m.get(2, 1));
        let shift = if p0 > delta { -delta } else { delta };
        m.set(2, 0, p0 + shift);
        m.set(2, 1, p1 - shift);
        let mut mixers = a.mixers().to_vec();
        mixers[1] = m;
        let b = TensorParams::new(a.shape().clone(), a.index().clone(), a.core().to_vec(), mixers).unwrap();
        let bound = parameter_distance_bound(&a, &b).unwrap();
        assert!((bound - 3.0 * delta).abs() < 1e-12, "{bound}");
    }

    #[test]
    fn bounds_hold_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            let a = random_params(&mut rng, 2, &[2, 2], &[2, 2]);
            let b = random_params(&mut rng, 2, &[2, 2], &[2, 2]);
            let grid = a.shape().grid();
            assert!(tv_distance(&a, &b, &grid).unwrap() <= parameter_distance_bound(&a, &b).unwrap() + 1e-12);
        }
        for _ in 0..50 {
            let full = random_params(&mut rng, 3, &[3, 2, 3], &[3, 2, 2]);
            let keep: Vec<bool> = (0..3).map(|_| rng.random()).collect();
            let sub = nested_submodel(&full, &keep).unwrap();
            let grid = full.shape().grid();
            assert!(
                tv_distance(&full, &sub, &grid).unwrap()
                    <= truncation_distance_bound(&full, &keep).unwrap() + 1e-12
            );
        }
    }

    #[test]
    fn mismatched_index_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let a = random_params(&mut rng, 2, &[2, 2], &[2, 2]);
        let b = random_params(&mut rng, 2, &[2, 2], &[2, 1]);
        assert!(parameter_distance_bound(&a, &b).is_err());
    }
}
