//! Central finite-difference check of the condenser loss gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relchain::condenser::{loss_and_gradient, Chain, CondenserModel, Example};

use super::{concept, random_vec};

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn tensor(m: &CondenserModel, t: usize) -> &Vec<f64> {
    [&m.a, &m.b_comp, &m.w_dec, &m.b_dec][t]
}

fn tensor_mut(m: &mut CondenserModel, t: usize) -> &mut Vec<f64> {
    match t {
        0 => &mut m.a,
        1 => &mut m.b_comp,
        2 => &mut m.w_dec,
        _ => &mut m.b_dec,
    }
}

/// Worst relative error over every parameter, for two pairs with 3 and 2
/// chains on a `d`, `m` instance.
pub fn worst_relative_error(d: usize, m: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let legs: Vec<Vec<f32>> = (0..10).map(|_| random_vec(&mut rng, d)).collect();
    let targets: Vec<Vec<f32>> = (0..2).map(|_| random_vec(&mut rng, d)).collect();
    let chains = |range: std::ops::Range<usize>| -> Vec<Chain<'_>> {
        range
            .map(|i| Chain {
                x: concept(&format!("x{i}")),
                r_ax: &legs[2 * i],
                r_xb: &legs[2 * i + 1],
            })
            .collect()
    };
    let examples = vec![
        Example {
            a: concept("a"),
            b: concept("b"),
            chains: chains(0..3),
            target: &targets[0],
        },
        Example {
            a: concept("c"),
            b: concept("e"),
            chains: chains(3..5),
            target: &targets[1],
        },
    ];
    let model = CondenserModel::init(d, m, seed.wrapping_add(1));
    let (_, grad) = loss_and_gradient(&model, &examples).unwrap();
    let loss = |p: &CondenserModel| loss_and_gradient(p, &examples).unwrap().0;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for t in 0..4 {
        for i in 0..tensor(&model, t).len() {
            let (mut up, mut down) = (model.clone(), model.clone());
            tensor_mut(&mut up, t)[i] += h;
            tensor_mut(&mut down, t)[i] -= h;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * h);
            worst = worst.max(rel_err(tensor(&grad, t)[i], numeric));
        }
    }
    worst
}
