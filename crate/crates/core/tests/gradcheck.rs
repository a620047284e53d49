//! Gradient correctness of the autodiff tape against central finite
//! differences, plus the determinism and finiteness contracts of the
//! numeric substrate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cadiff_core::numerics::{Activation, AdamConfig, Gru, Mlp, ParamSet, Tape};
use cadiff_core::testutil::{finite_difference_grad, max_grad_error};
use cadiff_core::Tensor;

/// Build a random smooth graph (MLP, optionally fed through a GRU step and
/// extra elementwise ops), return loss as a function of one parameter's
/// flat values while holding everything else fixed.
fn random_graph_loss(seed: u64) -> (ParamSet, Vec<String>, impl Fn(&ParamSet) -> f64) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let din = rng.random_range(1..5);
    let dhid = rng.random_range(2..7);
    let dout = rng.random_range(1..4);
    let act = match seed % 2 {
        0 => Activation::Tanh,
        _ => Activation::Softplus,
    };
    let use_gru = seed % 3 == 0;

    let mlp = Mlp::new("mlp", vec![din, dhid, dout], act);
    let gru = Gru::new("gru", din, din);
    let mut params = ParamSet::new();
    mlp.init(&mut params, &mut rng);
    if use_gru {
        gru.init(&mut params, &mut rng);
    }

    let batch = rng.random_range(1..4);
    let x: Vec<f64> = (0..batch * din).map(|_| rng.random_range(-1.5..1.5)).collect();
    let h0: Vec<f64> = (0..batch * din).map(|_| rng.random_range(-0.5..0.5)).collect();

    let names: Vec<String> = {
        let mut tmp = ParamSet::new();
        mlp.init(&mut tmp, &mut ChaCha12Rng::seed_from_u64(seed));
        if use_gru {
            gru.init(&mut tmp, &mut ChaCha12Rng::seed_from_u64(seed + 1));
        }
        tmp.names().map(String::from).collect()
    };

    let loss = move |ps: &ParamSet| -> f64 {
        let mut tape = Tape::new();
        let bound = ps.bind(&mut tape);
        let mut input = tape.constant(&Tensor::matrix(batch, din, x.clone()).unwrap());
        if use_gru {
            let h = tape.constant(&Tensor::matrix(batch, din, h0.clone()).unwrap());
            input = gru.step(&mut tape, &bound, input, h).unwrap();
        }
        let out = mlp.forward(&mut tape, &bound, input).unwrap();
        let sq = tape.square(out);
        let per_row = tape.sum_rows(sq);
        let scaled = tape.tanh(per_row);
        let loss = tape.mean_all(scaled);
        tape.scalar_value(loss)
    };
    (params, names, loss)
}

#[test]
fn backward_matches_finite_differences_over_200_random_graphs() {
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let (params, names, loss) = random_graph_loss(seed);
        let analytic = run_graph_grads(seed, &params);

        for name in &names {
            let base = params.get(name).unwrap().clone();
            let mut f = |vals: &[f64]| {
                let mut probe = params.clone_values();
                probe.set_value(name, vals.to_vec()).unwrap();
                loss(&probe)
            };
            let fd = finite_difference_grad(&mut f, &base.data, 1e-5);
            let a = analytic
                .get(name)
                .cloned()
                .unwrap_or_else(|| vec![0.0; base.data.len()]);
            let err = max_grad_error(&a, &fd, 1e-7);
            worst = worst.max(err);
            assert!(err < 1e-4, "seed {seed} param {name}: relative error {err}");
        }
    }
    println!("worst relative gradient error over 200 graphs: {worst:.3e}");
}

/// Run the same graph as `random_graph_loss(seed)` and return analytic grads.
fn run_graph_grads(
    seed: u64,
    params: &ParamSet,
) -> std::collections::BTreeMap<String, Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let din = rng.random_range(1..5);
    let dhid = rng.random_range(2..7);
    let dout = rng.random_range(1..4);
    let act = match seed % 2 {
        0 => Activation::Tanh,
        _ => Activation::Softplus,
    };
    let use_gru = seed % 3 == 0;
    let mlp = Mlp::new("mlp", vec![din, dhid, dout], act);
    let gru = Gru::new("gru", din, din);
    {
        // Burn the same RNG draws the init consumed so inputs line up.
        let mut tmp = ParamSet::new();
        mlp.init(&mut tmp, &mut rng);
        if use_gru {
            gru.init(&mut tmp, &mut rng);
        }
    }
    let batch = rng.random_range(1..4);
    let x: Vec<f64> = (0..batch * din).map(|_| rng.random_range(-1.5..1.5)).collect();
    let h0: Vec<f64> = (0..batch * din).map(|_| rng.random_range(-0.5..0.5)).collect();

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut input = tape.constant(&Tensor::matrix(batch, din, x).unwrap());
    if use_gru {
        let h = tape.constant(&Tensor::matrix(batch, din, h0).unwrap());
        input = gru.step(&mut tape, &bound, input, h).unwrap();
    }
    let out = mlp.forward(&mut tape, &bound, input).unwrap();
    let sq = tape.square(out);
    let per_row = tape.sum_rows(sq);
    let scaled = tape.tanh(per_row);
    let loss = tape.mean_all(scaled);
    tape.backward(loss).unwrap();
    params.collect_grads(&tape, &bound)
}

#[test]
fn identical_seeds_give_bit_identical_adam_trajectories() {
    let run = || -> Vec<u64> {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let mlp = Mlp::new("m", vec![2, 8, 1], Activation::Tanh);
        let mut ps = ParamSet::new();
        mlp.init(&mut ps, &mut rng);
        let cfg = AdamConfig::with_lr(1e-2);
        for step in 0..100 {
            let mut tape = Tape::new();
            let bound = ps.bind(&mut tape);
            let phase = (step as f64) * 0.01;
            let x = tape.constant(&Tensor::matrix(4, 2, vec![phase; 8]).unwrap());
            let y = mlp.forward(&mut tape, &bound, x).unwrap();
            let sq = tape.square(y);
            let loss = tape.mean_all(sq);
            tape.backward(loss).unwrap();
            let grads = ps.collect_grads(&tape, &bound);
            ps.adam_step(&grads, cfg).unwrap();
        }
        ps.iter().flat_map(|(_, t)| t.data.iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(run(), run());
}

#[test]
fn layers_stay_finite_on_large_inputs() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let mlp = Mlp::new("m", vec![3, 16, 16, 2], Activation::Softplus);
    let gru = Gru::new("g", 3, 8);
    let mut ps = ParamSet::new();
    mlp.init(&mut ps, &mut rng);
    gru.init(&mut ps, &mut rng);

    for &scale in &[1.0, 100.0, 1000.0] {
        let mut tape = Tape::new();
        let bound = ps.bind(&mut tape);
        let x = tape.constant(
            &Tensor::matrix(2, 3, vec![scale, -scale, scale, -scale, scale, -scale]).unwrap(),
        );
        let h = tape.constant(&Tensor::matrix(2, 8, vec![0.0; 16]).unwrap());
        let hidden = gru.step(&mut tape, &bound, x, h).unwrap();
        let _ = hidden;
        let out = mlp.forward(&mut tape, &bound, x).unwrap();
        let sq = tape.square(out);
        let loss = tape.mean_all(sq);
        tape.backward(loss).unwrap();
        tape.check_finite("large-input forward/backward").unwrap();
        for (_, g) in ps.collect_grads(&tape, &bound) {
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }
}
