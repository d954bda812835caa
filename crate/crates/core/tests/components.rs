use echoplan_core::components::*;
use echoplan_core::world::{generate_episode, GridSpec, Scenario, SemanticRaster, HORIZON};
use echoplan_core::{Graph, ModelConfig, ModelParams, NavigationCommand, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> ModelConfig {
    ModelConfig {
        grid_h: 6,
        grid_w: 5,
        channels: 8,
        encoder_hidden: 4,
        tokens: 4,
        heads: 2,
        attn_layers: 2,
        mln_hidden: 6,
        planner_hidden: 7,
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn zero_biases(p: &mut ModelParams) {
    let names: Vec<String> = p.iter().map(|(_, n, _)| n.to_string()).collect();
    for n in names {
        if n.ends_with("bias") {
            p.by_name_mut(&n).unwrap().data.fill(0.0);
        }
    }
}

#[test]
fn encoder_default_shape() {
    let p = ModelParams::init(ModelConfig::default(), 0);
    let ep = generate_episode(1, Scenario::Straight, &GridSpec::default());
    let out = encode_bev_value(&p, &ep.frames[0].raster).unwrap();
    assert_eq!(out.shape(), (32 * 32, 64));
    assert!(out.is_finite());
}

#[test]
fn encoder_zero_input_zero_bias_is_zero() {
    let c = small();
    let mut p = ModelParams::init(c, 3);
    zero_biases(&mut p);
    let out = encode_bev_value(&p, &SemanticRaster::zeros(c.grid_h, c.grid_w)).unwrap();
    assert!(out.data.iter().all(|v| *v == 0.0));
}

#[test]
fn encoder_rejects_wrong_grid() {
    let p = ModelParams::init(small(), 0);
    let err = encode_bev_value(&p, &SemanticRaster::zeros(4, 4)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("6x5") && msg.contains("4x4"), "{msg}");
}

#[test]
fn zero_command_table_is_identity() {
    let c = small();
    let mut p = ModelParams::init(c, 1);
    p.by_name_mut("command.embedding").unwrap().data.fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bev = random(&mut rng, c.cells(), c.channels);
    let mut g = Graph::new(&p);
    let x = g.constant(bev.clone());
    let y = encode_command(&mut g, NavigationCommand::Left, x);
    assert_eq!(g.value(y), &bev);
}

#[test]
fn commands_shift_every_cell_equally() {
    let c = small();
    let p = ModelParams::init(c, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bev = random(&mut rng, c.cells(), c.channels);
    let mut g = Graph::new(&p);
    let x = g.constant(bev);
    let a = encode_command(&mut g, NavigationCommand::Left, x);
    let b = encode_command(&mut g, NavigationCommand::Right, x);
    let table = p.by_name("command.embedding").unwrap();
    for cell in 0..c.cells() {
        for k in 0..c.channels {
            let d = g.value(a).get(cell, k) - g.value(b).get(cell, k);
            let expected = table.get(0, k) - table.get(2, k);
            assert!((d - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn token_learner_pools_constant_map_to_constant() {
    let c = small();
    let p = ModelParams::init(c, 4);
    let v: Vec<f64> = (0..c.channels).map(|k| k as f64 * 0.3 - 1.0).collect();
    let mut bev = Tensor::zeros(c.cells(), c.channels);
    for r in 0..c.cells() {
        bev.row_mut(r).copy_from_slice(&v);
    }
    let mut g = Graph::new(&p);
    let x = g.constant(bev);
    let out = token_learn(&mut g, x);
    for i in 0..c.tokens {
        for k in 0..c.channels {
            assert!((g.value(out.tokens).get(i, k) - v[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn token_fuser_identity_output_broadcasts_equal_tokens() {
    let c = small();
    let mut p = ModelParams::init(c, 5);
    *p.by_name_mut("token_fuser.out.weight").unwrap() = Tensor::identity(c.channels);
    p.by_name_mut("token_fuser.out.bias").unwrap().data.fill(0.0);
    let v: Vec<f64> = (0..c.channels).map(|k| (k as f64).sin()).collect();
    let mut tokens = Tensor::zeros(c.tokens, c.channels);
    for r in 0..c.tokens {
        tokens.row_mut(r).copy_from_slice(&v);
    }
    let mut g = Graph::new(&p);
    let x = g.constant(tokens);
    let out = token_fuse(&mut g, x);
    for cell in 0..c.cells() {
        for k in 0..c.channels {
            assert!((g.value(out.bev).get(cell, k) - v[k]).abs() < 1e-12);
        }
    }
}

fn assert_distribution_rows(t: &Tensor) {
    for r in 0..t.rows {
        let row = t.row(r);
        assert!(row.iter().all(|v| *v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

fn layer_norm_oracle(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for r in 0..t.rows {
        let row = t.row(r);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        for (o, v) in out.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) / (var + LN_EPS).sqrt();
        }
    }
    out
}

#[test]
fn mln_normalizes_then_applies_motion_affine() {
    let c = small();
    let p = ModelParams::init(c, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tokens = random(&mut rng, c.tokens, c.channels);
    let traj = random(&mut rng, HORIZON, 2);
    let mut g = Graph::new(&p);
    let (x, t) = (g.constant(tokens), g.constant(traj));
    let out = mln(&mut g, x, t).unwrap();
    let n = g.value(out.normalized);
    for r in 0..n.rows {
        let row = n.row(r);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / row.len() as f64;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }
}

#[test]
fn mln_identity_affine_is_plain_layer_norm() {
    let c = small();
    let mut p = ModelParams::init(c, 7);
    p.by_name_mut("mln.gamma.weight").unwrap().data.fill(0.0);
    p.by_name_mut("mln.gamma.bias").unwrap().data.fill(1.0);
    p.by_name_mut("mln.beta.weight").unwrap().data.fill(0.0);
    p.by_name_mut("mln.beta.bias").unwrap().data.fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tokens = random(&mut rng, c.tokens, c.channels);
    let traj = random(&mut rng, HORIZON, 2);
    let mut g = Graph::new(&p);
    let (x, t) = (g.constant(tokens.clone()), g.constant(traj));
    let out = mln(&mut g, x, t).unwrap();
    let oracle = layer_norm_oracle(&tokens);
    for (a, b) in g.value(out.tokens).data.iter().zip(&oracle.data) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn mln_depends_on_trajectory() {
    let c = small();
    for seed in 0..5 {
        let p = ModelParams::init(c, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens = random(&mut rng, c.tokens, c.channels);
        let t1 = random(&mut rng, HORIZON, 2);
        let t2 = random(&mut rng, HORIZON, 2);
        let mut g = Graph::new(&p);
        let x = g.constant(tokens);
        let (a, b) = (g.constant(t1), g.constant(t2));
        let oa = mln(&mut g, x, a).unwrap().tokens;
        let ob = mln(&mut g, x, b).unwrap().tokens;
        assert_ne!(g.value(oa), g.value(ob));
    }
}

#[test]
fn mln_rejects_wrong_trajectory_shape() {
    let c = small();
    let p = ModelParams::init(c, 0);
    let mut g = Graph::new(&p);
    let x = g.constant(Tensor::zeros(c.tokens, c.channels));
    let t = g.constant(Tensor::zeros(5, 2));
    assert!(mln(&mut g, x, t).is_err());
}

#[test]
fn self_attention_weights_are_distributions() {
    let c = small();
    let p = ModelParams::init(c, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut g = Graph::new(&p);
    let x = g.constant(random(&mut rng, c.tokens, c.channels));
    let out = self_attention_refine(&mut g, x);
    assert_eq!(out.weights.len(), c.attn_layers);
    for layer in &out.weights {
        assert_eq!(layer.len(), c.heads);
        for w in layer {
            assert_distribution_rows(g.value(*w));
        }
    }
    assert_eq!(g.value(out.tokens).shape(), (c.tokens, c.channels));
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = t.clone();
    for (dst, &src) in perm.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(t.row(src));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn attention_maps_are_distributions(seed in 0u64..10_000) {
        let c = small();
        let p = ModelParams::init(c, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new(&p);
        let bev = g.constant(random(&mut rng, c.cells(), c.channels));
        let learned = token_learn(&mut g, bev);
        assert_distribution_rows(g.value(learned.weights));
        prop_assert_eq!(g.value(learned.weights).shape(), (c.tokens, c.cells()));
        let fused = token_fuse(&mut g, learned.tokens);
        assert_distribution_rows(g.value(fused.weights));
        prop_assert_eq!(g.value(fused.weights).shape(), (c.cells(), c.tokens));
        prop_assert_eq!(g.value(fused.bev).shape(), (c.cells(), c.channels));
    }

    #[test]
    fn self_attention_is_permutation_equivariant(seed in 0u64..10_000) {
        let c = small();
        let p = ModelParams::init(c, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, c.tokens, c.channels);
        let mut perm: Vec<usize> = (0..c.tokens).collect();
        perm.rotate_left((seed % c.tokens as u64) as usize);
        perm.swap(0, c.tokens - 1);
        let mut g = Graph::new(&p);
        let a = g.constant(x.clone());
        let b = g.constant(permute_rows(&x, &perm));
        let ya = self_attention_refine(&mut g, a).tokens;
        let yb = self_attention_refine(&mut g, b).tokens;
        let expected = permute_rows(g.value(ya), &perm);
        for (u, v) in expected.data.iter().zip(&g.value(yb).data) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn blocks_are_deterministic(seed in 0u64..10_000) {
        let c = small();
        let p = ModelParams::init(c, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, c.tokens, c.channels);
        let run = || {
            let mut g = Graph::new(&p);
            let v = g.constant(x.clone());
            let s = scene_attention(&mut g, v).tokens;
            let f = token_fuse(&mut g, s).bev;
            g.value(f).clone()
        };
        prop_assert_eq!(run(), run());
    }
}
