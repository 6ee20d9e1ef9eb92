mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use velo_attn_core::layers::{
    relative_encoding, Downsample, EncodingMlp, Geometry, Linear, StageState, TransformerUpsample, VelocityAttention,
    VelocityBlock,
};
use velo_attn_core::numerics::gradcheck::{grad_check, GradCheckReport};
use velo_attn_core::numerics::{NodeId, Tape, LAYER_NORM_EPS};
use velo_attn_core::train::{check_loss_gradients, LossConfig};
use velo_attn_core::{Model, ModelConfig, ParamStore, RadarScan, Result, Tensor};

const SEEDS: u64 = 20;

fn random_tensor(rng: &mut impl Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn geometry(scan: &RadarScan) -> Geometry<f64> {
    Model::<f64>::input_geometry(scan)
}

fn assert_report(what: &str, seed: u64, report: &GradCheckReport) {
    assert!(report.checked > 0, "{what}: nothing checked");
    assert!(
        report.passed(),
        "{what} seed {seed}: max rel err {:.3e}, first failure {:?}",
        report.max_rel_err,
        report.failures.first()
    );
}

#[test]
fn linear_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "lin", 4, 5, true, &mut rng).unwrap();
        let x = random_tensor(&mut rng, 3, 4);
        let frag = |t: &mut Tape<'_, f64>, ids: &[NodeId]| lin.forward(t, ids[0]);
        let rep = grad_check(&frag, &store, &[x], 1e-6, seed).unwrap();
        assert_report("linear", seed, &rep);
    }
}

#[test]
fn layer_norm_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let g = store
            .insert("g", &[8], (0..8).map(|_| rng.random_range(0.5..1.5)).collect())
            .unwrap();
        let b = store
            .insert("b", &[8], (0..8).map(|_| rng.random_range(-0.5..0.5)).collect())
            .unwrap();
        let x = random_tensor(&mut rng, 4, 8);
        let frag = |t: &mut Tape<'_, f64>, ids: &[NodeId]| {
            let (g, b) = (t.param(g), t.param(b));
            t.layer_norm(ids[0], g, b, LAYER_NORM_EPS)
        };
        let rep = grad_check(&frag, &store, &[x], 1e-6, seed).unwrap();
        assert_report("layer_norm", seed, &rep);
    }
}

#[test]
fn relative_encoding_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mlp = EncodingMlp::new(&mut store, "enc", 2, 8, 8, &mut rng).unwrap();
        let query = random_tensor(&mut rng, 3, 2);
        let nbrs = random_tensor(&mut rng, 12, 2);
        let frag = |t: &mut Tape<'_, f64>, _: &[NodeId]| relative_encoding(t, &query, &nbrs, &mlp);
        let rep = grad_check(&frag, &store, &[], 1e-5, seed).unwrap();
        assert_report("relative_encoding", seed, &rep);
    }
}

#[test]
fn velocity_attention_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let k = 1 + (seed as usize % 8);
        let attn = VelocityAttention::new(&mut store, "vtl", 8, k, &mut rng).unwrap();
        let scan = common::random_scan(&mut rng, 8, 3.0);
        let geom = geometry(&scan);
        let x = random_tensor(&mut rng, 8, 8);
        let frag = |t: &mut Tape<'_, f64>, ids: &[NodeId]| attn.forward(t, ids[0], &geom);
        let rep = grad_check(&frag, &store, &[x], 1e-4, seed).unwrap();
        assert_report("velocity_attention", seed, &rep);
    }
}

#[test]
fn block_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let block = VelocityBlock::new(&mut store, "blk", 8, 4, &mut rng).unwrap();
        let scan = common::random_scan(&mut rng, 8, 3.0);
        let geom = geometry(&scan);
        let x = random_tensor(&mut rng, 8, 8);
        let frag = |t: &mut Tape<'_, f64>, ids: &[NodeId]| block.forward(t, ids[0], &geom);
        let rep = grad_check(&frag, &store, &[x], 1e-4, seed).unwrap();
        assert_report("block", seed, &rep);
    }
}

#[test]
fn downsample_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let down = Downsample::new(&mut store, "down", 4, 8, 3, &mut rng).unwrap();
        let scan = common::random_scan(&mut rng, 8, 3.0);
        let geom = geometry(&scan);
        let x = random_tensor(&mut rng, 8, 4);
        let frag = |t: &mut Tape<'_, f64>, ids: &[NodeId]| -> Result<NodeId> {
            let stage = StageState {
                features: ids[0],
                geometry: geom.clone(),
            };
            Ok(down.forward(t, &stage)?.features)
        };
        let rep = grad_check(&frag, &store, &[x], 1e-4, seed).unwrap();
        assert_report("downsample", seed, &rep);
    }
}

#[test]
fn upsample_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let up = TransformerUpsample::new(&mut store, "up", 8, 4, 8, 4, 3, &mut rng).unwrap();
        let skip_scan = common::random_scan(&mut rng, 8, 3.0);
        let coarse_scan = common::random_scan(&mut rng, 4, 3.0);
        let (gs, gc) = (geometry(&skip_scan), geometry(&coarse_scan));
        let xc = random_tensor(&mut rng, 4, 8);
        let xs = random_tensor(&mut rng, 8, 4);
        let frag = |t: &mut Tape<'_, f64>, ids: &[NodeId]| {
            let coarse = StageState {
                features: ids[0],
                geometry: gc.clone(),
            };
            let skip = StageState {
                features: ids[1],
                geometry: gs.clone(),
            };
            up.forward(t, &coarse, &skip)
        };
        let rep = grad_check(&frag, &store, &[xc, xs], 1e-4, seed).unwrap();
        assert_report("upsample", seed, &rep);
    }
}

#[test]
fn training_loss_through_full_model() {
    let config = ModelConfig {
        stage_channels: vec![4, 6, 8],
        n_vtl: 4,
        n_tus: 3,
        k_ds: 4,
        ..ModelConfig::default()
    };
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let model = Model::<f64>::build(&config, seed).unwrap();
        let n = rng.random_range(2..=8);
        let mut scan = common::random_scan(&mut rng, n, 3.0);
        // both classes present so every loss branch is exercised
        let labels = scan.labels.as_mut().unwrap();
        labels[0] = 0;
        labels[1] = 1;
        let rep = check_loss_gradients(&model, &scan, &LossConfig::default(), 1e-4, 4, seed).unwrap();
        assert_report("combined loss", seed, &rep);
    }
}
