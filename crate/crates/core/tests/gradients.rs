use markflow::events::{ForecastWindow, EventSequence};
use markflow::model::{FlowModel, ModelConfig};
use markflow::nn::gradcheck::{check_gradients, GradCheck};
use markflow::nn::{Activation, Embedding, Graph, GruCell, Mlp, NnError, ParamStore, Tensor};
use markflow::rng::{self, FlowRng};
use proptest::prelude::*;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn draw(rng: &mut FlowRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * rng::uniform(rng) - 1.0)).collect()
}

fn randomize(store: &mut ParamStore, rng: &mut FlowRng) {
    let names: Vec<String> = store.names().cloned().collect();
    for name in names {
        let t = store.get_mut(&name).unwrap();
        let v = draw(rng, t.len(), 0.8);
        t.data_mut().copy_from_slice(&v);
    }
}

fn param(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut FlowRng) {
    store.insert(name, Tensor::new(vec![rows, cols], draw(rng, rows * cols, 1.0)).unwrap());
}

fn assert_ok(r: GradCheck) {
    assert!(r.max_rel_error < TOL, "{r:?}");
    assert!(r.checked > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn mlp_gradients(seed in any::<u64>(), silu in any::<bool>()) {
        let mut rng = rng::stream(seed, 0);
        let act = if silu { Activation::Silu } else { Activation::Tanh };
        let mlp = Mlp::new("f", vec![3, 5, 4, 2], act);
        let mut store = ParamStore::new();
        mlp.init(&mut store, &mut rng);
        randomize(&mut store, &mut rng);
        param(&mut store, "x", 4, 3, &mut rng);
        let target = draw(&mut rng, 8, 1.0);
        let r = check_gradients::<NnError, _>(&store, STEP, |g, s| {
            let x = g.param(s, "x")?;
            let y = mlp.forward(g, s, x)?;
            g.mse(y, &target)
        }).unwrap();
        assert_ok(r);
    }

    #[test]
    fn gru_gradients_with_mask(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 1);
        let cell = GruCell::new("g", 3, 4);
        let mut store = ParamStore::new();
        cell.init(&mut store, &mut rng);
        randomize(&mut store, &mut rng);
        param(&mut store, "x1", 3, 3, &mut rng);
        param(&mut store, "x2", 3, 3, &mut rng);
        param(&mut store, "h0", 3, 4, &mut rng);
        let target = draw(&mut rng, 12, 0.5);
        let r = check_gradients::<NnError, _>(&store, STEP, |g, s| {
            let h0 = g.param(s, "h0")?;
            let x1 = g.param(s, "x1")?;
            let x2 = g.param(s, "x2")?;
            let h1 = cell.step(g, s, x1, h0, None)?;
            let h2 = cell.step(g, s, x2, h1, Some(&[true, false, true]))?;
            g.mse(h2, &target)
        }).unwrap();
        assert_ok(r);
    }

    #[test]
    fn embedding_gradients(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 2);
        let emb = Embedding::new("e", 4, 3);
        let mut store = ParamStore::new();
        emb.init(&mut store, &mut rng);
        randomize(&mut store, &mut rng);
        let target = draw(&mut rng, 15, 1.0);
        let r = check_gradients::<NnError, _>(&store, STEP, |g, s| {
            let e = emb.lookup(g, s, &[0, 2, 2, 3, 0])?;
            let e = g.tanh(e)?;
            g.mse(e, &target)
        }).unwrap();
        assert_ok(r);
    }

    #[test]
    fn elementwise_and_structural_ops(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 3);
        let mut store = ParamStore::new();
        param(&mut store, "a", 3, 2, &mut rng);
        param(&mut store, "b", 3, 2, &mut rng);
        param(&mut store, "c", 2, 3, &mut rng);
        param(&mut store, "bias", 1, 4, &mut rng);
        let target = draw(&mut rng, 16, 1.0);
        let r = check_gradients::<NnError, _>(&store, STEP, |g, s| {
            let a = g.param(s, "a")?;
            let b = g.param(s, "b")?;
            let c = g.param(s, "c")?;
            let bias = g.param(s, "bias")?;
            let sa = g.sigmoid(a)?;
            let prod = g.mul(sa, b)?;
            let sum = g.add(prod, a)?;
            let shifted = g.affine(sum, -1.5, 0.25)?;
            let sb = g.silu(b)?;
            let joined = g.concat(&[shifted, sb])?;
            let rows = g.gather_rows(joined, &[2, 0, 2, 1])?;
            let rows = g.add_bias(rows, bias)?;
            let stale = g.gather_rows(joined, &[0, 1, 1, 2])?;
            let mixed = g.blend(rows, stale, &[true, false, true, false])?;
            let ct = g.matmul(a, c)?;
            let l1 = g.mse(mixed, &target)?;
            let l2 = g.cross_entropy(ct, &[0, 2, 1])?;
            g.weighted_sum(&[(l1, 0.7), (l2, 1.3)])
        }).unwrap();
        assert_ok(r);
    }

    #[test]
    fn cross_entropy_gradients(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, 4);
        let mut store = ParamStore::new();
        param(&mut store, "z", 5, 4, &mut rng);
        let labels: Vec<usize> = (0..5).map(|_| rng::categorical(&mut rng, &[1.0; 4])).collect();
        let r = check_gradients::<NnError, _>(&store, STEP, |g, s| {
            let z = g.param(s, "z")?;
            let z = g.affine(z, 3.0, 0.0)?;
            g.cross_entropy(z, &labels)
        }).unwrap();
        assert_ok(r);
    }

    #[test]
    fn full_objective_gradients(seed in any::<u64>(), alpha in 0.0f64..2.0) {
        let cfg = ModelConfig {
            num_marks: 3,
            horizon: 3,
            hidden_dim: 3,
            mark_embed_dim: 2,
            time_embed_dim: 2,
            flow_time_dim: 4,
            field_hidden: vec![5],
            classifier_hidden: vec![4],
            ..ModelConfig::default()
        };
        let model = FlowModel::new(cfg).unwrap();
        let mut store = model.init_params(seed);
        let mut rng = rng::stream(seed, 5);
        randomize(&mut store, &mut rng);
        let w1 = ForecastWindow::new(
            EventSequence::new(vec![0.4, 1.3, 0.2], vec![0, 2, 1], 3).unwrap(),
            EventSequence::new(vec![0.9, 0.1, 2.0], vec![1, 1, 0], 3).unwrap(),
            3,
        ).unwrap();
        let w2 = ForecastWindow::new(
            EventSequence::new(vec![2.5], vec![2], 3).unwrap(),
            EventSequence::new(vec![0.3, 0.6, 0.7], vec![2, 0, 0], 3).unwrap(),
            3,
        ).unwrap();
        let batch = model.draw_batch(&[&w1, &w2], &mut rng);
        let r = check_gradients(&store, STEP, |g: &mut Graph, s: &ParamStore| {
            model.build_loss(g, s, &batch, alpha).map(|(total, ..)| total)
        }).unwrap();
        assert_eq!(r.checked, store.num_scalars());
        assert_ok(r);
    }
}
