use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use studentgraph_core::Matrix;
use studentgraph_gnn::checkpoint;
use studentgraph_gnn::{Dropout, Error, GnnConfig, GnnModel, GraphInput, ModelKind, Tape};

/// Self-loops plus random symmetric cross edges.
fn random_pairs(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|v| (v, v)).collect();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
    }
    pairs
}

fn random_graph(n: usize, f: usize, relations: &[&str], seed: u64) -> GraphInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_vec(n, f, (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    let rels = relations.iter().map(|r| (r.to_string(), random_pairs(n, 0.3, &mut rng))).collect();
    GraphInput::new(x, labels, rels)
}

fn small_config(kind: ModelKind, f: usize, relations: &[&str]) -> GnnConfig {
    GnnConfig {
        hidden: 4,
        heads: 2,
        relations: relations.iter().map(|r| r.to_string()).collect(),
        seed: 3,
        ..GnnConfig::new(kind, f)
    }
}

fn fd_check(model: &GnnModel, g: &GraphInput) {
    let rows = g.all_rows();
    let (_, grads) = model.loss_and_grad(g, &rows, &mut Dropout::off()).unwrap();
    let h = 1e-6;
    for (k, p) in model.store.params.iter().enumerate() {
        let mut numeric = vec![0.0; p.value.as_slice().len()];
        for i in 0..numeric.len() {
            let mut plus = model.clone();
            plus.store.params[k].value.as_mut_slice()[i] += h;
            let mut minus = model.clone();
            minus.store.params[k].value.as_mut_slice()[i] -= h;
            numeric[i] = (plus.loss(g, &rows).unwrap() - minus.loss(g, &rows).unwrap()) / (2.0 * h);
        }
        let diff: f64 =
            grads[k].as_slice().iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = |v: &[f64]| v.iter().map(|b| b * b).sum::<f64>().sqrt();
        let scale = norm(&numeric).max(norm(grads[k].as_slice()));
        if scale < 1e-8 {
            // identically zero gradient (e.g. a key bias, which softmax cancels)
            assert!(diff < 1e-8, "{}: absolute error {diff:e}", p.name);
        } else {
            assert!(diff / scale < 1e-4, "{}: relative error {:e}", p.name, diff / scale);
        }
    }
}

#[test]
fn han_gradients_match_finite_differences() {
    let rels = ["R-S-R", "R-X-R"];
    let g = random_graph(8, 3, &rels, 1);
    let model = GnnModel::new(small_config(ModelKind::Han, 3, &rels)).unwrap();
    fd_check(&model, &g);
}

#[test]
fn hgt_gradients_match_finite_differences() {
    let rels = ["R-S-R"];
    let g = random_graph(8, 3, &rels, 2);
    let model = GnnModel::new(small_config(ModelKind::Hgt, 3, &rels)).unwrap();
    fd_check(&model, &g);
}

#[test]
fn hgt_two_relations_gradients() {
    let rels = ["R-S-R", "R-X-R"];
    let g = random_graph(6, 2, &rels, 4);
    let cfg = GnnConfig { layers: 1, ..small_config(ModelKind::Hgt, 2, &rels) };
    fd_check(&GnnModel::new(cfg).unwrap(), &g);
}

fn identity_blocks(heads: usize, d: usize) -> Matrix {
    let mut m = Matrix::zeros(heads * d, d);
    for h in 0..heads {
        for i in 0..d {
            m[(h * d + i, i)] = 1.0;
        }
    }
    m
}

#[test]
fn hgt_reduces_to_scaled_dot_product_attention() {
    let rels = ["R-S-R"];
    let g = random_graph(10, 4, &rels, 5);
    let cfg = GnnConfig { hidden: 6, heads: 2, layers: 1, ..small_config(ModelKind::Hgt, 4, &rels) };
    let (heads, d) = (2, 3);
    let mut model = GnnModel::new(cfg).unwrap();
    model.store.get_mut("l0.R-S-R.att").unwrap().value = identity_blocks(heads, d);
    model.store.get_mut("l0.R-S-R.msg").unwrap().value = identity_blocks(heads, d);
    assert_eq!(model.store.get("l0.R-S-R.prior").unwrap().value.as_slice(), &[1.0, 1.0]);

    let mut tape = Tape::new();
    let f = model.forward(&mut tape, &g, &mut Dropout::off()).unwrap();
    let got = tape.value(f.aggregated[0]).clone();

    // plain nested-loop reference
    let p = |name: &str| model.store.get(name).unwrap().value.clone();
    let affine = |x: &[f64], w: &Matrix, b: &Matrix| -> Vec<f64> {
        (0..w.cols()).map(|j| b[(0, j)] + (0..x.len()).map(|i| x[i] * w[(i, j)]).sum::<f64>()).collect()
    };
    let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
    let h0: Vec<Vec<f64>> =
        g.x.iter_rows().map(|r| affine(r, &p("input.w"), &p("input.b")).into_iter().map(elu).collect()).collect();
    let proj = |w: &str, b: &str| -> Vec<Vec<f64>> { h0.iter().map(|r| affine(r, &p(w), &p(b))).collect() };
    let (k, q, v) = (proj("l0.k.w", "l0.k.b"), proj("l0.q.w", "l0.q.b"), proj("l0.v.w", "l0.v.b"));
    let rel = &g.relations[0];
    for t in 0..10 {
        let srcs: Vec<usize> = (0..rel.dst.len()).filter(|&e| rel.dst[e] == t).map(|e| rel.src[e]).collect();
        for h in 0..heads {
            let cols = h * d..(h + 1) * d;
            let scores: Vec<f64> = srcs
                .iter()
                .map(|&s| cols.clone().map(|c| k[s][c] * q[t][c]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for c in cols.clone() {
                let want: f64 = srcs.iter().zip(&scores).map(|(&s, sc)| (sc - max).exp() / z * v[s][c]).sum();
                assert!((got[(t, c)] - want).abs() < 1e-12, "node {t} col {c}: {} vs {want}", got[(t, c)]);
            }
        }
    }
}

#[test]
fn attention_sums_to_one_per_destination() {
    for kind in ModelKind::ALL {
        let rels = ["R-S-R"];
        let g = random_graph(50, 5, &rels, 6);
        let cfg = GnnConfig { hidden: 8, heads: 4, ..small_config(kind, 5, &rels) };
        let model = GnnModel::new(cfg).unwrap();
        let mut tape = Tape::new();
        let f = model.forward(&mut tape, &g, &mut Dropout::off()).unwrap();
        for layer in &f.attention {
            let alpha = tape.value(layer[0]);
            let dst = &g.relations[0].dst;
            let mut sums = Matrix::zeros(50, 4);
            for e in 0..dst.len() {
                for h in 0..4 {
                    sums[(dst[e], h)] += alpha[(e, h)];
                }
            }
            assert!(sums.as_slice().iter().all(|s| (s - 1.0).abs() < 1e-6), "{kind}");
        }
    }
}

#[test]
fn han_single_metapath_semantics() {
    let rels = ["R-S-R"];
    // node 0 has only its self-loop
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Matrix::from_vec(5, 3, (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let mut pairs: Vec<(usize, usize)> = (0..5).map(|v| (v, v)).collect();
    pairs.extend([(1, 2), (2, 1), (3, 4), (4, 3), (2, 3), (3, 2)]);
    let g = GraphInput::new(x.clone(), vec![0, 1, 0, 1, 1], vec![("R-S-R".into(), pairs)]);
    let model = GnnModel::new(small_config(ModelKind::Han, 3, &rels)).unwrap();
    let mut tape = Tape::new();
    let f = model.forward(&mut tape, &g, &mut Dropout::off()).unwrap();
    assert_eq!(tape.value(f.semantic.unwrap()).as_slice(), &[1.0]);
    // aggregated row 0 is the node's own projection
    let w = &model.store.get("R-S-R.proj").unwrap().value;
    let own = Matrix::from_rows(&[x.row(0).to_vec()]).unwrap().matmul(w).unwrap();
    let agg = tape.value(f.aggregated[0]);
    for c in 0..own.cols() {
        assert!((agg[(0, c)] - own[(0, c)]).abs() < 1e-12);
    }
}

fn permuted(g: &GraphInput, perm: &[usize]) -> GraphInput {
    // node i of the new graph is node perm[i] of the old one
    let n = perm.len();
    let mut inv = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let x = g.x.select_rows(perm);
    let labels = perm.iter().map(|&p| g.labels[p]).collect();
    let rels = g
        .relations
        .iter()
        .map(|r| (r.name.clone(), r.src.iter().zip(r.dst.iter()).map(|(&s, &d)| (inv[s], inv[d])).collect()))
        .collect();
    GraphInput::new(x, labels, rels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn logits_are_permutation_equivariant(seed in 0u64..10_000, han in any::<bool>()) {
        let kind = if han { ModelKind::Han } else { ModelKind::Hgt };
        let rels = ["R-S-R"];
        let g = random_graph(12, 3, &rels, seed);
        let model = GnnModel::new(GnnConfig { seed, ..small_config(kind, 3, &rels) }).unwrap();
        let mut perm: Vec<usize> = (0..12).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
        let base = model.logits(&g).unwrap();
        let moved = model.logits(&permuted(&g, &perm)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for c in 0..2 {
                prop_assert!((moved[(i, c)] - base[(p, c)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn isolated_node_ignores_the_rest_of_the_graph() {
    for kind in ModelKind::ALL {
        let rels = ["R-S-R"];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let build = |rng: &mut ChaCha8Rng| {
            let x = Matrix::from_vec(8, 3, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let mut pairs = random_pairs(8, 0.5, rng);
            pairs.retain(|&(s, d)| (s == 0) == (d == 0));
            (x, pairs)
        };
        let (x1, p1) = build(&mut rng);
        let (mut x2, p2) = build(&mut rng);
        x2.row_mut(0).copy_from_slice(x1.row(0));
        let model = GnnModel::new(small_config(kind, 3, &rels)).unwrap();
        let a = model.logits(&GraphInput::new(x1, vec![0; 8], vec![("R-S-R".into(), p1)])).unwrap();
        let b = model.logits(&GraphInput::new(x2, vec![1; 8], vec![("R-S-R".into(), p2)])).unwrap();
        assert_eq!(a.row(0), b.row(0), "{kind}");
    }
}

#[test]
fn same_seed_gives_identical_logits() {
    for kind in ModelKind::ALL {
        let rels = ["R-S-R"];
        let g = random_graph(20, 4, &rels, 10);
        let a = GnnModel::new(small_config(kind, 4, &rels)).unwrap();
        let b = GnnModel::new(small_config(kind, 4, &rels)).unwrap();
        assert_eq!(a.logits(&g).unwrap(), b.logits(&g).unwrap());
        let c = GnnModel::new(GnnConfig { seed: 99, ..small_config(kind, 4, &rels) }).unwrap();
        assert_ne!(a.logits(&g).unwrap(), c.logits(&g).unwrap());
    }
}

#[test]
fn width_mismatch_and_empty_mask_are_errors() {
    let rels = ["R-S-R"];
    let g = random_graph(6, 3, &rels, 11);
    let model = GnnModel::new(small_config(ModelKind::Hgt, 4, &rels)).unwrap();
    assert!(matches!(model.logits(&g), Err(Error::Shape(_))));
    let model = GnnModel::new(small_config(ModelKind::Hgt, 3, &rels)).unwrap();
    assert!(matches!(model.loss(&g, &Arc::new(Vec::new())), Err(Error::EmptyMask)));
    let wrong_rel = GnnModel::new(small_config(ModelKind::Han, 3, &["R-X-R"])).unwrap();
    assert!(matches!(wrong_rel.logits(&g), Err(Error::Shape(_))));
}

#[test]
fn config_validation() {
    assert!(GnnModel::new(GnnConfig { heads: 0, ..GnnConfig::new(ModelKind::Han, 3) }).is_err());
    assert!(GnnModel::new(GnnConfig { hidden: 10, heads: 4, ..GnnConfig::new(ModelKind::Hgt, 3) }).is_err());
    assert!(GnnModel::new(GnnConfig { dropout: 1.0, ..GnnConfig::new(ModelKind::Hgt, 3) }).is_err());
    assert!(GnnModel::new(GnnConfig { layers: 2, ..GnnConfig::new(ModelKind::Han, 3) }).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let rels = ["R-S-R"];
        let g = random_graph(10, 3, &rels, 12);
        let model = GnnModel::new(small_config(kind, 3, &rels)).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        checkpoint::save(&model, &path).unwrap();
        let back = checkpoint::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.logits(&g).unwrap(), model.logits(&g).unwrap());
    }
    let model = GnnModel::new(small_config(ModelKind::Han, 3, &["R-S-R"])).unwrap();
    let mut ck = checkpoint::Checkpoint::from_model(&model);
    ck.version = 99;
    assert!(matches!(ck.into_model(), Err(Error::Checkpoint(_))));
    let mut ck = checkpoint::Checkpoint::from_model(&model);
    ck.tensors[0].shape = [1, 1];
    assert!(ck.into_model().is_err());
}
