//! Heterogeneous graph attention network with one node-level attention
//! layer per metapath and semantic attention across metapaths.

use rand_chacha::ChaCha8Rng;

use crate::model::{Bound, Dropout, Forward, GnnConfig, GraphInput};
use crate::params::ParamStore;
use crate::tensor::Tape;

pub fn init(cfg: &GnnConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let (f, h, d) = (cfg.in_features, cfg.heads, cfg.hidden);
    let mut s = ParamStore::default();
    for rel in &cfg.relations {
        s.add_glorot(format!("{rel}.proj"), f, h * d, rng);
        s.add_glorot(format!("{rel}.att_src"), 1, h * d, rng);
        s.add_glorot(format!("{rel}.att_dst"), 1, h * d, rng);
    }
    s.add_glorot("semantic.w", d, d, rng);
    s.add_zeros("semantic.b", 1, d);
    s.add_glorot("semantic.q", d, 1, rng);
    s.add_glorot("head.w", d, 2, rng);
    s.add_zeros("head.b", 1, 2);
    s
}

pub fn forward(cfg: &GnnConfig, p: &Bound<'_>, tape: &mut Tape, g: &GraphInput, drop: &mut Dropout<'_>) -> Forward {
    let heads = cfg.heads;
    let n = g.n_nodes();
    let x = tape.leaf(g.x.clone());
    let x = drop.apply(tape, x);
    let mut embeddings = Vec::new();
    let mut attention = Vec::new();
    let mut aggregated = Vec::new();
    for rel in &g.relations {
        let z = tape.matmul(x, p.var(&format!("{}.proj", rel.name)));
        let s_src = tape.head_dot(z, p.var(&format!("{}.att_src", rel.name)), heads);
        let s_dst = tape.head_dot(z, p.var(&format!("{}.att_dst", rel.name)), heads);
        let e_src = tape.gather(s_src, rel.src.clone());
        let e_dst = tape.gather(s_dst, rel.dst.clone());
        let e = tape.add(e_src, e_dst);
        let e = tape.leaky_relu(e, cfg.negative_slope);
        let alpha = tape.segment_softmax(e, rel.dst.clone());
        attention.push(alpha);
        let alpha = drop.apply(tape, alpha);
        let agg = tape.edge_aggregate(z, alpha, rel.src.clone(), rel.dst.clone(), n, heads);
        aggregated.push(agg);
        let h = tape.elu(agg);
        embeddings.push(tape.head_mean(h, heads));
    }
    let (w, b, q) = (p.var("semantic.w"), p.var("semantic.b"), p.var("semantic.q"));
    let scores: Vec<_> = embeddings
        .iter()
        .map(|&z| {
            let t = tape.matmul(z, w);
            let t = tape.add_row(t, b);
            let t = tape.tanh(t);
            let m = tape.mean_rows(t);
            tape.matmul(m, q)
        })
        .collect();
    let joined = tape.concat_cols(&scores);
    let beta = tape.softmax_rows(joined);
    let mut z = None;
    for (k, &emb) in embeddings.iter().enumerate() {
        let bk = tape.select_col(beta, k);
        let term = tape.mul_scalar(emb, bk);
        z = Some(match z {
            None => term,
            Some(acc) => tape.add(acc, term),
        });
    }
    let z = drop.apply(tape, z.expect("at least one relation"));
    let logits = tape.matmul(z, p.var("head.w"));
    let logits = tape.add_row(logits, p.var("head.b"));
    Forward {
        logits,
        attention: vec![attention],
        aggregated,
        semantic: Some(beta),
        params: Vec::new(),
    }
}
