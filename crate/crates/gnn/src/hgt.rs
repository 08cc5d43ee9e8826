//! Heterogeneous graph transformer: type-specific key/query/value
//! projections, per-relation attention and message matrices (one D×D block
//! per head), a learnable per-head relation prior, and a residual output
//! transform per layer.

use rand_chacha::ChaCha8Rng;
use studentgraph_core::Matrix;

use crate::model::{Bound, Dropout, Forward, GnnConfig, GraphInput};
use crate::params::ParamStore;
use crate::tensor::{Tape, Var};

pub fn init(cfg: &GnnConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let (f, hid, heads) = (cfg.in_features, cfg.hidden, cfg.heads);
    let d = hid / heads;
    let mut s = ParamStore::default();
    s.add_glorot("input.w", f, hid, rng);
    s.add_zeros("input.b", 1, hid);
    for l in 0..cfg.layers {
        for t in ["k", "q", "v"] {
            s.add_glorot(format!("l{l}.{t}.w"), hid, hid, rng);
            s.add_zeros(format!("l{l}.{t}.b"), 1, hid);
        }
        for rel in &cfg.relations {
            s.add_glorot(format!("l{l}.{rel}.att"), heads * d, d, rng);
            s.add_glorot(format!("l{l}.{rel}.msg"), heads * d, d, rng);
            s.add(format!("l{l}.{rel}.prior"), Matrix::filled(1, heads, 1.0));
        }
        s.add_glorot(format!("l{l}.out.w"), hid, hid, rng);
        s.add_zeros(format!("l{l}.out.b"), 1, hid);
    }
    s.add_glorot("head.w", hid, 2, rng);
    s.add_zeros("head.b", 1, 2);
    s
}

fn linear(tape: &mut Tape, p: &Bound<'_>, x: Var, prefix: &str) -> Var {
    let y = tape.matmul(x, p.var(&format!("{prefix}.w")));
    tape.add_row(y, p.var(&format!("{prefix}.b")))
}

pub fn forward(cfg: &GnnConfig, p: &Bound<'_>, tape: &mut Tape, g: &GraphInput, drop: &mut Dropout<'_>) -> Forward {
    let heads = cfg.heads;
    let d = cfg.hidden / heads;
    let n = g.n_nodes();
    let x = tape.leaf(g.x.clone());
    let x = drop.apply(tape, x);
    let h0 = linear(tape, p, x, "input");
    let mut h = tape.elu(h0);
    let mut attention = Vec::new();
    let mut aggregated = Vec::new();
    for l in 0..cfg.layers {
        let k = linear(tape, p, h, &format!("l{l}.k"));
        let q = linear(tape, p, h, &format!("l{l}.q"));
        let v = linear(tape, p, h, &format!("l{l}.v"));
        let mut layer_attention = Vec::new();
        let mut total: Option<Var> = None;
        for rel in &g.relations {
            let kr = tape.head_matmul(k, p.var(&format!("l{l}.{}.att", rel.name)), heads);
            let vr = tape.head_matmul(v, p.var(&format!("l{l}.{}.msg", rel.name)), heads);
            let score = tape.edge_head_dot(kr, q, rel.src.clone(), rel.dst.clone(), heads);
            let score = tape.mul_row(score, p.var(&format!("l{l}.{}.prior", rel.name)));
            let score = tape.scale(score, 1.0 / (d as f64).sqrt());
            let alpha = tape.segment_softmax(score, rel.dst.clone());
            layer_attention.push(alpha);
            let alpha = drop.apply(tape, alpha);
            let agg = tape.edge_aggregate(vr, alpha, rel.src.clone(), rel.dst.clone(), n, heads);
            total = Some(match total {
                None => agg,
                Some(t) => tape.add(t, agg),
            });
        }
        let agg = total.expect("at least one relation");
        aggregated.push(agg);
        attention.push(layer_attention);
        let act = tape.elu(agg);
        let out = linear(tape, p, act, &format!("l{l}.out"));
        let out = drop.apply(tape, out);
        h = tape.add(out, h);
    }
    let logits = linear(tape, p, h, "head");
    Forward { logits, attention, aggregated, semantic: None, params: Vec::new() }
}
