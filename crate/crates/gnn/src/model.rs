use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use studentgraph_core::{HeteroGraph, Matrix};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Index, Tape, Var};
use crate::{han, hgt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "HAN")]
    Han,
    #[serde(rename = "HGT")]
    Hgt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Han, ModelKind::Hgt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Han => "HAN",
            ModelKind::Hgt => "HGT",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HAN" => Ok(ModelKind::Han),
            "HGT" => Ok(ModelKind::Hgt),
            _ => Err(Error::Config(format!("unknown graph model {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub kind: ModelKind,
    pub in_features: usize,
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Attention layers (HAN always uses one).
    pub layers: usize,
    pub relations: Vec<String>,
    pub negative_slope: f64,
    pub seed: u64,
}

impl GnnConfig {
    pub fn new(kind: ModelKind, in_features: usize) -> Self {
        Self {
            kind,
            in_features,
            hidden: 64,
            heads: 8,
            dropout: 0.0,
            layers: match kind {
                ModelKind::Han => 1,
                ModelKind::Hgt => 2,
            },
            relations: vec![studentgraph_core::graph::RSR.to_string()],
            negative_slope: 0.2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.hidden == 0 || self.in_features == 0 || self.layers == 0 {
            return Err(Error::Config("heads, hidden, in_features and layers must be positive".into()));
        }
        if self.kind == ModelKind::Hgt && !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("HGT hidden {} not divisible by {} heads", self.hidden, self.heads)));
        }
        if self.kind == ModelKind::Han && self.layers != 1 {
            return Err(Error::Config("HAN uses a single attention layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.relations.is_empty() {
            return Err(Error::Config("at least one relation is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RelationInput {
    pub name: String,
    pub src: Index,
    /// Sorted destinations, one per edge.
    pub dst: Index,
}

/// Graph tensors in the layout the models consume.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub x: Matrix,
    pub labels: Arc<Vec<u8>>,
    pub relations: Vec<RelationInput>,
}

impl GraphInput {
    pub fn new(x: Matrix, labels: Vec<u8>, relations: Vec<(String, Vec<(usize, usize)>)>) -> Self {
        let n = x.rows();
        let relations = relations
            .into_iter()
            .map(|(name, pairs)| {
                let idx = studentgraph_core::EdgeIndex::new(n, pairs);
                RelationInput { name, src: Arc::new(idx.src), dst: Arc::new(idx.dst) }
            })
            .collect();
        Self { x, labels: Arc::new(labels), relations }
    }

    pub fn from_graph(g: &HeteroGraph) -> Self {
        Self {
            x: g.features.clone(),
            labels: Arc::new(g.labels.clone()),
            relations: g
                .relations
                .iter()
                .map(|r| RelationInput {
                    name: r.name.clone(),
                    src: Arc::new(r.edges.src.clone()),
                    dst: Arc::new(r.edges.dst.clone()),
                })
                .collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn all_rows(&self) -> Index {
        Arc::new((0..self.n_nodes()).collect())
    }
}

/// Dropout masks drawn from a seeded generator; `None` disables dropout.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'_> {
    pub fn off() -> Dropout<'static> {
        Dropout { p: 0.0, rng: None }
    }

    pub fn apply(&mut self, tape: &mut Tape, v: Var) -> Var {
        let Some(rng) = self.rng.as_deref_mut() else { return v };
        if self.p <= 0.0 {
            return v;
        }
        let keep = 1.0 - self.p;
        let len = tape.value(v).as_slice().len();
        let mask = (0..len).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        tape.mask(v, Arc::new(mask))
    }
}

/// Parameter vars addressed by name.
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: &'a [Var],
}

impl<'a> Bound<'a> {
    pub fn new(store: &'a ParamStore, vars: &'a [Var]) -> Self {
        Self { store, vars }
    }

    pub fn var(&self, name: &str) -> Var {
        let k = self.store.params.iter().position(|p| p.name == name);
        self.vars[k.unwrap_or_else(|| panic!("missing parameter {name}"))]
    }
}

/// Forward-pass outputs, including intermediates used by tests and reports.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// Per layer, per relation: edge attention (edges × heads).
    pub attention: Vec<Vec<Var>>,
    /// Per layer: summed neighbour messages before the output transform.
    pub aggregated: Vec<Var>,
    /// Semantic weights over relations (HAN only), 1 × relations.
    pub semantic: Option<Var>,
    pub params: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub store: ParamStore,
}

impl GnnModel {
    pub fn new(config: GnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let store = match config.kind {
            ModelKind::Han => han::init(&config, &mut rng),
            ModelKind::Hgt => hgt::init(&config, &mut rng),
        };
        Ok(Self { config, store })
    }

    fn check_input(&self, g: &GraphInput) -> Result<()> {
        if g.x.cols() != self.config.in_features {
            return Err(Error::Shape(format!(
                "model expects {} features, graph has {}",
                self.config.in_features,
                g.x.cols()
            )));
        }
        let names: Vec<&str> = g.relations.iter().map(|r| r.name.as_str()).collect();
        if names != self.config.relations.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Shape(format!("relations {names:?} differ from {:?}", self.config.relations)));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, g: &GraphInput, dropout: &mut Dropout<'_>) -> Result<Forward> {
        self.check_input(g)?;
        let params = self.store.load(tape);
        let f = match self.config.kind {
            ModelKind::Han => han::forward(&self.config, &Bound::new(&self.store, &params), tape, g, dropout),
            ModelKind::Hgt => hgt::forward(&self.config, &Bound::new(&self.store, &params), tape, g, dropout),
        };
        Ok(Forward { params, ..f })
    }

    pub fn logits(&self, g: &GraphInput) -> Result<Matrix> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, g, &mut Dropout::off())?;
        Ok(tape.value(f.logits).clone())
    }

    pub fn predict(&self, g: &GraphInput) -> Result<Vec<u8>> {
        Ok(self.logits(g)?.iter_rows().map(|r| u8::from(r[1] > r[0])).collect())
    }

    /// Mean cross-entropy over `rows` and its gradient for every parameter.
    pub fn loss_and_grad(&self, g: &GraphInput, rows: &Index, dropout: &mut Dropout<'_>) -> Result<(f64, Vec<Matrix>)> {
        if rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, g, dropout)?;
        let loss = tape.cross_entropy(f.logits, g.labels.clone(), rows.clone());
        let value = tape.value(loss)[(0, 0)];
        let grads = tape.backward(loss);
        Ok((value, self.store.gradients(&f.params, &grads)))
    }

    pub fn loss(&self, g: &GraphInput, rows: &Index) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, g, &mut Dropout::off())?;
        let loss = tape.cross_entropy(f.logits, g.labels.clone(), rows.clone());
        Ok(tape.value(loss)[(0, 0)])
    }
}
