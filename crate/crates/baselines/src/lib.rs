//! Nine classical classifiers for binary pass/fail prediction.
//!
//! Every family is fitted through [`fit`] from a [`ClassifierSpec`] and
//! queried through [`FittedClassifier::predict`]. Hyperparameters are a flat
//! name→value map validated per family; anything not set takes the family
//! default listed in [`ModelName::defaults`].

mod bayes;
mod discriminant;
mod error;
mod knn;
mod svc;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use studentgraph_core::logit::{fit_logistic, LogisticFit, LogisticOptions};
use studentgraph_core::matrix::Standardizer;
use studentgraph_core::Matrix;

pub use bayes::GaussianNb;
pub use discriminant::{Lda, Qda};
pub use error::{Error, Result};
pub use knn::Knn;
pub use svc::{Svc, SvcOptions};
pub use tree::{DecisionTree, Forest, TreeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelName {
    LogisticRegression,
    #[serde(rename = "LDA")]
    Lda,
    RandomForest,
    #[serde(rename = "KNN")]
    Knn,
    GaussianNB,
    #[serde(rename = "QDA")]
    Qda,
    Bagging,
    #[serde(rename = "SVC")]
    Svc,
    DecisionTree,
}

impl ModelName {
    pub const ALL: [ModelName; 9] = [
        ModelName::LogisticRegression,
        ModelName::Lda,
        ModelName::RandomForest,
        ModelName::Knn,
        ModelName::GaussianNB,
        ModelName::Qda,
        ModelName::Bagging,
        ModelName::Svc,
        ModelName::DecisionTree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::LogisticRegression => "LogisticRegression",
            ModelName::Lda => "LDA",
            ModelName::RandomForest => "RandomForest",
            ModelName::Knn => "KNN",
            ModelName::GaussianNB => "GaussianNB",
            ModelName::Qda => "QDA",
            ModelName::Bagging => "Bagging",
            ModelName::Svc => "SVC",
            ModelName::DecisionTree => "DecisionTree",
        }
    }

    /// Short label used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            ModelName::LogisticRegression => "LR",
            ModelName::Lda => "LDA",
            ModelName::RandomForest => "RF",
            ModelName::Knn => "KNN",
            ModelName::GaussianNB => "GNB",
            ModelName::Qda => "QDA",
            ModelName::Bagging => "Bagging",
            ModelName::Svc => "SVC",
            ModelName::DecisionTree => "DT",
        }
    }

    /// Accepted hyperparameters and their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            ModelName::LogisticRegression => &[("C", 1.0), ("max_iter", 1000.0)],
            ModelName::Lda => &[("ridge", 1e-6)],
            ModelName::Qda => &[("ridge", 1e-6)],
            // max_depth 0 means unbounded
            ModelName::RandomForest => &[("n_estimators", 100.0), ("max_depth", 0.0), ("min_samples_split", 2.0)],
            ModelName::Bagging => &[("n_estimators", 10.0), ("max_depth", 0.0), ("min_samples_split", 2.0)],
            ModelName::DecisionTree => &[("max_depth", 0.0), ("min_samples_split", 2.0)],
            ModelName::Knn => &[("k", 5.0)],
            ModelName::GaussianNB => &[("var_smoothing", 1e-9)],
            // gamma 0 means 1 / (n_features · variance)
            ModelName::Svc => &[("C", 1.0), ("gamma", 0.0), ("tol", 1e-3)],
        }
    }

    /// Families that see standardized inputs.
    pub fn wants_scaling(self) -> bool {
        matches!(self, ModelName::Knn | ModelName::Svc)
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str().to_ascii_lowercase() == lower || m.short().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub name: ModelName,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
}

impl ClassifierSpec {
    pub fn new(name: ModelName) -> Self {
        Self { name, hyperparameters: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }

    /// Rejects unknown keys and out-of-range values.
    pub fn validate(&self) -> Result<()> {
        let known = self.name.defaults();
        for (key, &value) in &self.hyperparameters {
            if !known.iter().any(|(k, _)| k == key) {
                return Err(Error::Hyperparameter(format!("{} has no hyperparameter {key:?}", self.name)));
            }
            if !value.is_finite() {
                return Err(Error::Hyperparameter(format!("{key} must be finite")));
            }
            let ok = match key.as_str() {
                "C" | "var_smoothing" | "tol" => value > 0.0,
                "ridge" | "gamma" | "max_depth" => value >= 0.0,
                "k" | "n_estimators" | "max_iter" => value >= 1.0 && value.fract() == 0.0,
                "min_samples_split" => value >= 2.0 && value.fract() == 0.0,
                _ => true,
            };
            if !ok {
                return Err(Error::Hyperparameter(format!("{} {key} = {value} out of range", self.name)));
            }
        }
        if matches!(self.name, ModelName::RandomForest | ModelName::Bagging | ModelName::DecisionTree) {
            let depth = self.get("max_depth");
            if depth.fract() != 0.0 {
                return Err(Error::Hyperparameter(format!("max_depth must be integral, got {depth}")));
            }
        }
        Ok(())
    }

    /// Value for `key`, falling back to the family default.
    pub fn get(&self, key: &str) -> f64 {
        self.hyperparameters.get(key).copied().unwrap_or_else(|| {
            self.name
                .defaults()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN)
        })
    }

    fn get_usize(&self, key: &str) -> usize {
        self.get(key) as usize
    }

    fn tree_options(&self) -> TreeOptions {
        let depth = self.get_usize("max_depth");
        TreeOptions {
            max_depth: if depth == 0 { None } else { Some(depth) },
            min_samples_split: self.get_usize("min_samples_split"),
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Model {
    Logistic(LogisticFit),
    Lda(Lda),
    Qda(Qda),
    GaussianNb(GaussianNb),
    Knn(Knn),
    Svc(Svc),
    Tree(DecisionTree),
    Forest(Forest),
}

/// Labels in {0, 1} plus class-1 scores for families that produce them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub labels: Vec<u8>,
    pub scores: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedClassifier {
    pub spec: ClassifierSpec,
    pub model: Model,
    pub scaler: Option<Standardizer>,
    pub n_features: usize,
    pub fit_seconds: f64,
    pub seed: u64,
    /// Set when a training set had a single class; every prediction is this label.
    pub constant: Option<u8>,
}

pub fn fit(spec: &ClassifierSpec, x: &Matrix, y: &[u8], seed: u64) -> Result<FittedClassifier> {
    spec.validate()?;
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if n != y.len() {
        return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::Label(*bad));
    }
    let started = Instant::now();
    let ones = y.iter().filter(|&&v| v == 1).count();
    let constant = if ones == 0 {
        Some(0)
    } else if ones == n {
        Some(1)
    } else {
        None
    };
    let scaler = spec.name.wants_scaling().then(|| Standardizer::fit(x));
    let scaled;
    let xs = match &scaler {
        Some(s) => {
            scaled = s.transform(x);
            &scaled
        }
        None => x,
    };
    let model = if let Some(label) = constant {
        log::warn!("{}: single-class training set, predicting {label} everywhere", spec.name);
        Model::Tree(DecisionTree::leaf(label as f64))
    } else {
        fit_model(spec, xs, y, seed)?
    };
    Ok(FittedClassifier {
        spec: spec.clone(),
        model,
        scaler,
        n_features: d,
        fit_seconds: started.elapsed().as_secs_f64(),
        seed,
        constant,
    })
}

fn fit_model(spec: &ClassifierSpec, x: &Matrix, y: &[u8], seed: u64) -> Result<Model> {
    Ok(match spec.name {
        ModelName::LogisticRegression => {
            let opts = LogisticOptions {
                c: spec.get("C"),
                max_iter: spec.get_usize("max_iter"),
                ..LogisticOptions::default()
            };
            let fit = fit_logistic(x, y, opts)?;
            if !fit.converged {
                log::warn!("logistic regression stopped after {} iterations", fit.iterations);
            }
            Model::Logistic(fit)
        }
        ModelName::Lda => Model::Lda(Lda::fit(x, y, spec.get("ridge"))?),
        ModelName::Qda => Model::Qda(Qda::fit(x, y, spec.get("ridge"))?),
        ModelName::GaussianNB => Model::GaussianNb(GaussianNb::fit(x, y, spec.get("var_smoothing"))),
        ModelName::Knn => Model::Knn(Knn::fit(x, y, spec.get_usize("k"))),
        ModelName::Svc => {
            let gamma = spec.get("gamma");
            let opts = SvcOptions {
                c: spec.get("C"),
                gamma: if gamma > 0.0 { Some(gamma) } else { None },
                tol: spec.get("tol"),
                ..SvcOptions::default()
            };
            Model::Svc(Svc::fit(x, y, &opts)?)
        }
        ModelName::DecisionTree => Model::Tree(DecisionTree::fit(x, y, &spec.tree_options(), seed)),
        ModelName::RandomForest => {
            let mut opts = spec.tree_options();
            opts.max_features = Some(((x.cols() as f64).sqrt() as usize).max(1));
            Model::Forest(Forest::fit(x, y, spec.get_usize("n_estimators"), &opts, seed))
        }
        ModelName::Bagging => {
            Model::Forest(Forest::fit(x, y, spec.get_usize("n_estimators"), &spec.tree_options(), seed))
        }
    })
}

impl FittedClassifier {
    pub fn predict(&self, x: &Matrix) -> Result<Prediction> {
        if x.rows() == 0 {
            return Ok(Prediction { labels: Vec::new(), scores: None });
        }
        if x.cols() != self.n_features {
            return Err(Error::Shape(format!(
                "model trained on {} columns, got {}",
                self.n_features,
                x.cols()
            )));
        }
        if let Some(label) = self.constant {
            return Ok(Prediction { labels: vec![label; x.rows()], scores: Some(vec![label as f64; x.rows()]) });
        }
        let scaled;
        let xs = match &self.scaler {
            Some(s) => {
                scaled = s.transform(x);
                &scaled
            }
            None => x,
        };
        let scores = match &self.model {
            Model::Logistic(m) => xs.iter_rows().map(|r| m.probability(r)).collect(),
            Model::Lda(m) => m.predict_proba(xs),
            Model::Qda(m) => m.predict_proba(xs),
            Model::GaussianNb(m) => m.predict_proba(xs),
            Model::Knn(m) => m.predict_proba(xs),
            Model::Tree(m) => m.predict_proba(xs),
            Model::Forest(m) => m.predict_proba(xs),
            Model::Svc(m) => {
                let labels = m.decision_function(xs).into_iter().map(|f| u8::from(f > 0.0)).collect();
                return Ok(Prediction { labels, scores: None });
            }
        };
        let scores: Vec<f64> = scores;
        let labels = scores.iter().map(|&p| u8::from(p > 0.5)).collect();
        Ok(Prediction { labels, scores: Some(scores) })
    }

    pub fn name(&self) -> ModelName {
        self.spec.name
    }
}
