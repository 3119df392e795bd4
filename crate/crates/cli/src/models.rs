use std::collections::BTreeSet;

use incivility::classifier::{
    logistic_predict, logistic_train, BiLstmClassifier, CharClassifier, CharCnn, CharExample,
    CharModelConfig, FusionModel, LogisticModel, BILSTM_MODEL, CHARCNN_MODEL, FUSION_MODEL,
};
use incivility::corpus::{Label, Lexicon, Tweet};
use incivility::features::{content_features, fit_vectorizer, textual_features, VectorizerModel};
use incivility::nn::{train_loop, Checkpoint, History, ParamStore, Trainable};
use incivility::tdsa::TDSA_MODEL;
use incivility::text::{tokenize, CharVocab};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::BaselineConfig;
use crate::data::Example;
use crate::error::{CliError, Result};

pub const LOGISTIC_MODEL: &str = "logistic";
pub const NGRAM_MODEL: &str = "ngram-logistic";

/// Model families the `train` command can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    /// Target-dependent sentiment LSTM.
    Tdsa,
    Charcnn,
    Bilstm,
    /// Character CNN with the conflict-count feature.
    Fusion,
    /// Logistic regression on the five content features.
    Logistic,
    /// Logistic regression on chi-squared selected n-grams.
    NgramLogistic,
}

impl ModelKind {
    /// Stem of the output files.
    pub fn file_stem(self) -> &'static str {
        match self {
            ModelKind::Tdsa => "tdsa",
            ModelKind::Charcnn => "charcnn",
            ModelKind::Bilstm => "bilstm",
            ModelKind::Fusion => "fusion",
            ModelKind::Logistic => "logistic",
            ModelKind::NgramLogistic => "ngram-logistic",
        }
    }

    /// Model name recorded in checkpoints.
    pub fn checkpoint_name(self) -> &'static str {
        match self {
            ModelKind::Tdsa => TDSA_MODEL,
            ModelKind::Charcnn => CHARCNN_MODEL,
            ModelKind::Bilstm => BILSTM_MODEL,
            ModelKind::Fusion => FUSION_MODEL,
            ModelKind::Logistic => LOGISTIC_MODEL,
            ModelKind::NgramLogistic => NGRAM_MODEL,
        }
    }

    pub fn uses_conflicts(self) -> bool {
        self == ModelKind::Fusion
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaselineExtra {
    model: LogisticModel,
    lexicon: Lexicon,
    /// Vectorizer JSON, for the n-gram variant.
    vectorizer: Option<serde_json::Value>,
    textual: bool,
}

/// Logistic regression with its feature extractor.
#[derive(Debug, Clone)]
pub struct Baseline {
    ngram: bool,
    model: LogisticModel,
    lexicon: Lexicon,
    vectorizer: Option<VectorizerModel>,
    textual: bool,
}

impl Baseline {
    fn row(&self, tweet: &Tweet) -> Result<Vec<f64>> {
        let Some(v) = &self.vectorizer else {
            return Ok(content_features(tweet, &self.lexicon)?.values);
        };
        let mut row = v.transform(&tokenize(&tweet.text))?;
        if self.textual {
            row.extend(textual_features(tweet, &self.lexicon).values);
        }
        Ok(row)
    }

    pub fn fit(
        ngram: bool,
        train: &[&Example],
        lexicon: Lexicon,
        cfg: &BaselineConfig,
    ) -> Result<Self> {
        let y: Vec<bool> = train
            .iter()
            .map(|e| label_of(e).map(Label::is_incivil))
            .collect::<Result<_>>()?;
        let vectorizer = if ngram {
            let docs: Vec<_> = train.iter().map(|e| tokenize(&e.tweet.text)).collect();
            let sizes: BTreeSet<usize> = cfg.ngram_sizes.iter().copied().collect();
            let v = fit_vectorizer(&docs, &sizes, cfg.min_df)?;
            Some(v.select_chi2_docs(&docs, &y, cfg.chi2_k)?)
        } else {
            None
        };
        let mut b = Baseline {
            ngram,
            model: LogisticModel::zeros(0),
            lexicon,
            vectorizer,
            textual: cfg.textual,
        };
        let x: Vec<Vec<f64>> = train
            .iter()
            .map(|e| b.row(&e.tweet))
            .collect::<Result<_>>()?;
        b.model = logistic_train(&x, &y, cfg.l2, &cfg.logistic)?;
        Ok(b)
    }

    pub fn predict(&self, tweets: &[&Tweet]) -> Result<Vec<f64>> {
        tweets
            .iter()
            .map(|t| Ok(logistic_predict(&self.model, &self.row(t)?)?))
            .collect()
    }

    fn to_checkpoint(&self, seed: u64, cfg: &BaselineConfig) -> Result<Checkpoint> {
        let name = if self.ngram {
            NGRAM_MODEL
        } else {
            LOGISTIC_MODEL
        };
        let mut ck = Checkpoint::new(
            name,
            seed,
            serde_json::to_value(cfg)?,
            serde_json::Value::Null,
            ParamStore::new(),
        );
        let vectorizer = match &self.vectorizer {
            Some(v) => Some(serde_json::from_str(&v.to_json()?)?),
            None => None,
        };
        ck.extra = serde_json::to_value(BaselineExtra {
            model: self.model.clone(),
            lexicon: self.lexicon.clone(),
            vectorizer,
            textual: self.textual,
        })?;
        Ok(ck)
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let extra: BaselineExtra = serde_json::from_value(ck.extra.clone())?;
        let vectorizer = match &extra.vectorizer {
            Some(v) => Some(VectorizerModel::from_json(&v.to_string())?),
            None => None,
        };
        let ngram = ck.model == NGRAM_MODEL;
        if ngram != vectorizer.is_some() {
            return Err(incivility::Error::Checkpoint(format!(
                "{} checkpoint with mismatched vectorizer",
                ck.model
            ))
            .into());
        }
        Ok(Baseline {
            ngram,
            model: extra.model,
            lexicon: extra.lexicon,
            vectorizer,
            textual: extra.textual,
        })
    }
}

fn label_of(e: &Example) -> Result<Label> {
    e.label
        .ok_or_else(|| CliError::Config(format!("tweet {} has no label", e.tweet.id)))
}

/// Any incivility classifier that can be trained, saved and used to score tweets.
#[derive(Debug, Clone)]
pub enum Classifier {
    Cnn(CharCnn),
    BiLstm(BiLstmClassifier),
    Fusion(FusionModel),
    Baseline(Baseline, BaselineConfig),
}

fn encode_all(
    vocab: &CharVocab,
    cfg: &CharModelConfig,
    xs: &[&Example],
) -> Result<Vec<CharExample>> {
    xs.iter()
        .map(|e| {
            Ok(CharExample::encode(
                &e.tweet.text,
                vocab,
                cfg.max_len,
                e.conflict,
                e.label,
            )?)
        })
        .collect()
}

impl Classifier {
    /// Fits a character or baseline model on `train`, stopping early on `valid`.
    pub fn fit(
        kind: ModelKind,
        train: &[&Example],
        valid: &[&Example],
        char_cfg: &CharModelConfig,
        baseline: &BaselineConfig,
        lexicon: Option<Lexicon>,
        seed: u64,
    ) -> Result<(Self, Option<History>)> {
        let lexicon = || lexicon.clone().ok_or(CliError::Unconfigured("lexicon"));
        let mut char_cfg = char_cfg.clone();
        char_cfg.training.seed = seed;
        let vocab = CharVocab::fit(
            train.iter().map(|e| e.tweet.text.as_str()),
            char_cfg.min_char_count,
        );
        let tr = || encode_all(&vocab, &char_cfg, train);
        let va = || encode_all(&vocab, &char_cfg, valid);
        Ok(match kind {
            ModelKind::Charcnn => {
                let mut m = CharCnn::new(vocab.clone(), char_cfg.clone(), seed)?;
                let h = train_loop(&mut m, &tr()?, &va()?, &char_cfg.training)?;
                (Classifier::Cnn(m), Some(h))
            }
            ModelKind::Bilstm => {
                let mut m = BiLstmClassifier::new(vocab.clone(), char_cfg.clone(), seed)?;
                let h = train_loop(&mut m, &tr()?, &va()?, &char_cfg.training)?;
                (Classifier::BiLstm(m), Some(h))
            }
            ModelKind::Fusion => {
                let mut m = FusionModel::new(vocab.clone(), char_cfg.clone(), seed)?;
                let train_x = tr()?;
                m.fit_standardizer(&train_x)?;
                let h = train_loop(&mut m, &train_x, &va()?, &char_cfg.training)?;
                (Classifier::Fusion(m), Some(h))
            }
            ModelKind::Logistic | ModelKind::NgramLogistic => {
                let b = Baseline::fit(
                    kind == ModelKind::NgramLogistic,
                    train,
                    lexicon()?,
                    baseline,
                )?;
                (Classifier::Baseline(b, baseline.clone()), None)
            }
            ModelKind::Tdsa => {
                return Err(CliError::Config(
                    "the TD-LSTM is not an incivility classifier".into(),
                ));
            }
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(match ck.model.as_str() {
            CHARCNN_MODEL => Classifier::Cnn(CharCnn::from_checkpoint(ck)?),
            BILSTM_MODEL => Classifier::BiLstm(BiLstmClassifier::from_checkpoint(ck)?),
            FUSION_MODEL => Classifier::Fusion(FusionModel::from_checkpoint(ck)?),
            LOGISTIC_MODEL | NGRAM_MODEL => {
                let cfg: BaselineConfig = serde_json::from_value(ck.config.clone())?;
                Classifier::Baseline(Baseline::from_checkpoint(ck)?, cfg)
            }
            other => {
                return Err(incivility::Error::Checkpoint(format!(
                    "{other} checkpoints cannot score incivility"
                ))
                .into())
            }
        })
    }

    pub fn to_checkpoint(&self, seed: u64) -> Result<Checkpoint> {
        Ok(match self {
            Classifier::Cnn(m) => m.to_checkpoint(seed)?,
            Classifier::BiLstm(m) => m.to_checkpoint(seed)?,
            Classifier::Fusion(m) => m.to_checkpoint(seed)?,
            Classifier::Baseline(b, cfg) => b.to_checkpoint(seed, cfg)?,
        })
    }

    pub fn uses_conflicts(&self) -> bool {
        matches!(self, Classifier::Fusion(_))
    }

    /// `P(incivil)` per example.
    pub fn predict(&self, xs: &[&Example]) -> Result<Vec<f64>> {
        fn chars<M: CharClassifier>(m: &M, xs: &[&Example]) -> Result<Vec<f64>> {
            let enc = encode_all(m.vocab(), m.config(), xs)?;
            Ok(m.predict_proba(&enc)?)
        }
        match self {
            Classifier::Cnn(m) => chars(m, xs),
            Classifier::BiLstm(m) => chars(m, xs),
            Classifier::Fusion(m) => chars(m, xs),
            Classifier::Baseline(b, _) => {
                b.predict(&xs.iter().map(|e| &e.tweet).collect::<Vec<_>>())
            }
        }
    }

    /// Short description for logs and metrics.
    pub fn describe(&self) -> serde_json::Value {
        match self {
            Classifier::Cnn(m) => json!({ "vocab": m.vocab().size(), "tensors": m.params().len() }),
            Classifier::BiLstm(m) => {
                json!({ "vocab": m.vocab().size(), "tensors": m.params().len() })
            }
            Classifier::Fusion(m) => {
                json!({ "vocab": m.vocab().size(), "tensors": m.params().len() })
            }
            Classifier::Baseline(b, _) => json!({ "features": b.model.weights.len() }),
        }
    }
}
