#![allow(dead_code)]

use std::path::{Path, PathBuf};

use incivility::corpus::{save_tweets, write_labels, Label, LabeledTweet, Tweet};
use incivility_cli::PipelineConfig;
use tempfile::TempDir;

pub const LEXICON: &str = "idiot\t2\nmoron\t2\nstupid\t1\ndumb\t1\nhate\t1\n";

pub fn tweet(id: &str, author: &str, text: &str) -> Tweet {
    Tweet::new(id, author, text, "2017-08-01T14:30:00Z").expect("valid tweet")
}

pub fn tweet_at(id: &str, author: &str, text: &str, at: &str) -> Tweet {
    Tweet::new(id, author, text, at).expect("valid tweet")
}

/// A scratch directory holding inputs and the output directory of a run.
pub struct Fixture {
    pub dir: TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().expect("temp dir"),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, contents).expect("write fixture");
        p
    }

    pub fn tweets(&self, name: &str, tweets: &[Tweet]) -> PathBuf {
        let p = self.path(name);
        save_tweets(&p, tweets).expect("write tweets");
        p
    }

    pub fn labels(&self, name: &str, labels: &[(String, Label)]) -> PathBuf {
        let p = self.path(name);
        let rows: Vec<LabeledTweet> = labels
            .iter()
            .map(|(id, l)| LabeledTweet {
                tweet_id: id.clone(),
                label: *l,
                extra: Default::default(),
            })
            .collect();
        write_labels(&p, &rows).expect("write labels");
        p
    }

    /// Default config writing to `<dir>/<out>`.
    pub fn config(&self, out: &str) -> PipelineConfig {
        PipelineConfig::default().with_out_dir(self.path(out))
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Rows of a CSV file as string records, header excluded.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).expect("csv");
    r.records()
        .map(|rec| rec.expect("record").iter().map(str::to_string).collect())
        .collect()
}

/// Labeled tweets of the planted-token task, authored by rotating users.
pub fn planted_tweets(n: usize, seed: u64) -> (Vec<Tweet>, Vec<(String, Label)>) {
    let corpus = incivility::synth::planted_corpus(n, seed);
    let tweets = corpus
        .iter()
        .enumerate()
        .map(|(i, (text, _))| tweet(&format!("t{i}"), &format!("u{}", i % 7), text))
        .collect();
    let labels = corpus
        .iter()
        .enumerate()
        .map(|(i, (_, l))| (format!("t{i}"), *l))
        .collect();
    (tweets, labels)
}
