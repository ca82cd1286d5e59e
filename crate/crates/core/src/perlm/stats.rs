use serde::{Deserialize, Serialize};

use super::permute::GenerationTrace;

/// Aggregate selection statistics over generated instances.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub words: usize,
    pub selected_words: usize,
    pub selected_tokens: usize,
    pub shuffled_tokens: usize,
    /// Counts of sampled gram lengths; index 0 is unigram.
    pub gram_histogram: Vec<usize>,
}

impl CorpusStats {
    pub fn new(max_gram: usize) -> Self {
        Self {
            gram_histogram: vec![0; max_gram],
            ..Default::default()
        }
    }

    pub fn add(&mut self, trace: &GenerationTrace) {
        self.instances += 1;
        self.words += trace.words;
        self.selected_words += trace.selected_words;
        self.selected_tokens += trace.selected_tokens;
        self.shuffled_tokens += trace.shuffled_tokens;
        for &n in &trace.gram_lengths {
            if self.gram_histogram.len() < n {
                self.gram_histogram.resize(n, 0);
            }
            self.gram_histogram[n - 1] += 1;
        }
    }

    pub fn selected_word_fraction(&self) -> f64 {
        ratio(self.selected_words, self.words)
    }

    pub fn shuffled_fraction(&self) -> f64 {
        ratio(self.shuffled_tokens, self.selected_tokens)
    }

    pub fn kept_fraction(&self) -> f64 {
        ratio(self.selected_tokens - self.shuffled_tokens, self.selected_tokens)
    }

    pub fn gram_distribution(&self) -> Vec<f64> {
        let total: usize = self.gram_histogram.iter().sum();
        self.gram_histogram.iter().map(|&c| ratio(c, total)).collect()
    }

    pub fn summary(&self) -> StatsSummary {
        StatsSummary {
            counts: self.clone(),
            selected_word_fraction: self.selected_word_fraction(),
            shuffled_fraction: self.shuffled_fraction(),
            kept_fraction: self.kept_fraction(),
            gram_distribution: self.gram_distribution(),
        }
    }
}

/// The statistics record written next to an instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub counts: CorpusStats,
    pub selected_word_fraction: f64,
    pub shuffled_fraction: f64,
    pub kept_fraction: f64,
    pub gram_distribution: Vec<f64>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}
