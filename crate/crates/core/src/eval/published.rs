// SPDX-License-Identifier: MIT OR Apache-2.0

//! Published per-model averages over five datasets, kept as static
//! comparison columns. These come from full-size language-model activations
//! and are not expected to be reproduced by synthetic runs.

/// Column order of the published tables.
pub const LOSSES: [&str; 8] = ["ccs", "md_ccs", "md_acc", "ma", "smr", "pca", "random", "supervised"];

pub const MODELS: [&str; 5] = ["uqa_encoder", "uqa_decoder", "deberta", "gpt_neo", "Average"];

/// Test accuracy, rows in [`MODELS`] order, columns in [`LOSSES`] order.
pub const ACCURACY: [[f64; 8]; 5] = [
    [0.6863, 0.6902, 0.7414, 0.7399, 0.7419, 0.7383, 0.6363, 0.8839],
    [0.8305, 0.8200, 0.8180, 0.7550, 0.7460, 0.7525, 0.6286, 0.9140],
    [0.7740, 0.7855, 0.8735, 0.8650, 0.8585, 0.8605, 0.7288, 0.9135],
    [0.5510, 0.5755, 0.5898, 0.5820, 0.5555, 0.5737, 0.5603, 0.7580],
    [0.7105, 0.7178, 0.7557, 0.7355, 0.7255, 0.7313, 0.6385, 0.8674],
];

/// Mean absolute cosine to a 20-member CCS ensemble, same layout.
pub const COSINE_TO_CCS: [[f64; 8]; 5] = [
    [0.8359, 0.7034, 0.2995, 0.1448, 0.1991, 0.2406, 0.0222, 0.2583],
    [0.8787, 0.7269, 0.5303, 0.1687, 0.2432, 0.1792, 0.0228, 0.6014],
    [0.8643, 0.6209, 0.2786, 0.2309, 0.2024, 0.0741, 0.0202, 0.4617],
    [0.5277, 0.4830, 0.4164, 0.0226, 0.0485, 0.1901, 0.0245, 0.1347],
    [0.7767, 0.6336, 0.3812, 0.1418, 0.1733, 0.1710, 0.0224, 0.3640],
];

/// Reported average self-similarity of the CCS ensemble.
pub const CCS_SELF_SIMILARITY: f64 = 0.78;

/// CCS test accuracy on BoolQ for the UnifiedQA encoder and decoder states,
/// from the per-dataset tables. Same model, very different outcomes.
pub const BOOLQ_CCS_ACCURACY: [(&str, f64); 2] = [("uqa_encoder", 0.5225), ("uqa_decoder", 0.9775)];

fn lookup(table: &[[f64; 8]; 5], model: &str, loss: &str) -> Option<f64> {
    let r = MODELS.iter().position(|m| *m == model)?;
    let c = LOSSES.iter().position(|l| *l == loss)?;
    Some(table[r][c])
}

pub fn accuracy(model: &str, loss: &str) -> Option<f64> {
    lookup(&ACCURACY, model, loss)
}

pub fn cosine_to_ccs(model: &str, loss: &str) -> Option<f64> {
    lookup(&COSINE_TO_CCS, model, loss)
}
