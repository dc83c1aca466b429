use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::dump::AttentionDump;
use super::emd::emd_unchecked;
use super::hungarian::{hungarian, CostMatrix};
use super::AttentionError;

/// Spacing between adjacent token positions in the EMD ground metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundMetric {
    /// Adjacent positions are 1 apart.
    #[default]
    Unit,
    /// Positions are divided by the sequence length.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// `per_token[layer][token]`: minimal matched EMD total.
    pub per_token: Vec<Vec<f64>>,
    pub layer_means: Vec<f64>,
    /// Mean over every (layer, token) pair.
    pub grand_mean: f64,
}

fn check_compatible(a: &AttentionDump, b: &AttentionDump) -> Result<(), AttentionError> {
    let mut problems = Vec::new();
    if a.heads != b.heads {
        problems.push(format!("heads {} vs {}", a.heads, b.heads));
    }
    if a.tokens != b.tokens {
        problems.push("token sequences differ".to_string());
    }
    if a.s_count() != b.s_count() {
        problems.push(format!("self-attention sublayers {} vs {}", a.s_count(), b.s_count()));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(AttentionError::Incompatible(format!("{} / {}: {}", a.model_id, b.model_id, problems.join(", "))))
    }
}

/// Per-(layer, token) minimal total EMD between the two dumps' heads under
/// an optimal head matching. Layers pair by self-attention ordinal.
pub fn attention_distance(a: &AttentionDump, b: &AttentionDump, metric: GroundMetric) -> Result<DistanceReport, AttentionError> {
    check_compatible(a, b)?;
    // Evaluate in a content-determined order so that swapping the arguments
    // repeats exactly the same arithmetic.
    let (a, b) = if a.content_cmp(b) == Ordering::Greater { (b, a) } else { (a, b) };
    let scale = match metric {
        GroundMetric::Unit => 1.0,
        GroundMetric::Normalized => 1.0 / a.t as f64,
    };
    let h = a.heads;
    let mut per_token = Vec::with_capacity(a.s_count());
    for layer in 0..a.s_count() {
        let mut row = Vec::with_capacity(a.t);
        for token in 0..a.t {
            let mut costs = Vec::with_capacity(h * h);
            for i in 0..h {
                for j in 0..h {
                    costs.push(emd_unchecked(a.dist(layer, i, token), b.dist(layer, j, token)) * scale);
                }
            }
            row.push(hungarian(&CostMatrix::new(h, costs)?).total);
        }
        per_token.push(row);
    }
    let layer_means = per_token.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let count = per_token.iter().map(Vec::len).sum::<usize>();
    let grand_mean = if count == 0 {
        0.0
    } else {
        per_token.iter().flatten().sum::<f64>() / count as f64
    };
    Ok(DistanceReport {
        per_token,
        layer_means,
        grand_mean,
    })
}

/// Pairwise grand means. Symmetric with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn distance_matrix(dumps: &[AttentionDump], metric: GroundMetric) -> Result<DistanceTable, AttentionError> {
    if dumps.len() < 2 {
        return Err(AttentionError::Incompatible(format!("need at least 2 dumps, got {}", dumps.len())));
    }
    let n = dumps.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = attention_distance(&dumps[i], &dumps[j], metric)?.grand_mean;
            values[i][j] = d;
            values[j][i] = d;
        }
    }
    Ok(DistanceTable {
        ids: dumps.iter().map(|d| d.model_id.clone()).collect(),
        values,
    })
}

/// Mean distance over unordered pairs of distinct models, grouped by the
/// (sorted) pair of group labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedMeans {
    /// `(group_a, group_b, mean, pairs)` with `group_a <= group_b`.
    pub blocks: Vec<(String, String, f64, usize)>,
    pub same_group_mean: Option<f64>,
    pub cross_group_mean: Option<f64>,
}

pub fn grouped_means(table: &DistanceTable, groups: &[String]) -> Result<GroupedMeans, AttentionError> {
    let n = table.ids.len();
    if groups.len() != n {
        return Err(AttentionError::Incompatible(format!("{} group labels for {n} models", groups.len())));
    }
    let mut blocks: Vec<(String, String, f64, usize)> = Vec::new();
    let (mut same, mut cross) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..n {
        for j in i + 1..n {
            let (ga, gb) = if groups[i] <= groups[j] { (&groups[i], &groups[j]) } else { (&groups[j], &groups[i]) };
            let v = table.values[i][j];
            match blocks.iter_mut().find(|b| &b.0 == ga && &b.1 == gb) {
                Some(b) => {
                    b.2 += v;
                    b.3 += 1;
                }
                None => blocks.push((ga.clone(), gb.clone(), v, 1)),
            }
            let acc = if ga == gb { &mut same } else { &mut cross };
            acc.0 += v;
            acc.1 += 1;
        }
    }
    for b in &mut blocks {
        b.2 /= b.3 as f64;
    }
    blocks.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
    let mean = |(s, c): (f64, usize)| (c > 0).then(|| s / c as f64);
    Ok(GroupedMeans {
        blocks,
        same_group_mean: mean(same),
        cross_group_mean: mean(cross),
    })
}

impl DistanceTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| |");
        for id in &self.ids {
            out += &format!(" {id} |");
        }
        out += "\n|---|";
        out += &"---:|".repeat(self.ids.len());
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.values) {
            out += &format!("| {id} |");
            for v in row {
                out += &format!(" {v:.6} |");
            }
            out.push('\n');
        }
        out
    }
}
