//! Splitting a dataset across clients.
//!
//! Every mode produces an exact cover: each sample goes to exactly one
//! client and no client is empty. Within a client, samples keep their
//! original relative order.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnerError, Result};
use crate::dp::{Purpose, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionMode {
    /// Uniform shuffle, then near-equal contiguous split.
    Iid,
    /// Sort by label, cut into `n_clients · shards_per_client` shards and
    /// deal them out at random.
    LabelShard { shards_per_client: usize },
    /// Per-class client proportions drawn from `Dirichlet(alpha)`.
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub seed: u64,
}

fn equal_chunks(indices: &[usize], n: usize) -> Vec<Vec<usize>> {
    let base = indices.len() / n;
    let extra = indices.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for c in 0..n {
        let len = base + usize::from(c < extra);
        out.push(indices[start..start + len].to_vec());
        start += len;
    }
    out
}

pub fn partition(data: &Dataset, n_clients: usize, spec: &PartitionSpec) -> Result<Vec<Dataset>> {
    if n_clients == 0 {
        return Err(LearnerError::InvalidArgument("need at least one client".into()));
    }
    if n_clients > data.len() {
        return Err(LearnerError::TooManyClients {
            clients: n_clients,
            samples: data.len(),
        });
    }
    let mut g = StreamRng::root(spec.seed, Purpose::Partition).generator();
    let mut assignment: Vec<Vec<usize>> = match spec.mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut g);
            equal_chunks(&idx, n_clients)
        }
        PartitionMode::LabelShard { shards_per_client } => {
            let shards = n_clients * shards_per_client;
            if shards_per_client == 0 || shards > data.len() {
                return Err(LearnerError::InvalidArgument(format!(
                    "{shards} shards for {} samples",
                    data.len()
                )));
            }
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.sort_by_key(|&i| data.labels()[i]);
            let pieces = equal_chunks(&idx, shards);
            let mut order: Vec<usize> = (0..shards).collect();
            order.shuffle(&mut g);
            order
                .chunks(shards_per_client)
                .map(|ids| ids.iter().flat_map(|&s| pieces[s].iter().copied()).collect())
                .collect()
        }
        PartitionMode::Dirichlet { alpha } => {
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|e| LearnerError::InvalidArgument(format!("dirichlet alpha {alpha}: {e}")))?;
            let mut clients = vec![Vec::new(); n_clients];
            for class in 0..data.num_classes() {
                let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == class).collect();
                if members.is_empty() {
                    continue;
                }
                members.shuffle(&mut g);
                let draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut g)).collect();
                let total: f64 = draws.iter().sum();
                let m = members.len();
                let mut cum = 0.0;
                let mut start = 0;
                for (c, d) in draws.iter().enumerate() {
                    cum += d;
                    let end = if c + 1 == n_clients {
                        m
                    } else if total > 0.0 {
                        ((cum / total) * m as f64).round().clamp(start as f64, m as f64) as usize
                    } else {
                        start
                    };
                    clients[c].extend_from_slice(&members[start..end]);
                    start = end;
                }
            }
            // Repair: empty clients take one sample from the currently largest client.
            while let Some(empty) = clients.iter().position(Vec::is_empty) {
                let donor = (0..n_clients)
                    .max_by_key(|&c| (clients[c].len(), std::cmp::Reverse(c)))
                    .expect("n_clients >= 1");
                let moved = clients[donor].pop().expect("donor has at least two samples");
                clients[empty].push(moved);
            }
            clients
        }
    };
    assignment
        .iter_mut()
        .map(|idx| {
            idx.sort_unstable();
            data.subset(idx)
        })
        .collect()
}
